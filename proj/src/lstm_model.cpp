#include "hzrd/risk_model.hpp"

#include "model_detail.hpp"

namespace hzrd {

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& a) { return 1.0 / (1.0 + (-a).exp()); }

}  // namespace

LstmRiskModel::LstmRiskModel(std::size_t dimension, std::size_t sequence_length, std::size_t hidden,
                             double dropout_rate, bool skip_padding)
    : dimension_(dimension), sequence_length_(sequence_length), hidden_(hidden), dropout_rate_(dropout_rate),
      skip_padding_(skip_padding) {
    if (dimension == 0 || sequence_length == 0 || hidden == 0)
        throw std::invalid_argument("LSTM needs d >= 1, L >= 1 and hidden size >= 1");
    detail::check_dropout_rate(dropout_rate);
    const std::size_t total = 4 * hidden * (dimension + hidden + 1) + hidden + 1;
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

LstmRiskModel LstmRiskModel::glorot(std::size_t dimension, std::size_t sequence_length, std::size_t hidden,
                                    double dropout_rate, bool skip_padding, Rng& rng) {
    LstmRiskModel m(dimension, sequence_length, hidden, dropout_rate, skip_padding);
    const auto h = static_cast<Eigen::Index>(hidden);
    auto w = m.input_weights();
    auto u = m.recurrent_weights();
    for (Eigen::Index gate = 0; gate < 4; ++gate) {
        auto wb = w.middleRows(gate * h, h);
        detail::glorot_fill(wb, dimension, hidden, rng);
        auto ub = u.middleRows(gate * h, h);
        detail::glorot_fill(ub, hidden, hidden, rng);
    }
    m.gate_bias().segment(h, h).setOnes();
    auto head = m.head_weights();
    detail::glorot_fill(head, hidden, 1, rng);
    return m;
}

void LstmRiskModel::set_dropout_rate(double rate) {
    detail::check_dropout_rate(rate);
    dropout_rate_ = rate;
}

Eigen::Map<const Eigen::MatrixXd> LstmRiskModel::input_weights() const {
    return {params_.data(), static_cast<Eigen::Index>(4 * hidden_), static_cast<Eigen::Index>(dimension_)};
}
Eigen::Map<Eigen::MatrixXd> LstmRiskModel::input_weights() {
    return {params_.data(), static_cast<Eigen::Index>(4 * hidden_), static_cast<Eigen::Index>(dimension_)};
}
Eigen::Map<const Eigen::MatrixXd> LstmRiskModel::recurrent_weights() const {
    return {params_.data() + 4 * hidden_ * dimension_, static_cast<Eigen::Index>(4 * hidden_),
            static_cast<Eigen::Index>(hidden_)};
}
Eigen::Map<Eigen::MatrixXd> LstmRiskModel::recurrent_weights() {
    return {params_.data() + 4 * hidden_ * dimension_, static_cast<Eigen::Index>(4 * hidden_),
            static_cast<Eigen::Index>(hidden_)};
}
Eigen::Map<const Eigen::VectorXd> LstmRiskModel::gate_bias() const {
    return {params_.data() + 4 * hidden_ * (dimension_ + hidden_), static_cast<Eigen::Index>(4 * hidden_)};
}
Eigen::Map<Eigen::VectorXd> LstmRiskModel::gate_bias() {
    return {params_.data() + 4 * hidden_ * (dimension_ + hidden_), static_cast<Eigen::Index>(4 * hidden_)};
}
Eigen::Map<const Eigen::VectorXd> LstmRiskModel::head_weights() const {
    return {params_.data() + 4 * hidden_ * (dimension_ + hidden_ + 1), static_cast<Eigen::Index>(hidden_)};
}
Eigen::Map<Eigen::VectorXd> LstmRiskModel::head_weights() {
    return {params_.data() + 4 * hidden_ * (dimension_ + hidden_ + 1), static_cast<Eigen::Index>(hidden_)};
}

// trace.saved: per step (h_prev, c_prev, gates, c_new), then the final hidden
// state. trace.masks[0] is the dropout mask on the final hidden state.
Eigen::VectorXd LstmRiskModel::forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace) const {
    if (batch.dimension != dimension_ || batch.x.cols() != static_cast<Eigen::Index>(batch.dimension *
                                                                                     batch.sequence_length))
        throw DataError(DataError::Code::DimensionMismatch, "dimension mismatch: LSTM expects d=" +
                                                                std::to_string(dimension_));
    const Eigen::Index n = batch.rows();
    const auto h = static_cast<Eigen::Index>(hidden_);
    const auto d = static_cast<Eigen::Index>(dimension_);
    const auto w = input_weights();
    const auto u = recurrent_weights();
    const Eigen::RowVectorXd b = gate_bias().transpose();

    if (trace) {
        trace->saved.clear();
        trace->masks.clear();
    }
    Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(n, h);
    Eigen::MatrixXd cs = Eigen::MatrixXd::Zero(n, h);
    for (std::size_t t = 0; t < batch.sequence_length; ++t) {
        const auto step = static_cast<Eigen::Index>(t);
        Eigen::MatrixXd pre = batch.x.middleCols(step * d, d) * w.transpose() + hs * u.transpose();
        pre.rowwise() += b;
        Eigen::MatrixXd gates(n, 4 * h);
        gates.leftCols(2 * h) = sigmoid(pre.leftCols(2 * h).array());
        gates.middleCols(2 * h, h) = pre.middleCols(2 * h, h).array().tanh();
        gates.rightCols(h) = sigmoid(pre.rightCols(h).array());

        Eigen::MatrixXd c_new = gates.middleCols(h, h).cwiseProduct(cs) +
                                gates.leftCols(h).cwiseProduct(gates.middleCols(2 * h, h));
        Eigen::MatrixXd h_new = gates.rightCols(h).cwiseProduct(Eigen::MatrixXd(c_new.array().tanh()));
        if (skip_padding_) {
            for (Eigen::Index r = 0; r < n; ++r) {
                if (!batch.present(r, step)) {
                    c_new.row(r) = cs.row(r);
                    h_new.row(r) = hs.row(r);
                }
            }
        }
        detail::require_finite(h_new, "layer " + std::to_string(t) + " (LSTM step)");
        if (trace) {
            trace->saved.push_back(hs);
            trace->saved.push_back(cs);
            trace->saved.push_back(std::move(gates));
            trace->saved.push_back(c_new);
        }
        hs = std::move(h_new);
        cs = std::move(c_new);
    }

    Eigen::MatrixXd mask = masks.next(n, h, dropout_rate_);
    Eigen::MatrixXd out = mask.size() > 0 ? Eigen::MatrixXd(hs.cwiseProduct(mask)) : hs;
    Eigen::VectorXd psi = out * head_weights();
    psi.array() += head_bias();
    detail::require_finite(psi, "layer " + std::to_string(batch.sequence_length) + " (output head)");
    if (trace) {
        trace->saved.push_back(std::move(out));
        trace->masks.push_back(std::move(mask));
    }
    return psi;
}

void LstmRiskModel::backward(const FeatureBatch& batch, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                             Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const {
    const Eigen::Index n = batch.rows();
    const auto h = static_cast<Eigen::Index>(hidden_);
    const auto d = static_cast<Eigen::Index>(dimension_);
    const auto steps = static_cast<Eigen::Index>(batch.sequence_length);
    const auto w = input_weights();
    const auto u = recurrent_weights();

    const Eigen::Index w_off = 0;
    const Eigen::Index u_off = 4 * h * d;
    const Eigen::Index b_off = u_off + 4 * h * h;
    const Eigen::Index head_off = b_off + 4 * h;

    const Eigen::MatrixXd& out = trace.saved.back();
    Eigen::VectorXd g_head = out.transpose() * upstream;
    detail::require_finite(g_head, "parameter block head");
    grad.segment(head_off, h) += g_head;
    grad[head_off + h] += upstream.sum();

    Eigen::MatrixXd dh = upstream * head_weights().transpose();
    const Eigen::MatrixXd& mask = trace.masks.front();
    if (mask.size() > 0) dh = dh.cwiseProduct(mask);
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(n, h);

    Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(4 * h, d);
    Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(4 * h, h);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(4 * h);
    if (grad_inputs) grad_inputs->setZero(n, d * steps);

    for (Eigen::Index t = steps; t-- > 0;) {
        const auto base = static_cast<std::size_t>(4 * t);
        const Eigen::MatrixXd& h_prev = trace.saved[base];
        const Eigen::MatrixXd& c_prev = trace.saved[base + 1];
        const Eigen::MatrixXd& gates = trace.saved[base + 2];
        const Eigen::MatrixXd& c_new = trace.saved[base + 3];

        const Eigen::ArrayXXd ig = gates.leftCols(h).array();
        const Eigen::ArrayXXd fg = gates.middleCols(h, h).array();
        const Eigen::ArrayXXd cg = gates.middleCols(2 * h, h).array();
        const Eigen::ArrayXXd og = gates.rightCols(h).array();
        const Eigen::ArrayXXd tc = c_new.array().tanh();

        const Eigen::ArrayXXd dc_total = dc.array() + dh.array() * og * (1.0 - tc.square());
        Eigen::MatrixXd dpre(n, 4 * h);
        dpre.leftCols(h) = dc_total * cg * ig * (1.0 - ig);
        dpre.middleCols(h, h) = dc_total * c_prev.array() * fg * (1.0 - fg);
        dpre.middleCols(2 * h, h) = dc_total * ig * (1.0 - cg.square());
        dpre.rightCols(h) = dh.array() * tc * og * (1.0 - og);
        Eigen::MatrixXd dc_prev = dc_total * fg;

        if (skip_padding_) {
            for (Eigen::Index r = 0; r < n; ++r) {
                if (!batch.present(r, t)) {
                    dpre.row(r).setZero();
                    dc_prev.row(r) = dc.row(r);
                }
            }
        }

        const Eigen::MatrixXd x_t = batch.x.middleCols(t * d, d);
        gw.noalias() += dpre.transpose() * x_t;
        gu.noalias() += dpre.transpose() * h_prev;
        gb += dpre.colwise().sum().transpose();

        Eigen::MatrixXd dh_prev = dpre * u;
        if (skip_padding_) {
            for (Eigen::Index r = 0; r < n; ++r)
                if (!batch.present(r, t)) dh_prev.row(r) = dh.row(r);
        }
        if (grad_inputs) grad_inputs->middleCols(t * d, d) = dpre * w;
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    detail::require_finite(gw, "parameter block W");
    detail::require_finite(gu, "parameter block U");
    detail::require_finite(gb, "parameter block b");
    grad.segment(w_off, 4 * h * d) += Eigen::Map<const Eigen::VectorXd>(gw.data(), gw.size());
    grad.segment(u_off, 4 * h * h) += Eigen::Map<const Eigen::VectorXd>(gu.data(), gu.size());
    grad.segment(b_off, 4 * h) += gb;
}

}  // namespace hzrd
