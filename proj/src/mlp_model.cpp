#include "hzrd/risk_model.hpp"

#include "model_detail.hpp"

namespace hzrd {

MlpRiskModel::MlpRiskModel(std::size_t dimension, std::size_t sequence_length, std::vector<std::size_t> hidden,
                           double dropout_rate)
    : dimension_(dimension), sequence_length_(sequence_length), dropout_rate_(dropout_rate) {
    if (dimension == 0 || sequence_length == 0) throw std::invalid_argument("MLP needs d >= 1 and L >= 1");
    detail::check_dropout_rate(dropout_rate);
    widths_.push_back(dimension * sequence_length);
    for (auto w : hidden) {
        if (w == 0) throw std::invalid_argument("MLP hidden widths must be positive");
        widths_.push_back(w);
    }
    widths_.push_back(1);
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offsets_.push_back(total);
        total += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

MlpRiskModel MlpRiskModel::glorot(std::size_t dimension, std::size_t sequence_length, std::vector<std::size_t> hidden,
                                  double dropout_rate, Rng& rng) {
    MlpRiskModel m(dimension, sequence_length, std::move(hidden), dropout_rate);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        auto w = m.weight(l);
        detail::glorot_fill(w, m.widths_[l], m.widths_[l + 1], rng);
    }
    return m;
}

void MlpRiskModel::set_dropout_rate(double rate) {
    detail::check_dropout_rate(rate);
    dropout_rate_ = rate;
}

Eigen::Map<const Eigen::MatrixXd> MlpRiskModel::weight(std::size_t layer) const {
    return {params_.data() + offset(layer), static_cast<Eigen::Index>(widths_[layer + 1]),
            static_cast<Eigen::Index>(widths_[layer])};
}

Eigen::Map<Eigen::MatrixXd> MlpRiskModel::weight(std::size_t layer) {
    return {params_.data() + offset(layer), static_cast<Eigen::Index>(widths_[layer + 1]),
            static_cast<Eigen::Index>(widths_[layer])};
}

Eigen::Map<const Eigen::VectorXd> MlpRiskModel::bias(std::size_t layer) const {
    return {params_.data() + offset(layer) + widths_[layer + 1] * widths_[layer],
            static_cast<Eigen::Index>(widths_[layer + 1])};
}

Eigen::Map<Eigen::VectorXd> MlpRiskModel::bias(std::size_t layer) {
    return {params_.data() + offset(layer) + widths_[layer + 1] * widths_[layer],
            static_cast<Eigen::Index>(widths_[layer + 1])};
}

// trace.saved holds A_0, Z_0, A_1, Z_1, ..., A_last where A_l is the (masked)
// input of layer l and Z_l its pre-activation; trace.masks[l] is the mask
// applied to A_l (empty when dropout is off).
Eigen::VectorXd MlpRiskModel::forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace) const {
    if (static_cast<std::size_t>(batch.x.cols()) != widths_.front())
        throw DataError(DataError::Code::DimensionMismatch, "dimension mismatch: flattened input width " +
                                                                std::to_string(batch.x.cols()) + " vs " +
                                                                std::to_string(widths_.front()));
    const Eigen::Index n = batch.rows();
    Eigen::MatrixXd a = batch.x;
    if (trace) {
        trace->saved.clear();
        trace->masks.clear();
    }
    for (std::size_t l = 0; l < layer_count(); ++l) {
        Eigen::MatrixXd mask = masks.next(n, a.cols(), dropout_rate_);
        if (mask.size() > 0) a = a.cwiseProduct(mask);
        Eigen::MatrixXd z = a * weight(l).transpose();
        z.rowwise() += bias(l).transpose();
        detail::require_finite(z, "layer " + std::to_string(l));
        if (trace) {
            trace->saved.push_back(a);
            trace->masks.push_back(std::move(mask));
        }
        if (l + 1 == layer_count()) return z.col(0);
        a = z.cwiseMax(0.0);
        if (trace) trace->saved.push_back(std::move(z));
    }
    return {};
}

void MlpRiskModel::backward(const FeatureBatch&, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                            Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const {
    Eigen::MatrixXd dz = upstream;
    for (std::size_t l = layer_count(); l-- > 0;) {
        const Eigen::MatrixXd& a = trace.saved[2 * l];
        const std::size_t off = offset(l);
        const auto out = static_cast<Eigen::Index>(widths_[l + 1]);
        const auto in = static_cast<Eigen::Index>(widths_[l]);
        Eigen::MatrixXd gw = dz.transpose() * a;
        Eigen::VectorXd gb = dz.colwise().sum().transpose();
        detail::require_finite(gw, "parameter block W" + std::to_string(l));
        detail::require_finite(gb, "parameter block b" + std::to_string(l));
        Eigen::Map<Eigen::MatrixXd>(grad.data() + off, out, in) += gw;
        Eigen::Map<Eigen::VectorXd>(grad.data() + off + out * in, out) += gb;

        if (l == 0 && !grad_inputs) break;
        Eigen::MatrixXd da = dz * weight(l);
        const Eigen::MatrixXd& mask = trace.masks[l];
        if (mask.size() > 0) da = da.cwiseProduct(mask);
        if (l == 0) {
            *grad_inputs = da;
            break;
        }
        const Eigen::MatrixXd& z_prev = trace.saved[2 * (l - 1) + 1];
        dz = (z_prev.array() > 0.0).select(da, 0.0);
    }
}

}  // namespace hzrd
