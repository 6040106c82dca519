#include "hzrd/risk_model.hpp"

#include "model_detail.hpp"

#include <stdexcept>

namespace hzrd {

FeatureBatch FeatureBatch::from(const Cohort& cohort) {
    FeatureBatch b;
    b.dimension = cohort.dimension();
    b.sequence_length = cohort.sequence_length();
    const auto n = static_cast<Eigen::Index>(cohort.size());
    const auto width = static_cast<Eigen::Index>(b.dimension * b.sequence_length);
    b.x.resize(n, width);
    b.present.resize(n, static_cast<Eigen::Index>(b.sequence_length));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& seq = cohort[static_cast<std::size_t>(i)].covariates;
        if (seq.dimension() != b.dimension || seq.length() != b.sequence_length)
            throw DataError(DataError::Code::DimensionMismatch, "dimension mismatch while batching cohort");
        b.x.row(i) = seq.flattened().transpose();
        for (std::size_t k = 0; k < b.sequence_length; ++k) b.present(i, static_cast<Eigen::Index>(k)) = seq.present(k);
    }
    return b;
}

FeatureBatch FeatureBatch::from(const CovariateSequence& seq) {
    FeatureBatch b;
    b.dimension = seq.dimension();
    b.sequence_length = seq.length();
    b.x = seq.flattened().transpose();
    b.present.resize(1, static_cast<Eigen::Index>(seq.length()));
    for (std::size_t k = 0; k < seq.length(); ++k) b.present(0, static_cast<Eigen::Index>(k)) = seq.present(k);
    return b;
}

FeatureBatch FeatureBatch::select(std::span<const std::size_t> indices) const {
    FeatureBatch b;
    b.dimension = dimension;
    b.sequence_length = sequence_length;
    b.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
    b.present.resize(static_cast<Eigen::Index>(indices.size()), present.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = static_cast<Eigen::Index>(indices[r]);
        b.x.row(static_cast<Eigen::Index>(r)) = x.row(src);
        b.present.row(static_cast<Eigen::Index>(r)) = present.row(src);
    }
    return b;
}

Eigen::MatrixXd draw_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    detail::check_dropout_rate(rate);
    const double keep_scale = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd mask(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = u(rng) < rate ? 0.0 : keep_scale;
    return mask;
}

Eigen::VectorXd apply_dropout(const Eigen::VectorXd& v, double rate, Rng& rng) {
    detail::check_dropout_rate(rate);
    if (rate == 0.0) return v;
    Eigen::MatrixXd mask = draw_dropout_mask(v.size(), 1, rate, rng);
    return v.cwiseProduct(mask.col(0));
}

DropoutMasks DropoutMasks::sample(Rng& rng) {
    DropoutMasks m;
    m.mode_ = Mode::Sample;
    m.rng_ = &rng;
    return m;
}

DropoutMasks DropoutMasks::replay(std::vector<Eigen::MatrixXd> masks) {
    DropoutMasks m;
    m.mode_ = Mode::Replay;
    for (auto& mask : masks) m.queue_.push_back(std::move(mask));
    return m;
}

Eigen::MatrixXd DropoutMasks::next(Eigen::Index rows, Eigen::Index cols, double rate) {
    detail::check_dropout_rate(rate);
    if (mode_ == Mode::Off || rate == 0.0) return {};
    if (mode_ == Mode::Sample) return draw_dropout_mask(rows, cols, rate, *rng_);
    if (queue_.empty()) throw std::logic_error("dropout replay ran out of recorded masks");
    Eigen::MatrixXd mask = std::move(queue_.front());
    queue_.pop_front();
    if (mask.rows() != rows || mask.cols() != cols) throw std::logic_error("replayed dropout mask has wrong shape");
    return mask;
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Linear: return "linear";
        case ModelKind::Mlp: return "mlp";
        case ModelKind::Lstm: return "lstm";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "linear") return ModelKind::Linear;
    if (name == "mlp") return ModelKind::Mlp;
    if (name == "lstm") return ModelKind::Lstm;
    throw std::invalid_argument("unknown model '" + name + "' (expected linear, mlp or lstm)");
}

ModelKind RiskModel::kind() const noexcept {
    switch (model_.index()) {
        case 0: return ModelKind::Linear;
        case 1: return ModelKind::Mlp;
        default: return ModelKind::Lstm;
    }
}

std::size_t RiskModel::dimension() const {
    return std::visit([](const auto& m) { return m.dimension(); }, model_);
}

std::size_t RiskModel::sequence_length() const {
    return std::visit([](const auto& m) { return m.sequence_length(); }, model_);
}

const Eigen::VectorXd& RiskModel::parameters() const {
    return std::visit([](const auto& m) -> const Eigen::VectorXd& { return m.parameters(); }, model_);
}

void RiskModel::set_parameters(const Eigen::VectorXd& params) {
    std::visit(
        [&](auto& m) {
            if (m.parameters().size() != params.size())
                throw std::invalid_argument("parameter vector has the wrong length");
            m.parameters() = params;
        },
        model_);
}

double RiskModel::dropout_rate() const {
    if (const auto* mlp = std::get_if<MlpRiskModel>(&model_)) return mlp->dropout_rate();
    if (const auto* lstm = std::get_if<LstmRiskModel>(&model_)) return lstm->dropout_rate();
    return 0.0;
}

void RiskModel::set_dropout_rate(double rate) {
    detail::check_dropout_rate(rate);
    if (auto* mlp = std::get_if<MlpRiskModel>(&model_)) mlp->set_dropout_rate(rate);
    if (auto* lstm = std::get_if<LstmRiskModel>(&model_)) lstm->set_dropout_rate(rate);
}

namespace {

void check_batch_dimension(const RiskModel& model, const FeatureBatch& batch) {
    if (batch.dimension != model.dimension())
        throw DataError(DataError::Code::DimensionMismatch, "dimension mismatch: model d=" +
                                                                std::to_string(model.dimension()) + ", input d=" +
                                                                std::to_string(batch.dimension));
}

}  // namespace

Eigen::VectorXd RiskModel::forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace) const {
    check_batch_dimension(*this, batch);
    DropoutMasks off = DropoutMasks::off();
    DropoutMasks& active = training_ ? masks : off;
    return std::visit([&](const auto& m) { return m.forward(batch, active, trace); }, model_);
}

Eigen::VectorXd RiskModel::evaluate(const FeatureBatch& batch) const {
    check_batch_dimension(*this, batch);
    DropoutMasks off = DropoutMasks::off();
    return std::visit([&](const auto& m) { return m.forward(batch, off, nullptr); }, model_);
}

void RiskModel::backward(const FeatureBatch& batch, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                         Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const {
    if (grad.size() != parameters().size()) throw std::invalid_argument("gradient buffer has the wrong length");
    std::visit([&](const auto& m) { m.backward(batch, trace, upstream, grad, grad_inputs); }, model_);
}

RiskModel make_model(const ModelSpec& spec, std::size_t dimension, std::size_t sequence_length, double dropout_rate,
                     Rng& rng) {
    switch (spec.kind) {
        case ModelKind::Linear: return RiskModel(LinearRiskModel::glorot(dimension, sequence_length, rng));
        case ModelKind::Mlp:
            return RiskModel(MlpRiskModel::glorot(dimension, sequence_length, spec.mlp_hidden, dropout_rate, rng));
        case ModelKind::Lstm:
            return RiskModel(LstmRiskModel::glorot(dimension, sequence_length, spec.lstm_hidden, dropout_rate,
                                                   spec.skip_padding, rng));
    }
    throw std::invalid_argument("unknown model kind");
}

double risk_forward(const RiskModel& model, const CovariateSequence& seq, Rng* rng) {
    const FeatureBatch batch = FeatureBatch::from(seq);
    if (model.training() && rng == nullptr) throw std::invalid_argument("training-mode forward needs an RNG");
    DropoutMasks masks = rng ? DropoutMasks::sample(*rng) : DropoutMasks::off();
    return model.forward(batch, masks)[0];
}

RiskGradients risk_gradients(const RiskModel& model, const CovariateSequence& seq, double upstream, Rng* rng) {
    const FeatureBatch batch = FeatureBatch::from(seq);
    if (model.training() && rng == nullptr) throw std::invalid_argument("training-mode gradients need an RNG");
    DropoutMasks masks = rng ? DropoutMasks::sample(*rng) : DropoutMasks::off();
    ForwardTrace trace;
    model.forward(batch, masks, &trace);

    RiskGradients out;
    out.parameters = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
    RowMatrix inputs;
    model.backward(batch, trace, Eigen::VectorXd::Constant(1, upstream), out.parameters, &inputs);
    out.inputs = Eigen::Map<const RowMatrix>(inputs.data(), static_cast<Eigen::Index>(seq.length()),
                                             static_cast<Eigen::Index>(seq.dimension()));
    return out;
}

}  // namespace hzrd
