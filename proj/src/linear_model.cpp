#include "hzrd/risk_model.hpp"

#include "model_detail.hpp"

namespace hzrd {

LinearRiskModel::LinearRiskModel(std::size_t dimension, std::size_t sequence_length)
    : dimension_(dimension), sequence_length_(sequence_length),
      beta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension * sequence_length))) {
    if (dimension == 0 || sequence_length == 0) throw std::invalid_argument("linear model needs d >= 1 and L >= 1");
}

LinearRiskModel LinearRiskModel::glorot(std::size_t dimension, std::size_t sequence_length, Rng& rng) {
    LinearRiskModel m(dimension, sequence_length);
    detail::glorot_fill(m.beta_, m.beta_.size(), 1, rng);
    return m;
}

Eigen::VectorXd LinearRiskModel::forward(const FeatureBatch& batch, DropoutMasks&, ForwardTrace*) const {
    if (batch.x.cols() != beta_.size())
        throw DataError(DataError::Code::DimensionMismatch, "dimension mismatch: flattened input width " +
                                                                std::to_string(batch.x.cols()) + " vs " +
                                                                std::to_string(beta_.size()) + " coefficients");
    Eigen::VectorXd psi = batch.x * beta_;
    detail::require_finite(psi, "layer 0 (linear predictor)");
    return psi;
}

void LinearRiskModel::backward(const FeatureBatch& batch, const ForwardTrace&, const Eigen::VectorXd& upstream,
                               Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const {
    Eigen::VectorXd g = batch.x.transpose() * upstream;
    detail::require_finite(g, "parameter block beta");
    grad += g;
    if (grad_inputs) *grad_inputs = upstream * beta_.transpose();
}

}  // namespace hzrd
