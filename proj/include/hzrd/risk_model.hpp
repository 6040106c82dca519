#pragma once

#include "hzrd/random.hpp"
#include "hzrd/survival.hpp"

#include <Eigen/Dense>

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace hzrd {

// A set of covariate sequences laid out for batched evaluation: one row per
// subject, columns slot-major then feature.
struct FeatureBatch {
    RowMatrix x;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> present;  // n x L
    std::size_t dimension = 0;
    std::size_t sequence_length = 0;

    static FeatureBatch from(const Cohort& cohort);
    static FeatureBatch from(const CovariateSequence& seq);

    Eigen::Index rows() const noexcept { return x.rows(); }
    FeatureBatch select(std::span<const std::size_t> indices) const;
};

// Inverted dropout: each entry is 0 with probability `rate`, else 1 / (1 - rate).
Eigen::MatrixXd draw_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);
Eigen::VectorXd apply_dropout(const Eigen::VectorXd& v, double rate, Rng& rng);

// Supplies dropout masks to a forward pass. `sample` draws fresh masks,
// `replay` hands back masks recorded by an earlier pass (so finite
// differences see the same network), `off` disables dropout.
class DropoutMasks {
public:
    static DropoutMasks off() { return DropoutMasks(); }
    static DropoutMasks sample(Rng& rng);
    static DropoutMasks replay(std::vector<Eigen::MatrixXd> masks);

    bool enabled() const noexcept { return mode_ != Mode::Off; }
    // Empty matrix when disabled or rate == 0.
    Eigen::MatrixXd next(Eigen::Index rows, Eigen::Index cols, double rate);

private:
    enum class Mode { Off, Sample, Replay };
    Mode mode_ = Mode::Off;
    Rng* rng_ = nullptr;
    std::deque<Eigen::MatrixXd> queue_;
};

// Intermediate values kept by forward() for backward().
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> saved;
    std::vector<Eigen::MatrixXd> masks;
};

enum class ModelKind : std::uint8_t { Linear = 1, Mlp = 2, Lstm = 3 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

// psi = beta . flatten(seq)
class LinearRiskModel {
public:
    LinearRiskModel(std::size_t dimension, std::size_t sequence_length);
    static LinearRiskModel glorot(std::size_t dimension, std::size_t sequence_length, Rng& rng);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t sequence_length() const noexcept { return sequence_length_; }
    const Eigen::VectorXd& parameters() const noexcept { return beta_; }
    Eigen::VectorXd& parameters() noexcept { return beta_; }
    const Eigen::VectorXd& beta() const noexcept { return beta_; }

    Eigen::VectorXd forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace) const;
    void backward(const FeatureBatch& batch, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                  Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const;

private:
    std::size_t dimension_;
    std::size_t sequence_length_;
    Eigen::VectorXd beta_;
};

// Affine layers with ReLU between them; the last layer maps to a scalar.
// Dropout hits the flattened input and every hidden activation.
//
// Parameter block order: for each layer, W (out x in, column-major) then b.
class MlpRiskModel {
public:
    // `hidden` lists hidden-layer widths; empty means a single affine map.
    MlpRiskModel(std::size_t dimension, std::size_t sequence_length, std::vector<std::size_t> hidden,
                 double dropout_rate);
    static MlpRiskModel glorot(std::size_t dimension, std::size_t sequence_length, std::vector<std::size_t> hidden,
                               double dropout_rate, Rng& rng);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t sequence_length() const noexcept { return sequence_length_; }
    // Input width, hidden widths, 1.
    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t layer_count() const noexcept { return widths_.size() - 1; }
    double dropout_rate() const noexcept { return dropout_rate_; }
    void set_dropout_rate(double rate);

    const Eigen::VectorXd& parameters() const noexcept { return params_; }
    Eigen::VectorXd& parameters() noexcept { return params_; }

    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
    Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
    Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

    Eigen::VectorXd forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace) const;
    void backward(const FeatureBatch& batch, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                  Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const;

private:
    std::size_t offset(std::size_t layer) const { return offsets_[layer]; }

    std::size_t dimension_;
    std::size_t sequence_length_;
    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
    double dropout_rate_;
    Eigen::VectorXd params_;
};

// Single-layer LSTM read oldest slot first; psi = w . dropout(h_last) + c.
// With skip_padding, absent slots leave the state untouched.
//
// Parameter block order: W (4h x d), U (4h x h), b (4h), head w (h), head c (1).
// Gate rows inside the 4h blocks: input, forget, candidate, output.
class LstmRiskModel {
public:
    LstmRiskModel(std::size_t dimension, std::size_t sequence_length, std::size_t hidden, double dropout_rate,
                  bool skip_padding = false);
    static LstmRiskModel glorot(std::size_t dimension, std::size_t sequence_length, std::size_t hidden,
                                double dropout_rate, bool skip_padding, Rng& rng);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t sequence_length() const noexcept { return sequence_length_; }
    std::size_t hidden() const noexcept { return hidden_; }
    bool skip_padding() const noexcept { return skip_padding_; }
    void set_skip_padding(bool on) noexcept { skip_padding_ = on; }
    double dropout_rate() const noexcept { return dropout_rate_; }
    void set_dropout_rate(double rate);

    const Eigen::VectorXd& parameters() const noexcept { return params_; }
    Eigen::VectorXd& parameters() noexcept { return params_; }

    Eigen::Map<const Eigen::MatrixXd> input_weights() const;
    Eigen::Map<Eigen::MatrixXd> input_weights();
    Eigen::Map<const Eigen::MatrixXd> recurrent_weights() const;
    Eigen::Map<Eigen::MatrixXd> recurrent_weights();
    Eigen::Map<const Eigen::VectorXd> gate_bias() const;
    Eigen::Map<Eigen::VectorXd> gate_bias();
    Eigen::Map<const Eigen::VectorXd> head_weights() const;
    Eigen::Map<Eigen::VectorXd> head_weights();
    double head_bias() const { return params_[static_cast<Eigen::Index>(params_.size() - 1)]; }

    // Accepts sequences of any length with matching d.
    Eigen::VectorXd forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace) const;
    void backward(const FeatureBatch& batch, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                  Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs) const;

private:
    std::size_t dimension_;
    std::size_t sequence_length_;
    std::size_t hidden_;
    double dropout_rate_;
    bool skip_padding_;
    Eigen::VectorXd params_;
};

struct ModelSpec {
    ModelKind kind = ModelKind::Linear;
    std::vector<std::size_t> mlp_hidden{128};
    std::size_t lstm_hidden = 64;
    bool skip_padding = false;
};

// Log-risk function psi with a training-mode flag (enables dropout).
class RiskModel {
public:
    using Variant = std::variant<LinearRiskModel, MlpRiskModel, LstmRiskModel>;

    RiskModel(Variant model) : model_(std::move(model)) {}  // NOLINT(google-explicit-constructor)
    template <typename M>
        requires(!std::same_as<std::remove_cvref_t<M>, RiskModel> && std::constructible_from<Variant, M>)
    RiskModel(M&& model) : model_(std::forward<M>(model)) {}  // NOLINT(google-explicit-constructor)

    ModelKind kind() const noexcept;
    const Variant& variant() const noexcept { return model_; }
    Variant& variant() noexcept { return model_; }

    bool training() const noexcept { return training_; }
    void set_training(bool on) noexcept { training_ = on; }

    std::size_t dimension() const;
    std::size_t sequence_length() const;
    std::size_t parameter_count() const { return static_cast<std::size_t>(parameters().size()); }
    const Eigen::VectorXd& parameters() const;
    void set_parameters(const Eigen::VectorXd& params);
    double dropout_rate() const;
    void set_dropout_rate(double rate);

    // In evaluation mode `masks` is ignored and dropout never applies.
    Eigen::VectorXd forward(const FeatureBatch& batch, DropoutMasks& masks, ForwardTrace* trace = nullptr) const;
    Eigen::VectorXd evaluate(const FeatureBatch& batch) const;
    // Adds upstream-weighted d psi / d theta into `grad`.
    void backward(const FeatureBatch& batch, const ForwardTrace& trace, const Eigen::VectorXd& upstream,
                  Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* grad_inputs = nullptr) const;

private:
    Variant model_;
    bool training_ = false;
};

RiskModel make_model(const ModelSpec& spec, std::size_t dimension, std::size_t sequence_length, double dropout_rate,
                     Rng& rng);

double risk_forward(const RiskModel& model, const CovariateSequence& seq, Rng* rng = nullptr);

struct RiskGradients {
    Eigen::VectorXd parameters;
    RowMatrix inputs;  // L x d
};

// Gradients of upstream * psi. In training mode a single dropout mask is drawn
// from `rng` and shared by the forward and backward passes.
RiskGradients risk_gradients(const RiskModel& model, const CovariateSequence& seq, double upstream,
                             Rng* rng = nullptr);

}  // namespace hzrd
