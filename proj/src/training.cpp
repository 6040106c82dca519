#include "hzrd/training.hpp"

#include "hzrd/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace hzrd {

namespace {

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid training config: " + what); };
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (max_epochs == 0) fail("max_epochs must be >= 1");
    if (!(min_delta >= 0.0)) fail("min_delta must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam beta2 must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) fail("adam epsilon must be > 0");
    for (double f : {train_fraction, val_fraction, test_fraction})
        if (!(f > 0.0 && f < 1.0)) fail("split fractions must lie in (0, 1)");
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) fail("split fractions must sum to 1");
    if (folds < 2) fail("folds must be >= 2");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const TrainConfig& config) {
    if (grads.size() != params.size()) throw std::invalid_argument("Adam: gradient and parameter sizes differ");
    if (!grads.allFinite()) {
        Eigen::Index bad = 0;
        for (; bad < grads.size() && std::isfinite(grads[bad]); ++bad) {
        }
        throw NumericError("Adam: non-finite gradient at parameter " + std::to_string(bad) + " (step " +
                           std::to_string(state.step + 1) + ")");
    }
    if (state.first_moment.size() != params.size()) {
        state.first_moment = Eigen::VectorXd::Zero(params.size());
        state.second_moment = Eigen::VectorXd::Zero(params.size());
        state.step = 0;
    }
    ++state.step;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads;
    state.second_moment = b2 * state.second_moment + (1.0 - b2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    params.array() -= config.learning_rate * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + config.adam_epsilon);
}

double TrainHistory::best_val_loss() const {
    if (best_epoch == 0 || best_epoch > val_loss.size()) return std::numeric_limits<double>::quiet_NaN();
    return val_loss[best_epoch - 1];
}

ModelLossGradient model_loss_gradient(const RiskModel& model, const FeatureBatch& batch, const RiskSetIndex& index,
                                      double deceased, DropoutMasks& masks) {
    ForwardTrace trace;
    const Eigen::VectorXd psi = model.forward(batch, masks, &trace);
    const LossGradient lg =
        partial_likelihood_loss_gradient(std::span<const double>(psi.data(), static_cast<std::size_t>(psi.size())),
                                         index, deceased);
    ModelLossGradient out;
    out.loss = lg.loss;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
    model.backward(batch, trace, lg.gradient, out.gradient);
    return out;
}

double cohort_loss(const RiskModel& model, const Cohort& cohort) {
    const FeatureBatch batch = FeatureBatch::from(cohort);
    const Eigen::VectorXd psi = model.evaluate(batch);
    const RiskSetIndex index = build_risk_sets(cohort);
    return neg_avg_partial_log_likelihood(std::span<const double>(psi.data(), static_cast<std::size_t>(psi.size())),
                                          index, static_cast<double>(cohort.event_count()));
}

RiskModel init_model(const ModelSpec& spec, std::size_t dimension, std::size_t sequence_length,
                     const TrainConfig& config) {
    Rng rng(derive_seed(config.seed, 0x1417));
    return make_model(spec, dimension, sequence_length, config.dropout_rate, rng);
}

TrainResult train(RiskModel model, const Cohort& train_cohort, const Cohort& val_cohort, const TrainConfig& config) {
    config.validate();
    if (train_cohort.dimension() != model.dimension() || val_cohort.dimension() != model.dimension())
        throw DataError(DataError::Code::DimensionMismatch, "dimension mismatch between model and cohorts");
    const std::size_t n_events = train_cohort.event_count();
    if (n_events == 0) throw DataError(DataError::Code::NoEvents, "no events in training cohort");
    if (val_cohort.event_count() == 0) throw DataError(DataError::Code::NoEvents, "no events in validation cohort");

    model.set_dropout_rate(config.dropout_rate);
    Rng shuffle_rng(derive_seed(config.seed, 0x5eed, 1));
    Rng dropout_rng(derive_seed(config.seed, 0x5eed, 2));

    const FeatureBatch all = FeatureBatch::from(train_cohort);
    const std::vector<double> times = train_cohort.times();
    const std::vector<bool> events = train_cohort.events();
    const RiskSetIndex full_index = build_risk_sets(times, events);
    const double deceased = static_cast<double>(n_events);

    TrainResult result{model, {}};
    TrainHistory& hist = result.history;
    Eigen::VectorXd params = model.parameters();
    Eigen::VectorXd best_params = params;
    double best = std::numeric_limits<double>::infinity();
    AdamState adam;

    std::vector<std::size_t> perm(train_cohort.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        hist.stopped_epoch = epoch;
        double epoch_loss = 0.0;
        try {
            model.set_training(true);
            DropoutMasks masks = DropoutMasks::sample(dropout_rng);
            if (config.minibatch_risk_sets) {
                std::shuffle(perm.begin(), perm.end(), shuffle_rng);
                for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
                    const std::size_t stop = std::min(perm.size(), start + config.batch_size);
                    const std::span<const std::size_t> rows(perm.data() + start, stop - start);
                    std::vector<double> bt(rows.size());
                    std::vector<bool> be(rows.size());
                    bool any_event = false;
                    for (std::size_t r = 0; r < rows.size(); ++r) {
                        bt[r] = times[rows[r]];
                        be[r] = events[rows[r]];
                        any_event = any_event || be[r];
                    }
                    if (!any_event) continue;
                    const FeatureBatch batch = all.select(rows);
                    const RiskSetIndex index = build_risk_sets(bt, be);
                    const ModelLossGradient lg = model_loss_gradient(model, batch, index, deceased, masks);
                    epoch_loss += lg.loss;
                    adam_step(params, lg.gradient, adam, config);
                    model.set_parameters(params);
                }
            } else {
                const ModelLossGradient lg = model_loss_gradient(model, all, full_index, deceased, masks);
                epoch_loss = lg.loss;
                adam_step(params, lg.gradient, adam, config);
                model.set_parameters(params);
            }
            model.set_training(false);
            if (!params.allFinite()) throw NumericError("parameters became non-finite");
            const double val = cohort_loss(model, val_cohort);
            if (!std::isfinite(epoch_loss) || !std::isfinite(val)) throw NumericError("loss became non-finite");
            hist.train_loss.push_back(epoch_loss);
            hist.val_loss.push_back(val);
            spdlog::info("epoch {} train_loss {} val_loss {}", epoch, shortest(epoch_loss), shortest(val));

            if (val < best - config.min_delta) {
                best = val;
                best_params = params;
                hist.best_epoch = epoch;
            } else if (epoch - hist.best_epoch > config.early_stop_patience) {
                break;
            }
        } catch (const NumericError& e) {
            hist.diverged = true;
            hist.failure = e.what();
            hist.train_loss.push_back(std::numeric_limits<double>::quiet_NaN());
            hist.val_loss.push_back(std::numeric_limits<double>::quiet_NaN());
            spdlog::warn("training diverged at epoch {}: {}", epoch, e.what());
            break;
        }
    }

    model.set_training(false);
    if (hist.best_epoch > 0) model.set_parameters(best_params);
    result.model = std::move(model);
    return result;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e)
        out << (e + 1) << ',' << shortest(history.train_loss[e]) << ',' << shortest(history.val_loss[e]) << '\n';
    out << "# best_epoch=" << history.best_epoch << " stopped_epoch=" << history.stopped_epoch
        << " diverged=" << (history.diverged ? 1 : 0) << '\n';
}

}  // namespace hzrd
