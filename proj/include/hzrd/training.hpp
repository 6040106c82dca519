#pragma once

#include "hzrd/metrics.hpp"
#include "hzrd/partial_likelihood.hpp"
#include "hzrd/risk_model.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hzrd {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 100;
    std::size_t early_stop_patience = 10;
    double min_delta = 1e-5;
    double dropout_rate = 0.6;
    std::uint64_t seed = 0;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    std::size_t folds = 5;

    // Risk sets restricted to each mini-batch. When off, every epoch is one
    // full-batch step with risk sets over the whole training cohort.
    bool minibatch_risk_sets = true;

    // Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct AdamState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::size_t step = 0;
};

// One bias-corrected Adam update. Throws NumericError (leaving params and
// state untouched) if the gradient is not finite.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const TrainConfig& config);

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t stopped_epoch = 0;
    std::size_t best_epoch = 0;  // 1-based; 0 if no epoch finished
    bool diverged = false;
    std::string failure;

    double best_val_loss() const;
};

struct TrainResult {
    RiskModel model;
    TrainHistory history;
};

// Partial-likelihood loss of the batch and its gradient with respect to the
// model parameters (chain rule through the model).
struct ModelLossGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

ModelLossGradient model_loss_gradient(const RiskModel& model, const FeatureBatch& batch, const RiskSetIndex& index,
                                      double deceased, DropoutMasks& masks);

// Evaluation-mode loss with full risk sets and N = events in the cohort.
double cohort_loss(const RiskModel& model, const Cohort& cohort);

// Minimises the average negative partial log-likelihood with Adam. Validation
// loss is checked after each epoch; training stops once it has not improved
// by min_delta for more than `early_stop_patience` epochs, and the best-epoch
// parameters are restored. Divergence (non-finite values) ends training early
// with history.diverged set.
TrainResult train(RiskModel model, const Cohort& train_cohort, const Cohort& val_cohort, const TrainConfig& config);

RiskModel init_model(const ModelSpec& spec, std::size_t dimension, std::size_t sequence_length,
                     const TrainConfig& config);

void write_history_csv(std::ostream& out, const TrainHistory& history);

// Event-stratified assignment of subjects to k folds; fold sizes differ by at
// most one and events are spread evenly.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<bool>& events, std::size_t k,
                                                       std::uint64_t seed);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

// Held-out fold is the test set; the rest is split train:val by the ratio of
// the configured fractions (7:1 by default), again stratified by event.
std::vector<FoldSplit> make_cv_splits(const Cohort& cohort, const TrainConfig& config);

// Splits indices into (train, val) by the train:val ratio of `config`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_split(const Cohort& cohort,
                                                                               std::span<const std::size_t> pool,
                                                                               const TrainConfig& config,
                                                                               std::uint64_t seed);

struct FoldOutcome {
    TrainHistory history;
    std::vector<NamedValue> metrics;
};

struct CvResult {
    std::vector<FoldSplit> splits;
    std::vector<FoldOutcome> folds;
    std::vector<MetricReport> reports;  // one per metric, k fold values each
};

// k-fold cross-validation: train on each fold's train part, early-stop on its
// validation part, score the held-out fold. The censoring distribution for
// IPCW comes from the fold's non-test subjects. `cell` separates RNG streams
// when several CV runs share a seed (grid cells).
CvResult cross_validate(const Cohort& cohort, const ModelSpec& spec, const TrainConfig& config,
                        const MetricSettings& metrics = {}, std::size_t jobs = 1, std::uint64_t cell = 0);

// Hyperparameter name -> candidate values. Recognised names: learning_rate,
// batch_size, max_epochs, patience, min_delta, dropout_rate, hidden.
using HyperGrid = std::map<std::string, std::vector<double>>;

enum class Selection { ValidationLoss, ValidationCIndex };

struct GridCell {
    std::string label;  // "name=value;..." in key order
    TrainConfig config;
    ModelSpec spec;
    std::size_t parameter_count = 0;
    double val_loss = 0.0;
    double val_c_index = 0.0;
    std::size_t best_epoch = 0;
    bool failed = false;
    std::string failure;
};

struct GridSearchResult {
    GridCell best;
    std::vector<GridCell> leaderboard;  // best first, failed cells last
};

// Exhaustive search over the Cartesian product of `grid`, each cell trained on
// a fixed train/val split of `cohort`. Ranking: selection criterion, then
// fewer parameters, then label order. Failed cells are kept, not fatal.
GridSearchResult grid_search(const Cohort& cohort, const ModelSpec& base_spec, const HyperGrid& grid,
                             const TrainConfig& config, Selection selection = Selection::ValidationLoss,
                             std::size_t jobs = 1);

void write_leaderboard_csv(std::ostream& out, const GridSearchResult& result);

}  // namespace hzrd
