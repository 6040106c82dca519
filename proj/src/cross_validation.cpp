#include "hzrd/training.hpp"

#include "hzrd/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace hzrd {

namespace {

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

// Runs fn(0..count-1) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

// Events first, then censored, each shuffled; the concatenation is dealt out
// so every group receives a proportional share of events.
std::vector<std::size_t> stratified_order(std::span<const std::size_t> pool, const std::vector<bool>& events,
                                          std::uint64_t seed) {
    std::vector<std::size_t> dead;
    std::vector<std::size_t> alive;
    for (auto i : pool) (events[i] ? dead : alive).push_back(i);
    Rng rng(seed);
    std::shuffle(dead.begin(), dead.end(), rng);
    std::shuffle(alive.begin(), alive.end(), rng);
    dead.insert(dead.end(), alive.begin(), alive.end());
    return dead;
}

RiskScoreSet score_set(const RiskModel& model, const Cohort& cohort) {
    const Eigen::VectorXd psi = model.evaluate(FeatureBatch::from(cohort));
    RiskScoreSet s;
    s.scores.assign(psi.data(), psi.data() + psi.size());
    s.times = cohort.times();
    s.events = cohort.events();
    return s;
}

}  // namespace

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<bool>& events, std::size_t k,
                                                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("need at least 2 folds");
    std::vector<std::size_t> all(events.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto order = stratified_order(all, events, seed);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t p = 0; p < order.size(); ++p) folds[p % k].push_back(order[p]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_split(const Cohort& cohort,
                                                                               std::span<const std::size_t> pool,
                                                                               const TrainConfig& config,
                                                                               std::uint64_t seed) {
    const auto events = cohort.events();
    const auto order = stratified_order(pool, events, seed);
    const double share = config.val_fraction / (config.train_fraction + config.val_fraction);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    for (std::size_t p = 0; p < order.size(); ++p) {
        const bool to_val = std::floor(static_cast<double>(p + 1) * share) > std::floor(static_cast<double>(p) * share);
        (to_val ? val_idx : train_idx).push_back(order[p]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {std::move(train_idx), std::move(val_idx)};
}

std::vector<FoldSplit> make_cv_splits(const Cohort& cohort, const TrainConfig& config) {
    config.validate();
    const auto events = cohort.events();
    if (cohort.event_count() < config.folds)
        throw DataError(DataError::Code::NoEvents, "cohort has fewer events than folds; cannot stratify");
    const auto folds = stratified_folds(events, config.folds, derive_seed(config.seed, 0xF01D));
    std::vector<FoldSplit> splits;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        FoldSplit s;
        s.test = folds[f];
        std::vector<std::size_t> rest;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
        std::sort(rest.begin(), rest.end());
        std::tie(s.train, s.val) = train_val_split(cohort, rest, config, derive_seed(config.seed, 0x7A1, f));
        splits.push_back(std::move(s));
    }
    return splits;
}

CvResult cross_validate(const Cohort& cohort, const ModelSpec& spec, const TrainConfig& config,
                        const MetricSettings& metrics, std::size_t jobs, std::uint64_t cell) {
    CvResult result;
    result.splits = make_cv_splits(cohort, config);
    result.folds.resize(result.splits.size());

    parallel_for(result.splits.size(), jobs, [&](std::size_t f) {
        const FoldSplit& split = result.splits[f];
        TrainConfig fold_config = config;
        fold_config.seed = derive_seed(config.seed, f + 1, cell);
        const Cohort train_part = cohort.subset(split.train);
        const Cohort val_part = cohort.subset(split.val);
        const Cohort test_part = cohort.subset(split.test);
        if (test_part.event_count() == 0)
            throw DataError(DataError::Code::NoEvents, "fold " + std::to_string(f + 1) + " has no test events");

        TrainResult fit = train(init_model(spec, cohort.dimension(), cohort.sequence_length(), fold_config),
                                train_part, val_part, fold_config);

        std::vector<std::size_t> fit_idx = split.train;
        fit_idx.insert(fit_idx.end(), split.val.begin(), split.val.end());
        const Cohort fit_part = cohort.subset(fit_idx);
        const auto fit_times = fit_part.times();
        const KaplanMeierCurve censoring = censoring_distribution(fit_times, fit_part.events());

        FoldOutcome& out = result.folds[f];
        out.history = std::move(fit.history);
        out.metrics = evaluate_metrics(score_set(fit.model, test_part), censoring, metrics);
        spdlog::info("fold {}: c_index {}", f + 1, shortest(out.metrics.front().value));
    });

    const std::size_t n_metrics = result.folds.front().metrics.size();
    for (std::size_t m = 0; m < n_metrics; ++m) {
        std::vector<double> values;
        for (const auto& fo : result.folds) values.push_back(fo.metrics[m].value);
        result.reports.push_back(aggregate_folds(result.folds.front().metrics[m].name, values));
    }
    return result;
}

namespace {

void apply_hyperparameter(const std::string& name, double value, TrainConfig& config, ModelSpec& spec) {
    auto count = [&](const char* what) {
        if (!(value >= 1.0) || std::floor(value) != value)
            throw std::invalid_argument(std::string(what) + " must be a positive integer");
        return static_cast<std::size_t>(value);
    };
    if (name == "learning_rate") {
        config.learning_rate = value;
    } else if (name == "batch_size") {
        config.batch_size = count("batch_size");
    } else if (name == "max_epochs") {
        config.max_epochs = count("max_epochs");
    } else if (name == "patience") {
        if (!(value >= 0.0) || std::floor(value) != value) throw std::invalid_argument("patience must be >= 0");
        config.early_stop_patience = static_cast<std::size_t>(value);
    } else if (name == "min_delta") {
        config.min_delta = value;
    } else if (name == "dropout_rate") {
        config.dropout_rate = value;
    } else if (name == "hidden") {
        const std::size_t width = count("hidden");
        spec.lstm_hidden = width;
        spec.mlp_hidden = {width};
    } else {
        throw std::invalid_argument("unknown hyperparameter '" + name + "'");
    }
}

}  // namespace

GridSearchResult grid_search(const Cohort& cohort, const ModelSpec& base_spec, const HyperGrid& grid,
                             const TrainConfig& config, Selection selection, std::size_t jobs) {
    if (grid.empty()) throw std::invalid_argument("grid search needs a non-empty grid");
    std::size_t cells = 1;
    for (const auto& [name, values] : grid) {
        if (values.empty()) throw std::invalid_argument("grid entry '" + name + "' has no values");
        cells *= values.size();
    }

    std::vector<GridCell> board(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        GridCell& cell = board[c];
        cell.config = config;
        cell.spec = base_spec;
        std::size_t rem = c;
        std::vector<std::pair<std::string, double>> picks;
        // Last key varies fastest.
        for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
            picks.emplace_back(it->first, it->second[rem % it->second.size()]);
            rem /= it->second.size();
        }
        std::reverse(picks.begin(), picks.end());
        for (const auto& [name, value] : picks) {
            apply_hyperparameter(name, value, cell.config, cell.spec);
            if (!cell.label.empty()) cell.label += ';';
            cell.label += name + "=" + shortest(value);
        }
        cell.config.seed = derive_seed(config.seed, 0, c);
        cell.config.validate();
    }

    std::vector<std::size_t> all(cohort.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto [train_idx, val_idx] = train_val_split(cohort, all, config, derive_seed(config.seed, 0x6121));
    const Cohort train_part = cohort.subset(train_idx);
    const Cohort val_part = cohort.subset(val_idx);

    parallel_for(cells, jobs, [&](std::size_t c) {
        GridCell& cell = board[c];
        try {
            RiskModel model = init_model(cell.spec, cohort.dimension(), cohort.sequence_length(), cell.config);
            cell.parameter_count = model.parameter_count();
            TrainResult fit = train(std::move(model), train_part, val_part, cell.config);
            cell.best_epoch = fit.history.best_epoch;
            if (fit.history.diverged) {
                cell.failed = true;
                cell.failure = "diverged: " + fit.history.failure;
            }
            if (fit.history.best_epoch == 0) {
                cell.failed = true;
                if (cell.failure.empty()) cell.failure = "no completed epoch";
            }
            if (!cell.failed) {
                cell.val_loss = fit.history.best_val_loss();
                cell.val_c_index = harrell_c_index(score_set(fit.model, val_part));
            }
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.failure = e.what();
        }
        if (cell.failed) spdlog::warn("grid cell {} failed: {}", cell.label, cell.failure);
    });

    std::stable_sort(board.begin(), board.end(), [&](const GridCell& a, const GridCell& b) {
        if (a.failed != b.failed) return !a.failed;
        if (!a.failed) {
            const double ka = selection == Selection::ValidationLoss ? a.val_loss : -a.val_c_index;
            const double kb = selection == Selection::ValidationLoss ? b.val_loss : -b.val_c_index;
            if (ka != kb) return ka < kb;
        }
        if (a.parameter_count != b.parameter_count) return a.parameter_count < b.parameter_count;
        return a.label < b.label;
    });

    GridSearchResult result;
    result.best = board.front();
    result.leaderboard = std::move(board);
    if (result.best.failed) throw NumericError("every grid cell failed; first failure: " + result.best.failure);
    return result;
}

void write_leaderboard_csv(std::ostream& out, const GridSearchResult& result) {
    out << "rank,config,parameters,val_loss,val_c_index,best_epoch,status\n";
    for (std::size_t r = 0; r < result.leaderboard.size(); ++r) {
        const GridCell& c = result.leaderboard[r];
        out << (r + 1) << ',' << c.label << ',' << c.parameter_count << ',';
        if (c.failed) {
            out << ",,," << "failed\n";
        } else {
            out << shortest(c.val_loss) << ',' << shortest(c.val_c_index) << ',' << c.best_epoch << ",ok\n";
        }
    }
}

}  // namespace hzrd
