#include "hzrd/baseline_hazard.hpp"
#include "hzrd/checkpoint.hpp"
#include "hzrd/data_io.hpp"
#include "hzrd/error.hpp"
#include "hzrd/metrics.hpp"
#include "hzrd/synthetic.hpp"
#include "hzrd/training.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hzrd;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void configure_logging() {
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("HZRD_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only honour it when asked for.
        if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
    }
    spdlog::set_pattern("[%l] %v");
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::is_regular_file(p)) throw DataError(DataError::Code::Io, what + " not found: '" + p.string() + "'");
}

fs::path prepare_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw DataError(DataError::Code::Io, "cannot create output directory '" + dir.string() + "'");
    return dir;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw DataError(DataError::Code::Io, "cannot write '" + p.string() + "'");
    return out;
}

TieMode parse_ties(const std::string& s) { return s == "half" ? TieMode::Half : TieMode::Strict; }

// Flags shared by every command that builds and trains a model.
struct ModelFlags {
    std::string model = "linear";
    std::vector<std::size_t> mlp_hidden{128};
    std::size_t lstm_hidden = 64;
    bool skip_padding = false;
    TrainConfig config;
    bool full_batch = false;

    void add(CLI::App& app) {
        app.add_option("--model", model, "Risk function")->check(CLI::IsMember({"linear", "mlp", "lstm"}))->capture_default_str();
        app.add_option("--mlp-hidden", mlp_hidden, "MLP hidden layer widths")->delimiter(',')->capture_default_str();
        app.add_option("--lstm-hidden", lstm_hidden, "LSTM hidden width")->capture_default_str();
        app.add_flag("--skip-padding", skip_padding, "LSTM carries state unchanged over padded slots");
        app.add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
        app.add_option("--batch-size", config.batch_size, "Mini-batch size")->capture_default_str();
        app.add_option("--epochs", config.max_epochs, "Maximum epochs")->capture_default_str();
        app.add_option("--patience", config.early_stop_patience, "Early-stopping patience (epochs)")->capture_default_str();
        app.add_option("--min-delta", config.min_delta, "Minimum validation-loss improvement")->capture_default_str();
        app.add_option("--dropout", config.dropout_rate, "Dropout rate")->capture_default_str();
        app.add_option("--train-fraction", config.train_fraction, "Training share")->capture_default_str();
        app.add_option("--val-fraction", config.val_fraction, "Validation share")->capture_default_str();
        app.add_option("--test-fraction", config.test_fraction, "Test share")->capture_default_str();
        app.add_flag("--full-batch", full_batch, "One full-cohort step per epoch instead of mini-batches");
    }

    ModelSpec spec() const {
        ModelSpec s;
        s.kind = parse_model_kind(model);
        s.mlp_hidden = mlp_hidden;
        s.lstm_hidden = lstm_hidden;
        s.skip_padding = skip_padding;
        return s;
    }

    TrainConfig train_config(std::uint64_t seed) const {
        TrainConfig c = config;
        c.seed = seed;
        c.minibatch_risk_sets = !full_batch;
        return c;
    }
};

struct MetricFlags {
    std::string ties = "strict";
    std::vector<double> c_index_horizons{30.0};
    std::vector<double> auc_horizons{30.0, 365.0};

    void add(CLI::App& app) {
        app.add_option("--ties", ties, "Tied risk scores count 0 (strict) or 1/2 (half)")
            ->check(CLI::IsMember({"strict", "half"}))
            ->capture_default_str();
        app.add_option("--cindex-horizons", c_index_horizons, "Truncated C-index horizons (days)")
            ->delimiter(',')
            ->capture_default_str();
        app.add_option("--auc-horizons", auc_horizons, "AUC horizons (days)")->delimiter(',')->capture_default_str();
    }

    MetricSettings settings() const { return {c_index_horizons, auc_horizons, parse_ties(ties)}; }
};

void write_split(const fs::path& p, const Cohort& cohort, const std::vector<std::size_t>& train,
                 const std::vector<std::size_t>& val, const std::vector<std::size_t>& test) {
    std::vector<std::string> part(cohort.size());
    for (auto i : train) part[i] = "train";
    for (auto i : val) part[i] = "val";
    for (auto i : test) part[i] = "test";
    auto out = open_out(p);
    out << "subject_id,part\n";
    for (std::size_t i = 0; i < cohort.size(); ++i) out << cohort[i].id << ',' << part[i] << '\n';
}

std::map<std::string, std::string> read_split(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError(DataError::Code::Io, "cannot open split file '" + p.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "subject_id,part") throw DataError(DataError::Code::Parse, "split file: bad header");
    std::map<std::string, std::string> parts;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError(DataError::Code::Parse, "split file: malformed row");
        parts[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return parts;
}

RiskScoreSet scores_for(const Cohort& cohort, const std::vector<double>& psi) {
    return {psi, cohort.times(), cohort.events()};
}

void write_metric_files(const fs::path& dir, const std::string& stem, const MetricTable& table) {
    auto csv = open_out(dir / (stem + ".csv"));
    write_metric_csv(csv, table);
    auto json = open_out(dir / (stem + ".json"));
    write_metric_json(json, table);
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
    SyntheticSpec spec;
    std::vector<double> beta;
    std::string mode = "static";
    std::optional<double> admin_horizon;
    std::uint64_t seed = 0;
    fs::path out;
};

int run_simulate(const SimulateArgs& a) {
    SyntheticSpec spec = a.spec;
    spec.seed = a.seed;
    spec.mode = a.mode == "drifting" ? SequenceMode::Drifting : SequenceMode::Static;
    if (a.admin_horizon) {
        spec.censoring = CensoringMode::Administrative;
        spec.admin_horizon = *a.admin_horizon;
    }
    if (!a.beta.empty()) {
        spec.beta = Eigen::Map<const Eigen::VectorXd>(a.beta.data(), Eigen::Index(a.beta.size()));
    } else {
        Rng rng(derive_seed(a.seed, 0xBE7A));
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(std::max<std::size_t>(spec.dimension, 1))));
        spec.beta.resize(Eigen::Index(spec.dimension));
        for (auto& b : spec.beta) b = normal(rng);
    }
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    prepare_out_dir(a.out);
    const auto data = synthesize_cohort(spec);
    const fs::path manifest = save_cohort(data.cohort, a.out);
    write_ground_truth(a.out / "truth.json", data);
    std::cout << "wrote " << data.cohort.size() << " subjects (" << data.cohort.event_count() << " events) to "
              << manifest.string() << '\n';
    return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    fs::path data;
    ModelFlags model;
    std::uint64_t seed = 0;
    fs::path out;
};

int run_train(const TrainArgs& a) {
    require_file(a.data, "manifest");
    const TrainConfig config = a.model.train_config(a.seed);
    config.validate();
    const ModelSpec spec = a.model.spec();
    prepare_out_dir(a.out);

    const Cohort cohort = load_cohort(a.data);
    // Hold out the test share (event-stratified), then split the rest train:val.
    std::vector<std::size_t> all(cohort.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    TrainConfig holdout = config;
    holdout.train_fraction = config.train_fraction + config.val_fraction;
    holdout.val_fraction = config.test_fraction;
    const auto [rest, test] = train_val_split(cohort, all, holdout, derive_seed(a.seed, 0x7E57));
    auto [train_idx, val_idx] = train_val_split(cohort, rest, config, derive_seed(a.seed, 0x7A1));

    RiskModel model = init_model(spec, cohort.dimension(), cohort.sequence_length(), config);
    TrainResult fit = train(std::move(model), cohort.subset(train_idx), cohort.subset(val_idx), config);

    save_checkpoint(fit.model, a.out / "model.hzrd");
    {
        auto hist = open_out(a.out / "history.csv");
        write_history_csv(hist, fit.history);
    }
    write_split(a.out / "split.csv", cohort, train_idx, val_idx, test);
    if (fit.history.diverged) {
        spdlog::error("training diverged: {}", fit.history.failure);
        return kNumeric;
    }
    std::cout << "trained " << to_string(spec.kind) << " (" << fit.model.parameter_count() << " parameters) on "
              << train_idx.size() << " subjects; best epoch " << fit.history.best_epoch << " of "
              << fit.history.stopped_epoch << ", val loss " << fit.history.best_val_loss() << '\n';
    return kOk;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
    fs::path data;
    fs::path checkpoint;
    fs::path truth;
    fs::path split;
    std::string part = "test";
    std::string label;
    MetricFlags metrics;
    fs::path out;
};

int run_evaluate(const EvaluateArgs& a) {
    require_file(a.data, "manifest");
    if (a.checkpoint.empty() == a.truth.empty()) throw UsageError("give exactly one of --checkpoint or --truth");
    if (!a.checkpoint.empty()) require_file(a.checkpoint, "checkpoint");
    if (!a.truth.empty()) require_file(a.truth, "ground-truth file");
    if (!a.split.empty()) require_file(a.split, "split file");
    prepare_out_dir(a.out);

    const Cohort cohort = load_cohort(a.data);
    std::vector<double> psi(cohort.size());
    std::string label = a.label;
    if (!a.checkpoint.empty()) {
        const RiskModel model = load_checkpoint(a.checkpoint);
        const Eigen::VectorXd v = model.evaluate(FeatureBatch::from(cohort));
        psi.assign(v.data(), v.data() + v.size());
        if (label.empty()) label = to_string(model.kind());
    } else {
        const GroundTruth truth = read_ground_truth(a.truth);
        std::map<std::string, double> by_id;
        for (std::size_t i = 0; i < truth.ids.size(); ++i) by_id[truth.ids[i]] = truth.psi[i];
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            const auto it = by_id.find(cohort[i].id);
            if (it == by_id.end())
                throw DataError(DataError::Code::MissingSubject, "missing subject '" + cohort[i].id + "' in truth");
            psi[i] = it->second;
        }
        if (label.empty()) label = "oracle";
    }

    std::vector<std::size_t> eval_idx;
    std::vector<std::size_t> fit_idx;
    if (a.split.empty()) {
        eval_idx.resize(cohort.size());
        std::iota(eval_idx.begin(), eval_idx.end(), std::size_t{0});
        fit_idx = eval_idx;
    } else {
        const auto parts = read_split(a.split);
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            const auto it = parts.find(cohort[i].id);
            if (it == parts.end())
                throw DataError(DataError::Code::MissingSubject, "missing subject '" + cohort[i].id + "' in split");
            (it->second == a.part ? eval_idx : fit_idx).push_back(i);
        }
        if (eval_idx.empty()) throw UsageError("no subjects in split part '" + a.part + "'");
        if (fit_idx.empty()) fit_idx = eval_idx;
    }

    const Cohort eval_part = cohort.subset(eval_idx);
    const Cohort fit_part = cohort.subset(fit_idx);
    std::vector<double> eval_psi;
    std::vector<double> fit_psi;
    for (auto i : eval_idx) eval_psi.push_back(psi[i]);
    for (auto i : fit_idx) fit_psi.push_back(psi[i]);

    const auto fit_times = fit_part.times();
    const KaplanMeierCurve censoring = censoring_distribution(fit_times, fit_part.events());
    const auto values = evaluate_metrics(scores_for(eval_part, eval_psi), censoring, a.metrics.settings());
    MetricTable table{label, {}};
    for (const auto& v : values) table.reports.push_back(single_evaluation(v.name, v.value));
    write_metric_files(a.out, "metrics", table);

    // Plot-ready curves on the cohort's grid.
    const TimeGrid& grid = cohort.grid();
    const BaselineHazard baseline = breslow_baseline(fit_times, fit_part.events(), fit_psi, grid);
    std::vector<double> s0;
    for (double c : baseline.cumulative) s0.push_back(std::exp(-c));
    const auto eval_times = eval_part.times();
    const KaplanMeierCurve km = kaplan_meier(eval_times, eval_part.events());
    std::vector<double> km_values;
    for (double t : grid.boundaries()) km_values.push_back(km.at(t));
    {
        auto out = open_out(a.out / "baseline_survival.csv");
        write_curve_csv(out, grid, s0);
    }
    {
        auto out = open_out(a.out / "km_survival.csv");
        write_curve_csv(out, grid, km_values);
    }

    std::cout << format_report_table({table});
    return kOk;
}

// ---- cv ---------------------------------------------------------------------

struct CvArgs {
    fs::path data;
    ModelFlags model;
    MetricFlags metrics;
    std::size_t folds = 5;
    std::size_t jobs = 1;
    std::string label;
    std::uint64_t seed = 0;
    fs::path out;
};

int run_cv(const CvArgs& a) {
    require_file(a.data, "manifest");
    TrainConfig config = a.model.train_config(a.seed);
    config.folds = a.folds;
    config.validate();
    const ModelSpec spec = a.model.spec();
    prepare_out_dir(a.out);

    const Cohort cohort = load_cohort(a.data);
    const CvResult result = cross_validate(cohort, spec, config, a.metrics.settings(), a.jobs);
    const MetricTable table{a.label.empty() ? to_string(spec.kind) : a.label, result.reports};
    write_metric_files(a.out, "cv_metrics", table);
    {
        auto out = open_out(a.out / "cv_folds.csv");
        out << "fold,train,val,test,best_epoch,stopped_epoch,best_val_loss,diverged\n";
        for (std::size_t f = 0; f < result.folds.size(); ++f) {
            const auto& h = result.folds[f].history;
            out << (f + 1) << ',' << result.splits[f].train.size() << ',' << result.splits[f].val.size() << ','
                << result.splits[f].test.size() << ',' << h.best_epoch << ',' << h.stopped_epoch << ','
                << h.best_val_loss() << ',' << (h.diverged ? 1 : 0) << '\n';
        }
    }
    std::cout << format_report_table({table});
    for (const auto& fo : result.folds)
        if (fo.history.diverged) return kNumeric;
    return kOk;
}

// ---- gridsearch -------------------------------------------------------------

struct GridArgs {
    fs::path data;
    ModelFlags model;
    std::vector<std::string> grid;
    std::string select = "loss";
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    fs::path out;
};

HyperGrid parse_grid(const std::vector<std::string>& entries) {
    HyperGrid grid;
    for (const auto& e : entries) {
        const auto eq = e.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("grid entry '" + e + "' is not name=v1,v2,...");
        std::vector<double> values;
        std::stringstream rest(e.substr(eq + 1));
        std::string item;
        while (std::getline(rest, item, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw UsageError("grid value '" + item + "' is not a number");
            }
        }
        grid[e.substr(0, eq)] = values;
    }
    return grid;
}

int run_gridsearch(const GridArgs& a) {
    require_file(a.data, "manifest");
    const HyperGrid grid = parse_grid(a.grid);
    const TrainConfig config = a.model.train_config(a.seed);
    config.validate();
    prepare_out_dir(a.out);

    const Cohort cohort = load_cohort(a.data);
    const Selection sel = a.select == "cindex" ? Selection::ValidationCIndex : Selection::ValidationLoss;
    GridSearchResult result;
    try {
        result = grid_search(cohort, a.model.spec(), grid, config, sel, a.jobs);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    {
        auto out = open_out(a.out / "leaderboard.csv");
        write_leaderboard_csv(out, result);
    }
    std::cout << "best: " << result.best.label << " (val loss " << result.best.val_loss << ", val C-index "
              << result.best.val_c_index << ")\n";
    return kOk;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<fs::path> inputs;
    fs::path out;
};

int run_report(const ReportArgs& a) {
    for (const auto& p : a.inputs) require_file(p, "metric file");
    std::vector<MetricTable> tables;
    for (const auto& p : a.inputs) {
        std::ifstream in(p);
        auto t = read_metric_csv(in);
        tables.insert(tables.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
    }
    if (tables.empty()) throw DataError(DataError::Code::Parse, "no metric rows in the given files");
    const std::string text = format_report_table(tables);
    std::cout << text;
    if (!a.out.empty()) {
        prepare_out_dir(a.out);
        auto txt = open_out(a.out / "report.txt");
        txt << text;
        auto csv = open_out(a.out / "report.csv");
        csv.precision(std::numeric_limits<double>::max_digits10);
        csv << "model,metric,mean,ci_low,ci_high,folds\n";
        for (const auto& t : tables)
            for (const auto& r : t.reports)
                csv << t.model << ',' << r.metric << ',' << r.mean << ',' << r.ci_low() << ',' << r.ci_high() << ','
                    << r.folds() << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Proportional-hazards survival modelling: simulate, train, evaluate, cross-validate, report."};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Write a synthetic cohort and its ground truth");
    simulate->add_option("--n", sim.spec.n, "Subjects")->capture_default_str();
    simulate->add_option("--dim", sim.spec.dimension, "Covariate dimension")->capture_default_str();
    simulate->add_option("--length", sim.spec.sequence_length, "Sequence length")->capture_default_str();
    simulate->add_option("--beta", sim.beta, "True coefficients (default: N(0, 1/d) draws)")->delimiter(',');
    simulate->add_option("--baseline-rate", sim.spec.baseline_rate, "Baseline hazard per day")->capture_default_str();
    simulate->add_option("--censoring-rate", sim.spec.censoring_rate, "Exponential censoring rate per day")
        ->capture_default_str();
    simulate->add_option("--admin-horizon", sim.admin_horizon, "Uniform administrative censoring up to this day");
    simulate->add_option("--mode", sim.mode, "Sequence mode")
        ->check(CLI::IsMember({"static", "drifting"}))
        ->capture_default_str();
    simulate->add_option("--drift-noise", sim.spec.drift_noise, "Drifting-mode reading noise")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    simulate->add_option("--out", sim.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Fit a model on the train share, early-stop on validation");
    train_cmd->add_option("--data", tr.data, "Cohort manifest")->required();
    tr.model.add(*train_cmd);
    train_cmd->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
    train_cmd->add_option("--out", tr.out, "Output directory")->required();

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score a cohort with a checkpoint or the true risk");
    evaluate->add_option("--data", ev.data, "Cohort manifest")->required();
    evaluate->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
    evaluate->add_option("--truth", ev.truth, "Ground-truth sidecar (scores subjects by true psi)");
    evaluate->add_option("--split", ev.split, "Split file written by train");
    evaluate->add_option("--part", ev.part, "Split part to score")->capture_default_str();
    evaluate->add_option("--label", ev.label, "Model label in the report");
    ev.metrics.add(*evaluate);
    evaluate->add_option("--out", ev.out, "Output directory")->required();

    CvArgs cv;
    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
    cv_cmd->add_option("--data", cv.data, "Cohort manifest")->required();
    cv.model.add(*cv_cmd);
    cv.metrics.add(*cv_cmd);
    cv_cmd->add_option("--folds", cv.folds, "Number of folds")->capture_default_str();
    cv_cmd->add_option("--jobs", cv.jobs, "Folds trained in parallel")->capture_default_str();
    cv_cmd->add_option("--label", cv.label, "Model label in the report");
    cv_cmd->add_option("--seed", cv.seed, "Random seed")->capture_default_str();
    cv_cmd->add_option("--out", cv.out, "Output directory")->required();

    GridArgs gs;
    auto* grid_cmd = app.add_subcommand("gridsearch", "Exhaustive hyperparameter search on one train/val split");
    grid_cmd->add_option("--data", gs.data, "Cohort manifest")->required();
    gs.model.add(*grid_cmd);
    grid_cmd->add_option("--grid", gs.grid,
                         "name=v1,v2,... (learning_rate, batch_size, max_epochs, patience, min_delta, dropout_rate, "
                         "hidden); repeatable")
        ->required();
    grid_cmd->add_option("--select", gs.select, "Rank by validation loss or C-index")
        ->check(CLI::IsMember({"loss", "cindex"}))
        ->capture_default_str();
    grid_cmd->add_option("--jobs", gs.jobs, "Cells trained in parallel")->capture_default_str();
    grid_cmd->add_option("--seed", gs.seed, "Random seed")->capture_default_str();
    grid_cmd->add_option("--out", gs.out, "Output directory")->required();

    ReportArgs rep;
    auto* report = app.add_subcommand("report", "Table of metric files (mean +- CI half-width)");
    report->add_option("inputs", rep.inputs, "Metric CSV files")->required();
    report->add_option("--out", rep.out, "Directory for report.txt and report.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*train_cmd) return run_train(tr);
        if (*evaluate) return run_evaluate(ev);
        if (*cv_cmd) return run_cv(cv);
        if (*grid_cmd) return run_gridsearch(gs);
        if (*report) return run_report(rep);
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const std::invalid_argument& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return kData;
    } catch (const NumericError& e) {
        spdlog::error("{}", e.what());
        return kNumeric;
    } catch (const std::domain_error& e) {
        spdlog::error("{}", e.what());
        return kNumeric;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kData;
    }
    return kUsage;
}
