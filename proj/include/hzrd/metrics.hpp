#pragma once

#include "hzrd/baseline_hazard.hpp"

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace hzrd {

// Risk scores (higher = more at risk) with observed times and event flags.
struct RiskScoreSet {
    std::vector<double> scores;
    std::vector<double> times;
    std::vector<bool> events;

    std::size_t size() const noexcept { return scores.size(); }
    // Throws std::invalid_argument on unequal lengths or non-finite scores.
    void check() const;
};

enum class TieMode {
    Strict,  // tied scores count 0 toward concordance
    Half,    // tied scores count 1/2
};

// Pairs (i, j) with T_i > T_j, d_j = 1 are comparable; concordant when R_i < R_j.
// Throws std::domain_error("no comparable pairs") if none exist.
double harrell_c_index(const RiskScoreSet& s, TieMode ties = TieMode::Strict);

// Same, restricted to pairs whose earlier (event) time satisfies T_j <= tau.
double truncated_c_index(const RiskScoreSet& s, double tau, TieMode ties = TieMode::Strict);

// IPCW cumulative/dynamic AUC at tau. Cases: T_i <= tau with an event, weighted
// 1 / G(T_i-); controls: T_j > tau. Cases with G(T_i-) = 0 are dropped with a
// warning. Throws std::domain_error without cases or controls.
double cumulative_dynamic_auc(const RiskScoreSet& s, double tau, const KaplanMeierCurve& censoring,
                              TieMode ties = TieMode::Strict);

struct MetricReport {
    std::string metric;
    std::vector<double> fold_values;
    double mean = 0.0;
    double half_width = 0.0;  // 1.96 * sample sd / sqrt(k)

    std::size_t folds() const noexcept { return fold_values.size(); }
    double ci_low() const noexcept { return mean - half_width; }
    double ci_high() const noexcept { return mean + half_width; }
};

// Mean with a 95% normal interval over k >= 2 folds. Non-finite fold values
// are kept in the report but left out of the mean.
MetricReport aggregate_folds(const std::string& metric, const std::vector<double>& values);

// One held-out evaluation: zero-width interval around the value.
MetricReport single_evaluation(const std::string& metric, double value);

struct MetricSettings {
    std::vector<double> c_index_horizons{30.0};
    std::vector<double> auc_horizons{30.0, 365.0};
    TieMode ties = TieMode::Strict;
};

struct NamedValue {
    std::string name;
    double value = std::numeric_limits<double>::quiet_NaN();
};

// C-index, then C-index@tau, then AUC@tau, in the order of `settings`. A metric
// that is undefined on this data comes back NaN with a logged warning.
std::vector<NamedValue> evaluate_metrics(const RiskScoreSet& test, const KaplanMeierCurve& censoring,
                                         const MetricSettings& settings = {});

// Metric rows keyed by model label.
struct MetricTable {
    std::string model;
    std::vector<MetricReport> reports;
};

// CSV with header model,metric,fold,value,mean,ci_low,ci_high: one row per
// fold (fold = 1..k) and one aggregate row (fold = all). A single-evaluation
// table has only aggregate rows with a zero-width interval.
void write_metric_csv(std::ostream& out, const MetricTable& table);
void write_metric_json(std::ostream& out, const MetricTable& table);
// Reads every table in a metric CSV (one per model label).
std::vector<MetricTable> read_metric_csv(std::istream& in);

// Table of mean +- half-width per model, rows sorted by C-index descending.
std::string format_report_table(const std::vector<MetricTable>& tables);

}  // namespace hzrd
