#include "hzrd/baseline_hazard.hpp"

#include "hzrd/error.hpp"
#include "hzrd/partial_likelihood.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
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

double BaselineHazard::at(double t) const {
    const auto end = std::upper_bound(event_times.begin(), event_times.end(), t);
    return std::accumulate(increments.begin(), increments.begin() + (end - event_times.begin()), 0.0);
}

BaselineHazard breslow_baseline(std::span<const double> times, const std::vector<bool>& events,
                                std::span<const double> psi, const TimeGrid& grid) {
    if (psi.size() != times.size()) throw std::invalid_argument("psi length differs from cohort size");
    for (double v : psi)
        if (!std::isfinite(v)) throw NumericError("non-finite log-risk passed to the Breslow estimator");
    const RiskSetIndex index = build_risk_sets(times, events);
    const auto lse = risk_set_log_sums(psi, index);

    BaselineHazard out;
    out.grid = grid;
    out.event_times = index.event_times;
    out.increments.resize(lse.size());
    for (std::size_t l = 0; l < lse.size(); ++l)
        out.increments[l] = static_cast<double>(index.deaths[l].size()) * std::exp(-lse[l]);

    const auto& b = grid.boundaries();
    out.cumulative.assign(b.size(), 0.0);
    double running = 0.0;
    std::size_t l = 0;
    for (std::size_t g = 1; g < b.size(); ++g) {
        while (l < out.event_times.size() && out.event_times[l] <= b[g]) running += out.increments[l++];
        out.cumulative[g] = running;
    }
    return out;
}

BaselineHazard breslow_baseline(const Cohort& cohort, std::span<const double> psi) {
    const auto times = cohort.times();
    return breslow_baseline(times, cohort.events(), psi, cohort.grid());
}

SurvivalCurve predict_survival(const BaselineHazard& baseline, double psi) {
    if (!std::isfinite(psi)) throw NumericError("non-finite log-risk in predict_survival");
    const double scale = std::exp(psi);
    std::vector<double> s(baseline.cumulative.size());
    for (std::size_t l = 0; l < s.size(); ++l) s[l] = std::exp(-baseline.cumulative[l] * scale);
    s[0] = 1.0;
    return SurvivalCurve(baseline.grid, std::move(s));
}

double KaplanMeierCurve::at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 1.0 : survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

double KaplanMeierCurve::left_limit(double t) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 1.0 : survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KaplanMeierCurve kaplan_meier(std::span<const double> times, const std::vector<bool>& events) {
    if (times.empty()) throw DataError(DataError::Code::EmptyCohort, "Kaplan-Meier needs at least one subject");
    if (times.size() != events.size()) throw std::invalid_argument("times and events differ in length");
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    if (times[order.front()] < 0.0) throw DataError(DataError::Code::NegativeTime, "negative time");

    KaplanMeierCurve km;
    double s = 1.0;
    std::size_t at_risk = times.size();
    for (std::size_t p = 0; p < order.size();) {
        const double t = times[order[p]];
        std::size_t d = 0;
        std::size_t q = p;
        for (; q < order.size() && times[order[q]] == t; ++q) d += events[order[q]] ? 1 : 0;
        if (d > 0) s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
        km.times.push_back(t);
        km.survival.push_back(s);
        km.at_risk.push_back(at_risk);
        km.events.push_back(d);
        at_risk -= q - p;
        p = q;
    }
    return km;
}

KaplanMeierCurve censoring_distribution(std::span<const double> times, const std::vector<bool>& events) {
    std::vector<bool> flipped(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) flipped[i] = !events[i];
    return kaplan_meier(times, flipped);
}

void write_curve_csv(std::ostream& out, const TimeGrid& grid, std::span<const double> values) {
    const auto& b = grid.boundaries();
    if (values.size() != b.size()) throw std::invalid_argument("curve length differs from grid");
    out << "time,value\n";
    for (std::size_t l = 0; l < b.size(); ++l) out << shortest(b[l]) << ',' << shortest(values[l]) << '\n';
}

}  // namespace hzrd
