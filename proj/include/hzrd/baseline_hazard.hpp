#pragma once

#include "hzrd/survival.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace hzrd {

// Cumulative baseline hazard Lambda_0 on a grid, plus the raw Breslow jumps.
// Lambda_0(t_0) = 0; a death at day 0 is booked into the first interval.
struct BaselineHazard {
    TimeGrid grid;
    std::vector<double> cumulative;   // one value per grid boundary
    std::vector<double> event_times;  // ascending
    std::vector<double> increments;   // jump at each event time

    // Step function: sum of jumps at event times <= t. Constant past the last event.
    double at(double t) const;
};

// Increment at event time t_l is |U_l| / sum_{j in R_l} exp(psi_j).
BaselineHazard breslow_baseline(std::span<const double> times, const std::vector<bool>& events,
                                std::span<const double> psi, const TimeGrid& grid);
BaselineHazard breslow_baseline(const Cohort& cohort, std::span<const double> psi);

// S(t_l) = exp(-Lambda_0(t_l) exp(psi)).
SurvivalCurve predict_survival(const BaselineHazard& baseline, double psi);

// Product-limit estimate at every distinct observed time.
struct KaplanMeierCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    // S(t), right-continuous.
    double at(double t) const;
    // S(t-), the value just before t.
    double left_limit(double t) const;
};

KaplanMeierCurve kaplan_meier(std::span<const double> times, const std::vector<bool>& events);

// Kaplan-Meier of the censoring time (event flags flipped), used for IPCW.
KaplanMeierCurve censoring_distribution(std::span<const double> times, const std::vector<bool>& events);

// Two named columns "time,value", one row per grid point.
void write_curve_csv(std::ostream& out, const TimeGrid& grid, std::span<const double> values);

}  // namespace hzrd
