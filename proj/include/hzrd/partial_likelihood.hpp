#pragma once

#include "hzrd/survival.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace hzrd {

// Event times with their death sets U_l and risk sets R_l = {j : z_j >= t_l}.
// R_l is stored as a suffix of the time-sorted subject order.
struct RiskSetIndex {
    std::vector<double> event_times;                // ascending, unique
    std::vector<std::vector<std::size_t>> deaths;   // U_l, subject indices
    std::vector<std::size_t> order;                 // subjects by ascending time (stable)
    std::vector<std::size_t> risk_start;            // R_l = order[risk_start[l]:]
    std::vector<std::size_t> position;              // inverse of `order`

    std::size_t subject_count() const noexcept { return order.size(); }
    std::size_t risk_set_size(std::size_t l) const { return order.size() - risk_start[l]; }
    std::vector<std::size_t> risk_set(std::size_t l) const;
    std::size_t death_count() const;
};

RiskSetIndex build_risk_sets(std::span<const double> times, const std::vector<bool>& events);
RiskSetIndex build_risk_sets(const Cohort& cohort);

// -(1/N) sum_l sum_{i in U_l} [psi_i - log sum_{j in R_l} exp(psi_j)], with
// Breslow ties. `deceased` is the N of the normalisation.
double neg_avg_partial_log_likelihood(std::span<const double> psi, const RiskSetIndex& index, double deceased);

// d loss / d psi.
Eigen::VectorXd partial_likelihood_gradient(std::span<const double> psi, const RiskSetIndex& index, double deceased);

struct LossGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

LossGradient partial_likelihood_loss_gradient(std::span<const double> psi, const RiskSetIndex& index,
                                              double deceased);

// log sum_{j in R_l} exp(psi_j) for every event time, computed stably.
std::vector<double> risk_set_log_sums(std::span<const double> psi, const RiskSetIndex& index);

}  // namespace hzrd
