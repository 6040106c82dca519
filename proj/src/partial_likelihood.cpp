#include "hzrd/partial_likelihood.hpp"

#include "hzrd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hzrd {

namespace {

// Running log-sum-exp: value = shift + log(scaled).
struct LogSumExp {
    double shift = -std::numeric_limits<double>::infinity();
    double scaled = 0.0;

    void add(double x) {
        if (x > shift) {
            scaled = scaled * std::exp(shift - x) + 1.0;
            shift = x;
        } else {
            scaled += std::exp(x - shift);
        }
    }
    double value() const { return shift + std::log(scaled); }
};

void check_inputs(std::span<const double> psi, const RiskSetIndex& index, double deceased) {
    if (psi.size() != index.subject_count())
        throw std::invalid_argument("psi length differs from the risk-set index");
    for (double v : psi)
        if (std::isnan(v)) throw NumericError("NaN log-risk passed to the partial likelihood");
        else if (!std::isfinite(v)) throw NumericError("non-finite log-risk passed to the partial likelihood");
    if (!(deceased > 0.0)) throw std::invalid_argument("partial likelihood needs N > 0 deceased subjects");
}

}  // namespace

std::vector<std::size_t> RiskSetIndex::risk_set(std::size_t l) const {
    return {order.begin() + static_cast<std::ptrdiff_t>(risk_start[l]), order.end()};
}

std::size_t RiskSetIndex::death_count() const {
    std::size_t total = 0;
    for (const auto& u : deaths) total += u.size();
    return total;
}

RiskSetIndex build_risk_sets(std::span<const double> times, const std::vector<bool>& events) {
    if (times.size() != events.size()) throw std::invalid_argument("times and events differ in length");
    RiskSetIndex idx;
    const std::size_t n = times.size();
    idx.order.resize(n);
    std::iota(idx.order.begin(), idx.order.end(), std::size_t{0});
    std::stable_sort(idx.order.begin(), idx.order.end(),
                     [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    idx.position.resize(n);
    for (std::size_t p = 0; p < n; ++p) idx.position[idx.order[p]] = p;

    for (std::size_t p = 0; p < n;) {
        const double t = times[idx.order[p]];
        std::size_t q = p;
        std::vector<std::size_t> dead;
        while (q < n && times[idx.order[q]] == t) {
            if (events[idx.order[q]]) dead.push_back(idx.order[q]);
            ++q;
        }
        if (!dead.empty()) {
            idx.event_times.push_back(t);
            idx.deaths.push_back(std::move(dead));
            idx.risk_start.push_back(p);
        }
        p = q;
    }
    return idx;
}

RiskSetIndex build_risk_sets(const Cohort& cohort) {
    const auto times = cohort.times();
    return build_risk_sets(times, cohort.events());
}

std::vector<double> risk_set_log_sums(std::span<const double> psi, const RiskSetIndex& index) {
    std::vector<double> lse(index.event_times.size());
    LogSumExp acc;
    std::size_t pos = index.order.size();
    for (std::size_t l = index.event_times.size(); l-- > 0;) {
        while (pos > index.risk_start[l]) acc.add(psi[index.order[--pos]]);
        lse[l] = acc.value();
    }
    return lse;
}

double neg_avg_partial_log_likelihood(std::span<const double> psi, const RiskSetIndex& index, double deceased) {
    check_inputs(psi, index, deceased);
    const auto lse = risk_set_log_sums(psi, index);
    double total = 0.0;
    for (std::size_t l = 0; l < lse.size(); ++l) {
        double term = 0.0;
        for (auto i : index.deaths[l]) term += psi[i] - lse[l];
        total += term;
    }
    return -total / deceased;
}

Eigen::VectorXd partial_likelihood_gradient(std::span<const double> psi, const RiskSetIndex& index, double deceased) {
    return partial_likelihood_loss_gradient(psi, index, deceased).gradient;
}

LossGradient partial_likelihood_loss_gradient(std::span<const double> psi, const RiskSetIndex& index,
                                              double deceased) {
    check_inputs(psi, index, deceased);
    const std::size_t n = psi.size();
    const auto lse = risk_set_log_sums(psi, index);

    LossGradient out;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    double total = 0.0;
    for (std::size_t l = 0; l < lse.size(); ++l) {
        for (auto i : index.deaths[l]) {
            total += psi[i] - lse[l];
            out.gradient[static_cast<Eigen::Index>(i)] -= 1.0;
        }
    }
    out.loss = -total / deceased;

    // Subject at sorted position p sits in every R_l with risk_start[l] <= p;
    // log sum_l |U_l| exp(-LSE_l) over that prefix is accumulated in order.
    LogSumExp weight;
    std::size_t l = 0;
    for (std::size_t p = 0; p < n; ++p) {
        while (l < lse.size() && index.risk_start[l] <= p) {
            weight.add(std::log(static_cast<double>(index.deaths[l].size())) - lse[l]);
            ++l;
        }
        if (l == 0) continue;
        const std::size_t i = index.order[p];
        out.gradient[static_cast<Eigen::Index>(i)] += std::exp(psi[i] + weight.value());
    }
    out.gradient /= deceased;
    return out;
}

}  // namespace hzrd
