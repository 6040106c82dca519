#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hzrd {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Interval endpoints t_0 < t_1 < ... < t_T in whole days. The observation cut u
// splits (t_0, t_u] (observation) from (t_u, t_T] (prediction).
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> boundaries, std::size_t observation_cut = 0);

    // 0, r, 2r, ... up to the first boundary >= max_time (at least two points).
    static TimeGrid daily(double max_time, int resolution = 1);

    const std::vector<double>& boundaries() const noexcept { return boundaries_; }
    std::size_t observation_cut() const noexcept { return cut_; }
    // Number of intervals T.
    std::size_t intervals() const noexcept { return boundaries_.empty() ? 0 : boundaries_.size() - 1; }
    double front() const { return boundaries_.front(); }
    double back() const { return boundaries_.back(); }

    bool operator==(const TimeGrid&) const = default;

private:
    std::vector<double> boundaries_;
    std::size_t cut_ = 0;
};

// L dense vectors of dimension d, oldest first. Missing reports are exact
// zero rows flagged false in the presence mask.
class CovariateSequence {
public:
    CovariateSequence() = default;
    CovariateSequence(RowMatrix values, std::vector<bool> present);
    // Every slot present.
    explicit CovariateSequence(RowMatrix values);

    std::size_t length() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    const RowMatrix& values() const noexcept { return values_; }
    const std::vector<bool>& present() const noexcept { return present_; }
    bool present(std::size_t slot) const { return present_.at(slot); }

    // Slot-major, then feature.
    Eigen::Map<const Eigen::VectorXd> flattened() const {
        return {values_.data(), values_.size()};
    }

    bool operator==(const CovariateSequence& other) const {
        return present_ == other.present_ && values_.rows() == other.values_.rows() &&
               values_.cols() == other.values_.cols() && values_ == other.values_;
    }

private:
    RowMatrix values_;
    std::vector<bool> present_;
};

struct Subject {
    std::string id;
    double time = 0.0;  // days to death or last follow-up
    bool event = false;
    CovariateSequence covariates;

    bool operator==(const Subject&) const = default;
};

class Cohort {
public:
    Cohort() = default;
    Cohort(std::vector<Subject> subjects, std::size_t dimension, std::size_t sequence_length, TimeGrid grid);
    // Infers d and L from the first subject and builds a daily grid.
    explicit Cohort(std::vector<Subject> subjects);

    const std::vector<Subject>& subjects() const noexcept { return subjects_; }
    const Subject& operator[](std::size_t i) const { return subjects_[i]; }
    std::size_t size() const noexcept { return subjects_.size(); }
    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t sequence_length() const noexcept { return sequence_length_; }
    const TimeGrid& grid() const noexcept { return grid_; }

    std::size_t event_count() const;
    std::vector<double> times() const;
    std::vector<bool> events() const;

    // Subjects at the given positions, sharing d, L and the grid.
    Cohort subset(std::span<const std::size_t> indices) const;

    bool operator==(const Cohort&) const = default;

private:
    std::vector<Subject> subjects_;
    std::size_t dimension_ = 0;
    std::size_t sequence_length_ = 0;
    TimeGrid grid_;
};

// Step function S(t_l) on a grid; the constructor enforces S(t_0) = 1,
// monotone non-increase and values in [0, 1].
class SurvivalCurve {
public:
    SurvivalCurve(TimeGrid grid, std::vector<double> values);

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

// Throws DataError if the curve invariants do not hold.
void check_survival_curve(const TimeGrid& grid, std::span<const double> values);

// Returns a copy of the cohort if every invariant holds, otherwise throws DataError.
Cohort validate_cohort(const Cohort& cohort);

enum class HazardConvention {
    // (S(t_{l-1}) - S(t_l)) / S(t_l)
    AsPrinted,
    // (S(t_{l-1}) - S(t_l)) / S(t_{l-1}), the conventional discrete hazard
    Standard,
};

// One rate per interval. Once the denominator hits zero the remaining rates
// are +infinity.
std::vector<double> discrete_hazard(const SurvivalCurve& curve,
                                    HazardConvention convention = HazardConvention::AsPrinted);

SurvivalCurve survival_from_hazard(std::span<const double> hazards, const TimeGrid& grid,
                                   HazardConvention convention = HazardConvention::AsPrinted);

}  // namespace hzrd
