#include "hzrd/survival.hpp"

#include "hzrd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hzrd {

namespace {

using Code = DataError::Code;

void check_grid(const std::vector<double>& b, std::size_t cut) {
    if (b.size() < 2) throw DataError(Code::NonIncreasingGrid, "time grid needs at least two boundaries");
    for (std::size_t l = 0; l < b.size(); ++l) {
        if (!std::isfinite(b[l]) || b[l] < 0.0 || std::floor(b[l]) != b[l])
            throw DataError(Code::Invalid, "time grid boundaries must be non-negative whole days");
        if (l > 0 && !(b[l] > b[l - 1]))
            throw DataError(Code::NonIncreasingGrid, "time grid boundaries must be strictly increasing");
    }
    if (cut >= b.size() - 1) throw DataError(Code::Invalid, "observation cut must satisfy 0 <= u < T");
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> boundaries, std::size_t observation_cut)
    : boundaries_(std::move(boundaries)), cut_(observation_cut) {
    check_grid(boundaries_, cut_);
}

TimeGrid TimeGrid::daily(double max_time, int resolution) {
    if (resolution < 1) throw DataError(Code::Invalid, "grid resolution must be >= 1 day");
    if (!(max_time >= 0.0)) throw DataError(Code::NegativeTime, "negative time");
    const double step = resolution;
    const auto count = static_cast<std::size_t>(std::ceil(max_time / step));
    std::vector<double> b(std::max<std::size_t>(count, 1) + 1);
    for (std::size_t l = 0; l < b.size(); ++l) b[l] = step * static_cast<double>(l);
    return TimeGrid(std::move(b));
}

CovariateSequence::CovariateSequence(RowMatrix values, std::vector<bool> present)
    : values_(std::move(values)), present_(std::move(present)) {
    if (values_.rows() < 1 || values_.cols() < 1)
        throw DataError(Code::DimensionMismatch, "covariate sequence needs L >= 1 and d >= 1");
    if (present_.size() != static_cast<std::size_t>(values_.rows()))
        throw DataError(Code::DimensionMismatch, "presence mask length differs from sequence length");
    bool any = false;
    for (std::size_t k = 0; k < present_.size(); ++k) {
        if (present_[k]) {
            any = true;
        } else if (!values_.row(static_cast<Eigen::Index>(k)).isZero(0.0)) {
            throw DataError(Code::Invalid, "padded covariate slot is not an exact zero vector");
        }
    }
    if (!any) throw DataError(Code::Invalid, "covariate sequence has no present entries");
}

CovariateSequence::CovariateSequence(RowMatrix values)
    : CovariateSequence(values, std::vector<bool>(static_cast<std::size_t>(values.rows()), true)) {}

Cohort::Cohort(std::vector<Subject> subjects, std::size_t dimension, std::size_t sequence_length, TimeGrid grid)
    : subjects_(std::move(subjects)), dimension_(dimension), sequence_length_(sequence_length),
      grid_(std::move(grid)) {}

Cohort::Cohort(std::vector<Subject> subjects) : subjects_(std::move(subjects)) {
    if (subjects_.empty()) throw DataError(Code::EmptyCohort, "empty cohort");
    dimension_ = subjects_.front().covariates.dimension();
    sequence_length_ = subjects_.front().covariates.length();
    double t_max = 0.0;
    for (const auto& s : subjects_) t_max = std::max(t_max, s.time);
    grid_ = TimeGrid::daily(t_max);
}

std::size_t Cohort::event_count() const {
    return static_cast<std::size_t>(
        std::count_if(subjects_.begin(), subjects_.end(), [](const Subject& s) { return s.event; }));
}

std::vector<double> Cohort::times() const {
    std::vector<double> out;
    out.reserve(subjects_.size());
    for (const auto& s : subjects_) out.push_back(s.time);
    return out;
}

std::vector<bool> Cohort::events() const {
    std::vector<bool> out;
    out.reserve(subjects_.size());
    for (const auto& s : subjects_) out.push_back(s.event);
    return out;
}

Cohort Cohort::subset(std::span<const std::size_t> indices) const {
    std::vector<Subject> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(subjects_.at(i));
    return Cohort(std::move(picked), dimension_, sequence_length_, grid_);
}

void check_survival_curve(const TimeGrid& grid, std::span<const double> values) {
    if (values.size() != grid.boundaries().size())
        throw DataError(Code::DimensionMismatch, "survival curve length differs from grid");
    if (values.empty() || values[0] != 1.0) throw DataError(Code::Invalid, "survival curve must start at 1");
    for (std::size_t l = 0; l < values.size(); ++l) {
        if (!(values[l] >= 0.0 && values[l] <= 1.0))
            throw DataError(Code::Invalid, "survival value outside [0, 1]");
        if (l > 0 && values[l] > values[l - 1])
            throw DataError(Code::Invalid, "survival curve is increasing");
    }
}

SurvivalCurve::SurvivalCurve(TimeGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    check_survival_curve(grid_, values_);
}

Cohort validate_cohort(const Cohort& cohort) {
    if (cohort.size() == 0) throw DataError(Code::EmptyCohort, "empty cohort");
    const auto& b = cohort.grid().boundaries();
    check_grid(b, cohort.grid().observation_cut());
    if (cohort.dimension() < 1 || cohort.sequence_length() < 1)
        throw DataError(Code::DimensionMismatch, "dimension mismatch: d and L must be >= 1");

    for (const auto& s : cohort.subjects()) {
        if (s.covariates.dimension() != cohort.dimension() || s.covariates.length() != cohort.sequence_length())
            throw DataError(Code::DimensionMismatch, "dimension mismatch for subject '" + s.id + "'");
        if (!std::isfinite(s.time)) throw DataError(Code::Invalid, "non-finite time for subject '" + s.id + "'");
        if (s.time < 0.0) throw DataError(Code::NegativeTime, "negative time for subject '" + s.id + "'");
        if (s.time == 0.0 && !s.event)
            throw DataError(Code::Invalid, "censored at time 0 (uninformative) for subject '" + s.id + "'");
        if (!s.covariates.values().allFinite())
            throw DataError(Code::Invalid, "non-finite covariate for subject '" + s.id + "'");
    }
    if (cohort.event_count() == 0) throw DataError(Code::NoEvents, "no events in cohort");
    return cohort;
}

std::vector<double> discrete_hazard(const SurvivalCurve& curve, HazardConvention convention) {
    const auto& s = curve.values();
    std::vector<double> rates(s.size() - 1);
    bool saturated = false;
    for (std::size_t l = 1; l < s.size(); ++l) {
        const double denom = convention == HazardConvention::AsPrinted ? s[l] : s[l - 1];
        if (saturated || denom == 0.0) {
            saturated = true;
            rates[l - 1] = std::numeric_limits<double>::infinity();
            continue;
        }
        rates[l - 1] = (s[l - 1] - s[l]) / denom;
    }
    return rates;
}

SurvivalCurve survival_from_hazard(std::span<const double> hazards, const TimeGrid& grid,
                                   HazardConvention convention) {
    if (hazards.size() != grid.intervals())
        throw DataError(Code::DimensionMismatch, "hazard count differs from grid interval count");
    std::vector<double> s(hazards.size() + 1);
    s[0] = 1.0;
    for (std::size_t l = 1; l < s.size(); ++l) {
        const double h = hazards[l - 1];
        if (!(h >= 0.0)) throw DataError(Code::Invalid, "hazard rates must be non-negative");
        if (convention == HazardConvention::AsPrinted) {
            s[l] = std::isinf(h) ? 0.0 : s[l - 1] / (1.0 + h);
        } else {
            if (h > 1.0 && !std::isinf(h))
                throw DataError(Code::Invalid, "standard discrete hazard must not exceed 1");
            s[l] = std::isinf(h) ? 0.0 : s[l - 1] * (1.0 - h);
        }
    }
    return SurvivalCurve(grid, std::move(s));
}

}  // namespace hzrd
