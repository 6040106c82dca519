#pragma once

#include "hzrd/metrics.hpp"
#include "hzrd/survival.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace hzrd::test {

// d-dimensional, L = 1 cohort with the given outcomes; covariates all ones.
inline Cohort outcome_cohort(const std::vector<double>& times, const std::vector<bool>& events, std::size_t d = 1) {
    std::vector<Subject> subjects;
    for (std::size_t i = 0; i < times.size(); ++i)
        subjects.push_back({"p" + std::to_string(i), times[i], events[i], CovariateSequence(RowMatrix::Ones(1, d))});
    return Cohort(std::move(subjects));
}

inline Cohort random_cohort(std::size_t n, std::size_t d, std::size_t seq_len, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> day(1, 30);
    std::bernoulli_distribution event(0.6);
    std::vector<Subject> subjects;
    for (std::size_t i = 0; i < n; ++i) {
        RowMatrix x(seq_len, d);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
        subjects.push_back({"r" + std::to_string(i), double(day(rng)), event(rng), CovariateSequence(x)});
    }
    subjects.front().event = true;
    return Cohort(std::move(subjects));
}

inline RiskScoreSet score_set(std::vector<double> scores, std::vector<double> times, std::vector<bool> events) {
    return {std::move(scores), std::move(times), std::move(events)};
}

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("hzrd-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace hzrd::test
