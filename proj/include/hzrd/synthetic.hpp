#pragma once

#include "hzrd/survival.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hzrd {

enum class SequenceMode {
    // Every slot an independent standard normal draw; only the newest matters.
    Static,
    // A latent current state drives the hazard and each slot is a noisy
    // reading of it, noisier the older the slot. Combining slots with
    // recency-dependent weights beats reading the newest slot alone.
    Drifting,
};

enum class CensoringMode { Exponential, Administrative };

struct SyntheticSpec {
    std::size_t n = 2000;
    std::size_t dimension = 5;
    std::size_t sequence_length = 3;
    Eigen::VectorXd beta;  // empty means zeros
    double baseline_rate = 1.0 / 500.0;
    // Exponential rate per day, or the end of follow-up (days) for
    // administrative censoring drawn uniformly on (0, horizon].
    double censoring_rate = 1.0 / 1200.0;
    CensoringMode censoring = CensoringMode::Exponential;
    double admin_horizon = 1000.0;
    SequenceMode mode = SequenceMode::Static;
    // Reading noise of the newest slot in drifting mode; slot age a (0 for
    // the newest) gets (a + 1) times this standard deviation.
    double drift_noise = 1.0;
    std::uint64_t seed = 0;

    // Throws std::invalid_argument.
    void validate() const;
};

struct SyntheticCohort {
    Cohort cohort;
    Eigen::VectorXd beta;
    std::vector<double> true_psi;  // aligned with cohort subjects
};

// Covariates are rounded to 32-bit precision so that they survive the
// on-disk format unchanged. Times are continuous days; ids "s000001"...
SyntheticCohort synthesize_cohort(const SyntheticSpec& spec);

// JSON sidecar {"beta": [...], "subjects": [{"id", "psi"}...]}.
void write_ground_truth(const std::filesystem::path& path, const SyntheticCohort& data);

struct GroundTruth {
    Eigen::VectorXd beta;
    std::vector<std::string> ids;
    std::vector<double> psi;
};

GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace hzrd
