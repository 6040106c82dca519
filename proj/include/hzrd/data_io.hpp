#pragma once

#include "hzrd/survival.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hzrd {

inline constexpr std::uint16_t kCovariateFormatVersion = 0x0100;

// Key-value text document tying the outcome table to the covariate matrix.
// Relative paths resolve against the manifest's directory.
struct CohortManifest {
    std::filesystem::path outcomes;
    std::filesystem::path covariates;
    std::size_t dimension = 0;
    std::size_t sequence_length = 0;
    int grid_resolution = 1;

    static CohortManifest read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;
};

struct OutcomeRow {
    std::string subject_id;
    double time_days = 0.0;
    bool event = false;
};

// Comma-delimited, header "subject_id,time_days,event", event in {0, 1}.
std::vector<OutcomeRow> read_outcomes(std::istream& in);
void write_outcomes(std::ostream& out, const std::vector<OutcomeRow>& rows);

// Decoded "HZCV" file.
struct CovariateMatrix {
    std::vector<std::string> ids;
    std::vector<CovariateSequence> sequences;
    std::size_t sequence_length = 0;
    std::size_t dimension = 0;
};

// HZCV layout (little-endian): "HZCV", u16 version, u32 n, u32 L, u32 d,
// n x (u32 byte length + UTF-8 id), n*L*d f32 values (subject, slot, feature),
// then n * ceil(L/8) presence bytes (bit k = slot k).
std::vector<std::uint8_t> encode_covariate_matrix(const std::vector<std::string>& ids,
                                                  const std::vector<CovariateSequence>& sequences);
CovariateMatrix decode_covariate_matrix(const std::vector<std::uint8_t>& bytes);
void write_covariate_matrix(const std::filesystem::path& path, const std::vector<std::string>& ids,
                            const std::vector<CovariateSequence>& sequences);
CovariateMatrix read_covariate_matrix(const std::filesystem::path& path);

// Loads and validates. Outcome rows censored at day 0 are dropped with a
// warning before validation.
Cohort load_cohort(const std::filesystem::path& manifest_path);
Cohort load_cohort(const CohortManifest& manifest, const std::filesystem::path& base_dir);

// Writes <dir>/manifest.txt, outcomes.csv and covariates.hzcv; returns the manifest path.
std::filesystem::path save_cohort(const Cohort& cohort, const std::filesystem::path& dir, int grid_resolution = 1);

struct DatedReport {
    std::chrono::sys_days date;
    Eigen::VectorXd features;
};

// Keeps the L most recent reports, oldest first, left-padded with zero
// vectors. Reports sharing a date keep their input order.
CovariateSequence assemble_sequence(const std::vector<DatedReport>& reports, std::size_t sequence_length);

// ISO "YYYY-MM-DD"; throws DataError on malformed or impossible dates.
std::chrono::sys_days parse_date(const std::string& text);

// Whole days from the most recent report to death or last follow-up; nullopt
// (with a warning) when the outcome precedes the report.
std::optional<std::int64_t> time_to_event(std::chrono::sys_days most_recent_report, std::chrono::sys_days outcome);

}  // namespace hzrd
