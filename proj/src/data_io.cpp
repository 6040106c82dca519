#include "hzrd/data_io.hpp"

#include "binary_io.hpp"
#include "hzrd/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hzrd {

namespace {

using Code = DataError::Code;
constexpr std::string_view kMagic = "HZCV";

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
    T v{};
    const auto t = trim(text);
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw DataError(Code::Parse, "cannot parse " + what + " from '" + text + "'");
    return v;
}

}  // namespace

CohortManifest CohortManifest::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(Code::Io, "cannot open manifest '" + path.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError(Code::Parse, "manifest line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(Code::Parse, "manifest lacks '" + key + "'");
        return it->second;
    };
    if (kv.count("version") && parse_number<int>(kv["version"], "manifest version") != 1)
        throw DataError(Code::UnsupportedVersion, "unsupported manifest version " + kv["version"]);
    CohortManifest m;
    m.outcomes = need("outcomes");
    m.covariates = need("covariates");
    m.dimension = parse_number<std::size_t>(need("dimension"), "dimension");
    m.sequence_length = parse_number<std::size_t>(need("sequence_length"), "sequence_length");
    if (kv.count("grid_resolution")) m.grid_resolution = parse_number<int>(kv["grid_resolution"], "grid_resolution");
    return m;
}

void CohortManifest::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(Code::Io, "cannot write manifest '" + path.string() + "'");
    out << "# hzrd cohort manifest\n"
        << "version = 1\n"
        << "outcomes = " << outcomes.generic_string() << '\n'
        << "covariates = " << covariates.generic_string() << '\n'
        << "dimension = " << dimension << '\n'
        << "sequence_length = " << sequence_length << '\n'
        << "grid_resolution = " << grid_resolution << '\n';
    if (!out) throw DataError(Code::Io, "write failed for '" + path.string() + "'");
}

std::vector<OutcomeRow> read_outcomes(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != "subject_id,time_days,event")
        throw DataError(Code::Parse, "outcomes table must start with header subject_id,time_days,event");
    std::vector<OutcomeRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 3)
            throw DataError(Code::Parse, "outcomes line " + std::to_string(lineno) + ": expected 3 fields");
        OutcomeRow r;
        r.subject_id = trim(f[0]);
        r.time_days = parse_number<double>(f[1], "time_days");
        const int ev = parse_number<int>(f[2], "event");
        if (ev != 0 && ev != 1) throw DataError(Code::Parse, "event must be 0 or 1 on line " + std::to_string(lineno));
        r.event = ev == 1;
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_outcomes(std::ostream& out, const std::vector<OutcomeRow>& rows) {
    out << "subject_id,time_days,event\n";
    for (const auto& r : rows) {
        if (r.subject_id.find_first_of(",\n\r") != std::string::npos)
            throw DataError(Code::Invalid, "subject id contains a delimiter: '" + r.subject_id + "'");
        out << r.subject_id << ',' << shortest(r.time_days) << ',' << (r.event ? 1 : 0) << '\n';
    }
}

std::vector<std::uint8_t> encode_covariate_matrix(const std::vector<std::string>& ids,
                                                  const std::vector<CovariateSequence>& sequences) {
    if (ids.empty()) throw DataError(Code::EmptyCohort, "empty cohort");
    if (ids.size() != sequences.size()) throw DataError(Code::RowCountMismatch, "ids and sequences differ in count");
    const std::size_t seq_len = sequences.front().length();
    const std::size_t d = sequences.front().dimension();
    for (const auto& s : sequences)
        if (s.length() != seq_len || s.dimension() != d)
            throw DataError(Code::DimensionMismatch, "dimension mismatch among covariate sequences");

    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u16(kCovariateFormatVersion);
    w.u32(static_cast<std::uint32_t>(ids.size()));
    w.u32(static_cast<std::uint32_t>(seq_len));
    w.u32(static_cast<std::uint32_t>(d));
    for (const auto& id : ids) {
        w.u32(static_cast<std::uint32_t>(id.size()));
        w.bytes(id);
    }
    for (const auto& s : sequences) {
        const auto flat = s.flattened();
        for (Eigen::Index k = 0; k < flat.size(); ++k) w.f32(static_cast<float>(flat[k]));
    }
    const std::size_t mask_bytes = (seq_len + 7) / 8;
    for (const auto& s : sequences) {
        for (std::size_t b = 0; b < mask_bytes; ++b) {
            std::uint8_t byte = 0;
            for (std::size_t bit = 0; bit < 8 && 8 * b + bit < seq_len; ++bit)
                if (s.present(8 * b + bit)) byte |= static_cast<std::uint8_t>(1u << bit);
            w.u8(byte);
        }
    }
    return w.take();
}

CovariateMatrix decode_covariate_matrix(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "covariate matrix header");
    if (r.bytes(4) != kMagic) throw DataError(Code::CorruptHeader, "corrupt covariate matrix header: bad magic");
    const std::uint16_t version = r.u16();
    if ((version >> 8) != (kCovariateFormatVersion >> 8))
        throw DataError(Code::UnsupportedVersion, "unsupported covariate matrix version " + std::to_string(version >> 8));
    CovariateMatrix m;
    const std::size_t n = r.u32();
    m.sequence_length = r.u32();
    m.dimension = r.u32();
    if (n == 0 || m.sequence_length == 0 || m.dimension == 0)
        throw DataError(Code::CorruptHeader, "corrupt covariate matrix header: zero count");
    const std::size_t mask_bytes = (m.sequence_length + 7) / 8;
    m.ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = r.u32();
        m.ids.push_back(r.bytes(len));
    }
    const std::size_t width = m.sequence_length * m.dimension;
    if (r.remaining() != n * width * 4 + n * mask_bytes)
        throw DataError(Code::CorruptHeader, "corrupt covariate matrix: payload size disagrees with header");

    std::vector<RowMatrix> values(n, RowMatrix(static_cast<Eigen::Index>(m.sequence_length),
                                               static_cast<Eigen::Index>(m.dimension)));
    for (auto& v : values)
        for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = static_cast<double>(r.f32());
    m.sequences.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<bool> present(m.sequence_length);
        for (std::size_t b = 0; b < mask_bytes; ++b) {
            const std::uint8_t byte = r.u8();
            for (std::size_t bit = 0; bit < 8 && 8 * b + bit < m.sequence_length; ++bit)
                present[8 * b + bit] = (byte >> bit) & 1u;
        }
        m.sequences.emplace_back(std::move(values[i]), std::move(present));
    }
    return m;
}

void write_covariate_matrix(const std::filesystem::path& path, const std::vector<std::string>& ids,
                            const std::vector<CovariateSequence>& sequences) {
    detail::write_file_bytes(path.string(), encode_covariate_matrix(ids, sequences));
}

CovariateMatrix read_covariate_matrix(const std::filesystem::path& path) {
    return decode_covariate_matrix(detail::read_file_bytes(path.string()));
}

Cohort load_cohort(const std::filesystem::path& manifest_path) {
    return load_cohort(CohortManifest::read(manifest_path), manifest_path.parent_path());
}

Cohort load_cohort(const CohortManifest& manifest, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base_dir / p; };
    std::ifstream outcomes_in(resolve(manifest.outcomes));
    if (!outcomes_in) throw DataError(Code::Io, "cannot open outcomes table '" + resolve(manifest.outcomes).string() + "'");
    const auto rows = read_outcomes(outcomes_in);
    CovariateMatrix matrix = read_covariate_matrix(resolve(manifest.covariates));

    if (matrix.dimension != manifest.dimension || matrix.sequence_length != manifest.sequence_length)
        throw DataError(Code::DimensionMismatch,
                        "dimension mismatch: manifest says d=" + std::to_string(manifest.dimension) + ", L=" +
                            std::to_string(manifest.sequence_length) + " but matrix has d=" +
                            std::to_string(matrix.dimension) + ", L=" + std::to_string(matrix.sequence_length));
    if (rows.size() != matrix.ids.size())
        throw DataError(Code::RowCountMismatch, "row-count mismatch: " + std::to_string(rows.size()) +
                                                    " outcome rows vs " + std::to_string(matrix.ids.size()) +
                                                    " covariate rows");
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < matrix.ids.size(); ++i)
        if (!slot.emplace(matrix.ids[i], i).second)
            throw DataError(Code::Invalid, "duplicate subject id '" + matrix.ids[i] + "' in covariate matrix");

    std::vector<Subject> subjects;
    subjects.reserve(rows.size());
    std::size_t dropped = 0;
    double t_max = 0.0;
    for (const auto& r : rows) {
        auto it = slot.find(r.subject_id);
        if (it == slot.end())
            throw DataError(Code::MissingSubject, "missing subject '" + r.subject_id + "' in covariate matrix");
        if (r.time_days == 0.0 && !r.event) {
            ++dropped;
            continue;
        }
        subjects.push_back({r.subject_id, r.time_days, r.event, std::move(matrix.sequences[it->second])});
        t_max = std::max(t_max, r.time_days);
    }
    if (dropped > 0) spdlog::warn("dropped {} subject(s) censored at day 0", dropped);
    if (subjects.empty()) throw DataError(Code::EmptyCohort, "empty cohort");
    Cohort cohort(std::move(subjects), manifest.dimension, manifest.sequence_length,
                  TimeGrid::daily(t_max, manifest.grid_resolution));
    return validate_cohort(cohort);
}

std::filesystem::path save_cohort(const Cohort& cohort, const std::filesystem::path& dir, int grid_resolution) {
    std::filesystem::create_directories(dir);
    std::vector<OutcomeRow> rows;
    std::vector<std::string> ids;
    std::vector<CovariateSequence> seqs;
    for (const auto& s : cohort.subjects()) {
        rows.push_back({s.id, s.time, s.event});
        ids.push_back(s.id);
        seqs.push_back(s.covariates);
    }
    {
        std::ofstream out(dir / "outcomes.csv", std::ios::trunc);
        if (!out) throw DataError(Code::Io, "cannot write outcomes table in '" + dir.string() + "'");
        write_outcomes(out, rows);
    }
    write_covariate_matrix(dir / "covariates.hzcv", ids, seqs);
    CohortManifest m;
    m.outcomes = "outcomes.csv";
    m.covariates = "covariates.hzcv";
    m.dimension = cohort.dimension();
    m.sequence_length = cohort.sequence_length();
    m.grid_resolution = grid_resolution;
    const auto path = dir / "manifest.txt";
    m.write(path);
    return path;
}

CovariateSequence assemble_sequence(const std::vector<DatedReport>& reports, std::size_t sequence_length) {
    if (reports.empty()) throw DataError(Code::Invalid, "subject has zero reports");
    if (sequence_length == 0) throw DataError(Code::Invalid, "sequence length must be >= 1");
    const auto d = reports.front().features.size();
    std::vector<std::size_t> order(reports.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reports[a].date < reports[b].date; });

    const std::size_t kept = std::min(sequence_length, reports.size());
    const std::size_t pad = sequence_length - kept;
    RowMatrix values = RowMatrix::Zero(static_cast<Eigen::Index>(sequence_length), d);
    std::vector<bool> present(sequence_length, false);
    for (std::size_t k = 0; k < kept; ++k) {
        const auto& rep = reports[order[order.size() - kept + k]];
        if (rep.features.size() != d) throw DataError(Code::DimensionMismatch, "reports differ in dimension");
        values.row(static_cast<Eigen::Index>(pad + k)) = rep.features.transpose();
        present[pad + k] = true;
    }
    return CovariateSequence(std::move(values), std::move(present));
}

std::chrono::sys_days parse_date(const std::string& text) {
    const auto t = trim(text);
    if (t.size() != 10 || t[4] != '-' || t[7] != '-') throw DataError(Code::Parse, "malformed date '" + text + "'");
    const int y = parse_number<int>(t.substr(0, 4), "year");
    const unsigned mo = parse_number<unsigned>(t.substr(5, 2), "month");
    const unsigned dd = parse_number<unsigned>(t.substr(8, 2), "day");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{dd}};
    if (!ymd.ok()) throw DataError(Code::Parse, "invalid calendar date '" + text + "'");
    return std::chrono::sys_days{ymd};
}

std::optional<std::int64_t> time_to_event(std::chrono::sys_days most_recent_report, std::chrono::sys_days outcome) {
    const auto days = (outcome - most_recent_report).count();
    if (days < 0) {
        spdlog::warn("outcome date precedes the most recent report by {} day(s); subject excluded", -days);
        return std::nullopt;
    }
    return days;
}

}  // namespace hzrd
