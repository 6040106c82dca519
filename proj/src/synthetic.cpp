#include "hzrd/synthetic.hpp"

#include "hzrd/error.hpp"
#include "hzrd/random.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace hzrd {

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid synthetic spec: " + what); };
    if (n < 2) fail("n must be >= 2");
    if (dimension == 0) fail("dimension must be >= 1");
    if (sequence_length == 0) fail("sequence length must be >= 1");
    if (beta.size() != 0 && static_cast<std::size_t>(beta.size()) != dimension) fail("beta length differs from d");
    if (beta.size() != 0 && !beta.allFinite()) fail("beta must be finite");
    if (!(baseline_rate > 0.0) || !std::isfinite(baseline_rate)) fail("baseline rate must be > 0");
    if (censoring == CensoringMode::Exponential && !(censoring_rate > 0.0)) fail("censoring rate must be > 0");
    if (censoring == CensoringMode::Administrative && !(admin_horizon > 0.0)) fail("horizon must be > 0");
    if (!(drift_noise >= 0.0)) fail("drift noise must be >= 0");
}

SyntheticCohort synthesize_cohort(const SyntheticSpec& spec) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.dimension);
    const auto seq_len = static_cast<Eigen::Index>(spec.sequence_length);
    const Eigen::VectorXd beta = spec.beta.size() ? spec.beta : Eigen::VectorXd::Zero(d);

    Rng covariate_rng(derive_seed(spec.seed, 0xC0, 1));
    Rng time_rng(derive_seed(spec.seed, 0xC0, 2));
    std::normal_distribution<double> normal;
    std::exponential_distribution<double> unit_exp(1.0);
    std::uniform_real_distribution<double> unit_uniform(0.0, 1.0);
    auto to_f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };

    SyntheticCohort out;
    out.beta = beta;
    std::vector<Subject> subjects;
    subjects.reserve(spec.n);
    double t_max = 0.0;
    for (std::size_t i = 0; i < spec.n; ++i) {
        RowMatrix x(seq_len, d);
        double psi = 0.0;
        if (spec.mode == SequenceMode::Static) {
            for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = to_f32(normal(covariate_rng));
            psi = beta.dot(x.row(seq_len - 1).transpose());
        } else {
            Eigen::VectorXd state(d);
            for (Eigen::Index j = 0; j < d; ++j) state[j] = normal(covariate_rng);
            for (Eigen::Index k = 0; k < seq_len; ++k) {
                const double sd = spec.drift_noise * static_cast<double>(seq_len - k);
                const double scale = 1.0 / std::sqrt(1.0 + sd * sd);
                for (Eigen::Index j = 0; j < d; ++j) x(k, j) = to_f32((state[j] + sd * normal(covariate_rng)) * scale);
            }
            psi = beta.dot(state);
        }

        const double event_time = unit_exp(time_rng) / (spec.baseline_rate * std::exp(psi));
        const double censor_time = spec.censoring == CensoringMode::Exponential
                                       ? unit_exp(time_rng) / spec.censoring_rate
                                       : spec.admin_horizon * (1.0 - unit_uniform(time_rng));
        Subject s;
        char id[32];
        std::snprintf(id, sizeof id, "s%06zu", i + 1);
        s.id = id;
        s.event = event_time <= censor_time;
        s.time = std::min(event_time, censor_time);
        s.covariates = CovariateSequence(std::move(x));
        t_max = std::max(t_max, s.time);
        subjects.push_back(std::move(s));
        out.true_psi.push_back(psi);
    }
    out.cohort = Cohort(std::move(subjects), spec.dimension, spec.sequence_length, TimeGrid::daily(t_max));
    return out;
}

void write_ground_truth(const std::filesystem::path& path, const SyntheticCohort& data) {
    nlohmann::json j;
    j["beta"] = std::vector<double>(data.beta.data(), data.beta.data() + data.beta.size());
    auto& subjects = j["subjects"] = nlohmann::json::array();
    for (std::size_t i = 0; i < data.cohort.size(); ++i)
        subjects.push_back({{"id", data.cohort[i].id}, {"psi", data.true_psi[i]}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(DataError::Code::Io, "cannot write ground truth '" + path.string() + "'");
    out << j.dump(1) << '\n';
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(DataError::Code::Io, "cannot open ground truth '" + path.string() + "'");
    GroundTruth g;
    try {
        const auto j = nlohmann::json::parse(in);
        const auto beta = j.at("beta").get<std::vector<double>>();
        g.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
        for (const auto& s : j.at("subjects")) {
            g.ids.push_back(s.at("id").get<std::string>());
            g.psi.push_back(s.at("psi").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataError::Code::Parse, std::string("malformed ground truth: ") + e.what());
    }
    return g;
}

}  // namespace hzrd
