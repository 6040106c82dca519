#include "support.hpp"

#include "hzrd/metrics.hpp"
#include "hzrd/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hzrd;

namespace {

// P(T_j < T_i | x_i < x_j) folded into the usual concordance probability for
// a one-covariate PH model with beta = 1 and x ~ N(0, 1), no censoring:
// 2 * int int_{x_j > x_i} phi(x_i) phi(x_j) e^{x_j} / (e^{x_i} + e^{x_j}) dx_i dx_j.
double analytic_concordance() {
    const int n = 1600;
    const double lo = -8.0;
    const double hi = 8.0;
    const double h = (hi - lo) / n;
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
        const double xi = lo + (a + 0.5) * h;
        for (int b = 0; b < n; ++b) {
            const double xj = lo + (b + 0.5) * h;
            if (xj <= xi) continue;
            total += phi(xi) * phi(xj) / (1.0 + std::exp(xi - xj));
        }
    }
    return 2.0 * total * h * h;
}

}  // namespace

TEST_CASE("generator is reproducible and valid") {
    SyntheticSpec spec;
    spec.n = 200;
    spec.beta = Eigen::VectorXd::Ones(5);
    spec.seed = 9;
    const auto a = synthesize_cohort(spec);
    const auto b = synthesize_cohort(spec);
    CHECK(a.cohort == b.cohort);
    CHECK(a.true_psi == b.true_psi);
    CHECK_NOTHROW(validate_cohort(a.cohort));
    spec.seed = 10;
    CHECK(!(synthesize_cohort(spec).cohort == a.cohort));
    spec.mode = SequenceMode::Drifting;
    CHECK_NOTHROW(validate_cohort(synthesize_cohort(spec).cohort));
    spec.censoring = CensoringMode::Administrative;
    spec.admin_horizon = 400;
    const auto admin = synthesize_cohort(spec);
    for (const auto& s : admin.cohort.subjects()) CHECK(s.time <= 400.0);
}

TEST_CASE("static mode risk depends on the newest slot") {
    SyntheticSpec spec;
    spec.n = 50;
    spec.dimension = 3;
    spec.beta = Eigen::Vector3d(0.5, -1.0, 2.0);
    const auto syn = synthesize_cohort(spec);
    for (std::size_t i = 0; i < syn.cohort.size(); ++i) {
        const auto& x = syn.cohort[i].covariates.values();
        CHECK(syn.true_psi[i] == doctest::Approx(spec.beta.dot(x.row(2).transpose())).epsilon(1e-12));
        CHECK(x.cast<float>().cast<double>() == x);
    }
}

TEST_CASE("null signal gives constant truth and chance concordance") {
    SyntheticSpec spec;
    spec.n = 3000;
    spec.seed = 4;
    const auto syn = synthesize_cohort(spec);
    for (double psi : syn.true_psi) CHECK(psi == 0.0);
    RiskScoreSet s{syn.true_psi, syn.cohort.times(), syn.cohort.events()};
    CHECK(harrell_c_index(s, TieMode::Half) == 0.5);
}

TEST_CASE("vanishing censoring rate") {
    SyntheticSpec spec;
    spec.n = 10000;
    spec.beta = Eigen::VectorXd::Constant(5, 0.3);
    spec.censoring_rate = spec.baseline_rate / 1000;
    const auto syn = synthesize_cohort(spec);
    const double censored = 1.0 - double(syn.cohort.event_count()) / double(syn.cohort.size());
    CHECK(censored < 0.02);
}

TEST_CASE("empirical concordance matches the analytic PH value") {
    SyntheticSpec spec;
    spec.n = 10000;
    spec.dimension = 1;
    spec.sequence_length = 1;
    spec.beta = Eigen::VectorXd::Ones(1);
    spec.censoring_rate = 1e-9;
    spec.seed = 21;
    const auto syn = synthesize_cohort(spec);
    RiskScoreSet s{syn.true_psi, syn.cohort.times(), syn.cohort.events()};
    const double oracle = analytic_concordance();
    CHECK(oracle > 0.6);
    CHECK(oracle < 0.75);
    CHECK(std::abs(harrell_c_index(s) - oracle) < 0.02);
}

TEST_CASE("drifting mode readings") {
    SyntheticSpec spec;
    spec.n = 20000;
    spec.dimension = 1;
    spec.beta = Eigen::VectorXd::Ones(1);
    spec.mode = SequenceMode::Drifting;
    const auto syn = synthesize_cohort(spec);
    // Every slot has unit variance; correlation with the latent state falls with age.
    Eigen::MatrixXd x(syn.cohort.size(), 3);
    Eigen::VectorXd z(syn.cohort.size());
    for (std::size_t i = 0; i < syn.cohort.size(); ++i) {
        x.row(Eigen::Index(i)) = syn.cohort[i].covariates.values().col(0).transpose();
        z[Eigen::Index(i)] = syn.true_psi[i];
    }
    const double n = double(syn.cohort.size());
    double prev = 1.0;
    for (Eigen::Index k = 2; k >= 0; --k) {
        const double var = x.col(k).squaredNorm() / n;
        CHECK(var == doctest::Approx(1.0).epsilon(0.05));
        const double corr = x.col(k).dot(z) / n;
        const double sd = spec.drift_noise * double(3 - k);
        CHECK(corr == doctest::Approx(1.0 / std::sqrt(1.0 + sd * sd)).epsilon(0.05));
        CHECK(corr < prev);
        prev = corr;
    }
}

TEST_CASE("slot permutation keeps the flattened multiset") {
    SyntheticSpec spec;
    spec.n = 20;
    spec.mode = SequenceMode::Drifting;
    spec.beta = Eigen::VectorXd::Ones(5);
    const auto syn = synthesize_cohort(spec);
    for (const auto& s : syn.cohort.subjects()) {
        RowMatrix shuffled = s.covariates.values();
        shuffled.row(0).swap(shuffled.row(2));
        std::vector<double> a(s.covariates.values().data(), s.covariates.values().data() + 15);
        std::vector<double> b(shuffled.data(), shuffled.data() + 15);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
}

TEST_CASE("spec validation") {
    SyntheticSpec spec;
    spec.n = 1;
    CHECK_THROWS(synthesize_cohort(spec));
    spec.n = 10;
    spec.baseline_rate = 0;
    CHECK_THROWS(synthesize_cohort(spec));
    spec.baseline_rate = 0.01;
    spec.beta = Eigen::VectorXd::Ones(2);
    CHECK_THROWS(synthesize_cohort(spec));
}

TEST_CASE("ground truth sidecar") {
    SyntheticSpec spec;
    spec.n = 30;
    spec.beta = Eigen::VectorXd::LinSpaced(5, -1, 1);
    const auto syn = synthesize_cohort(spec);
    test::TempDir dir("truth");
    write_ground_truth(dir / "truth.json", syn);
    const auto g = read_ground_truth(dir / "truth.json");
    CHECK(g.beta == syn.beta);
    CHECK(g.psi == syn.true_psi);
    CHECK(g.ids.front() == syn.cohort[0].id);
}
