#include "support.hpp"

#include "hzrd/error.hpp"
#include "hzrd/partial_likelihood.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace hzrd;

namespace {

// Term-by-term evaluation straight from the definition: for every event
// subject i, psi_i - log sum_{j: z_j >= z_i} exp(psi_j). No shared helpers.
double brute_force_loss(const std::vector<double>& psi, const std::vector<double>& t, const std::vector<bool>& e) {
    double total = 0.0;
    int deaths = 0;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        if (!e[i]) continue;
        ++deaths;
        double denom = 0.0;
        for (std::size_t j = 0; j < psi.size(); ++j)
            if (t[j] >= t[i]) denom += std::exp(psi[j]);
        total += psi[i] - std::log(denom);
    }
    return -total / deaths;
}

double loss_of(const std::vector<double>& psi, const RiskSetIndex& idx, double n) {
    return neg_avg_partial_log_likelihood(psi, idx, n);
}

struct RandomCase {
    std::vector<double> t;
    std::vector<bool> e;
    std::vector<double> psi;
};

RandomCase random_case(std::size_t n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> day(1, 12);
    std::bernoulli_distribution ev(0.5);
    std::normal_distribution<double> normal;
    RandomCase c;
    for (std::size_t i = 0; i < n; ++i) {
        c.t.push_back(day(rng));
        c.e.push_back(ev(rng));
        c.psi.push_back(normal(rng));
    }
    c.e[0] = true;
    return c;
}

double events_in(const std::vector<bool>& e) { return double(std::count(e.begin(), e.end(), true)); }

}  // namespace

TEST_CASE("risk set construction") {
    SUBCASE("censored subject leaves before the event") {
        const std::vector<double> t{5, 3};
        const auto idx = build_risk_sets(t, {true, false});
        REQUIRE(idx.event_times == std::vector<double>{5});
        CHECK(idx.deaths[0] == std::vector<std::size_t>{0});
        CHECK(idx.risk_set(0) == std::vector<std::size_t>{0});
    }
    SUBCASE("two event times") {
        const std::vector<double> t{2, 5, 7};
        const auto idx = build_risk_sets(t, {true, true, false});
        REQUIRE(idx.event_times == std::vector<double>{2, 5});
        auto r0 = idx.risk_set(0);
        auto r1 = idx.risk_set(1);
        std::sort(r0.begin(), r0.end());
        std::sort(r1.begin(), r1.end());
        CHECK(r0 == std::vector<std::size_t>{0, 1, 2});
        CHECK(r1 == std::vector<std::size_t>{1, 2});
    }
    SUBCASE("shared event time") {
        const std::vector<double> t(6, 4.0);
        const auto idx = build_risk_sets(t, std::vector<bool>(6, true));
        REQUIRE(idx.event_times.size() == 1);
        CHECK(idx.risk_set_size(0) == 6);
        CHECK(idx.deaths[0].size() == 6);
    }
    SUBCASE("invariants on random data") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const auto c = random_case(40, rng);
            const auto idx = build_risk_sets(c.t, c.e);
            for (std::size_t l = 0; l < idx.event_times.size(); ++l) {
                CHECK(!idx.deaths[l].empty());
                const auto r = idx.risk_set(l);
                for (auto i : idx.deaths[l]) CHECK(std::find(r.begin(), r.end(), i) != r.end());
                for (std::size_t j = 0; j < c.t.size(); ++j)
                    CHECK((std::find(r.begin(), r.end(), j) != r.end()) == (c.t[j] >= idx.event_times[l]));
                if (l > 0) CHECK(idx.risk_set_size(l) <= idx.risk_set_size(l - 1));
            }
        }
    }
}

TEST_CASE("loss fixtures") {
    const std::vector<double> t{1, 2};
    const auto idx = build_risk_sets(t, {true, false});
    CHECK(std::abs(loss_of({0, 0}, idx, 1) - std::log(2.0)) < 1e-12);
    for (double c : {-100.0, -1.0, 1.0, 100.0}) CHECK(std::abs(loss_of({c, c}, idx, 1) - std::log(2.0)) < 1e-10);

    const std::vector<double> t3{1, 2, 3};
    const std::vector<bool> e3{true, true, false};
    const std::vector<double> psi{std::log(1.0), std::log(2.0), std::log(3.0)};
    // Hand enumeration: -(1/2)[(ln1 - ln6) + (ln2 - ln5)].
    const double hand = -0.5 * ((0.0 - std::log(6.0)) + (std::log(2.0) - std::log(5.0)));
    CHECK(std::abs(loss_of(psi, build_risk_sets(t3, e3), 2) - hand) < 1e-12);
    CHECK(std::abs(brute_force_loss(psi, t3, e3) - hand) < 1e-12);
}

TEST_CASE("loss matches brute force on small cohorts") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(1, 30);
    double worst = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto c = random_case(size(rng), rng);
        const auto idx = build_risk_sets(c.t, c.e);
        worst = std::max(worst, std::abs(loss_of(c.psi, idx, events_in(c.e)) - brute_force_loss(c.psi, c.t, c.e)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("shift invariance and extreme magnitudes") {
    std::mt19937_64 rng(5);
    const auto c = random_case(60, rng);
    const auto idx = build_risk_sets(c.t, c.e);
    const double base = loss_of(c.psi, idx, events_in(c.e));
    for (double shift : {-1000.0, -100.0, -1.0, 1.0, 100.0, 1000.0}) {
        auto s = c.psi;
        for (auto& v : s) v += shift;
        CHECK(std::abs(loss_of(s, idx, events_in(c.e)) - base) < 1e-10);
    }
    auto big = c.psi;
    big[3] = 800.0;
    CHECK(std::isfinite(loss_of(big, idx, events_in(c.e))));
}

TEST_CASE("constant psi gives the log risk-set size formula") {
    std::mt19937_64 rng(8);
    const auto c = random_case(40, rng);
    const auto idx = build_risk_sets(c.t, c.e);
    double expected = 0.0;
    for (std::size_t l = 0; l < idx.event_times.size(); ++l)
        expected += double(idx.deaths[l].size()) * std::log(double(idx.risk_set_size(l)));
    expected /= events_in(c.e);
    const std::vector<double> flat(c.t.size(), 0.7);
    CHECK(std::abs(loss_of(flat, idx, events_in(c.e)) - expected) < 1e-12);
    CHECK(expected >= 0.0);
}

TEST_CASE("NaN input rejected") {
    const std::vector<double> t{1, 2};
    const auto idx = build_risk_sets(t, {true, false});
    CHECK_THROWS_AS(loss_of({std::numeric_limits<double>::quiet_NaN(), 0.0}, idx, 1), NumericError);
}

TEST_CASE("gradient against central differences") {
    SUBCASE("two-subject fixture") {
        const std::vector<double> t{1, 2};
        const auto idx = build_risk_sets(t, {true, false});
        const Eigen::VectorXd g = partial_likelihood_gradient(std::vector<double>{0, 0}, idx, 1);
        CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-14));
        CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-14));
    }
    SUBCASE("random cohorts n = 50") {
        std::mt19937_64 rng(23);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const auto c = random_case(50, rng);
            const auto idx = build_risk_sets(c.t, c.e);
            const double n = events_in(c.e);
            const Eigen::VectorXd g = partial_likelihood_gradient(c.psi, idx, n);
            for (std::size_t i = 0; i < c.psi.size(); ++i) {
                auto up = c.psi;
                auto dn = c.psi;
                const double h = 1e-5;
                up[i] += h;
                dn[i] -= h;
                const double fd = (loss_of(up, idx, n) - loss_of(dn, idx, n)) / (2 * h);
                const double scale = std::max({std::abs(fd), std::abs(g[Eigen::Index(i)]), 1e-3});
                worst = std::max(worst, std::abs(fd - g[Eigen::Index(i)]) / scale);
            }
        }
        CHECK(worst < 1e-6);
    }
    SUBCASE("combined call agrees with separate calls") {
        std::mt19937_64 rng(29);
        const auto c = random_case(30, rng);
        const auto idx = build_risk_sets(c.t, c.e);
        const auto lg = partial_likelihood_loss_gradient(c.psi, idx, events_in(c.e));
        CHECK(lg.loss == loss_of(c.psi, idx, events_in(c.e)));
        CHECK((lg.gradient - partial_likelihood_gradient(c.psi, idx, events_in(c.e))).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("gradient sums to zero") {
    std::mt19937_64 rng(31);
    SUBCASE("all events, one shared risk set") {
        const std::vector<double> t(10, 3.0);
        std::normal_distribution<double> normal;
        std::vector<double> psi(10);
        for (auto& v : psi) v = normal(rng);
        const auto g = partial_likelihood_gradient(psi, build_risk_sets(t, std::vector<bool>(10, true)), 10);
        CHECK(std::abs(g.sum()) < 1e-12);
    }
    SUBCASE("any cohort, uniform shift direction") {
        const auto c = random_case(80, rng);
        const auto g = partial_likelihood_gradient(c.psi, build_risk_sets(c.t, c.e), events_in(c.e));
        CHECK(std::abs(g.sum()) < 1e-10);
    }
}

TEST_CASE("raising a censored subject's psi raises the loss") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        auto c = random_case(25, rng);
        std::size_t k = 0;
        for (; k < c.e.size(); ++k)
            if (!c.e[k]) break;
        if (k == c.e.size()) continue;
        // Make sure k sits in at least one risk set.
        c.t[k] = 20;
        const auto idx = build_risk_sets(c.t, c.e);
        const double n = events_in(c.e);
        const double before = loss_of(c.psi, idx, n);
        c.psi[k] += 0.5;
        CHECK(loss_of(c.psi, idx, n) > before);
    }
}
