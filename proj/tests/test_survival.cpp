#include "support.hpp"

#include "hzrd/error.hpp"
#include "hzrd/survival.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace hzrd;

namespace {

DataError::Code code_of(auto&& fn) {
    try {
        fn();
    } catch (const DataError& e) {
        return e.code();
    }
    FAIL("expected a DataError");
    return DataError::Code::Invalid;
}

SurvivalCurve curve(std::vector<double> s) {
    std::vector<double> b(s.size());
    for (std::size_t l = 0; l < b.size(); ++l) b[l] = double(l);
    return SurvivalCurve(TimeGrid(b), std::move(s));
}

}  // namespace

TEST_CASE("time grid invariants") {
    CHECK_NOTHROW(TimeGrid({0, 1, 2}, 1));
    CHECK(code_of([] { TimeGrid({0}); }) == DataError::Code::NonIncreasingGrid);
    CHECK(code_of([] { TimeGrid({0, 2, 2}); }) == DataError::Code::NonIncreasingGrid);
    CHECK(code_of([] { TimeGrid({0, 1.5}); }) == DataError::Code::Invalid);
    CHECK(code_of([] { TimeGrid({-1, 1}); }) == DataError::Code::Invalid);
    CHECK_THROWS_AS(TimeGrid({0, 1, 2}, 2), DataError);

    const TimeGrid daily = TimeGrid::daily(3.5);
    CHECK(daily.boundaries() == std::vector<double>{0, 1, 2, 3, 4});
    CHECK(TimeGrid::daily(0).intervals() == 1);
    CHECK(TimeGrid::daily(10, 7).boundaries() == std::vector<double>{0, 7, 14});
}

TEST_CASE("covariate sequence padding rules") {
    RowMatrix v = RowMatrix::Zero(3, 2);
    v.row(2) << 1.0, 2.0;
    CHECK_NOTHROW(CovariateSequence(v, {false, false, true}));
    CHECK_THROWS_AS(CovariateSequence(v, {false, false, false}), DataError);
    RowMatrix bad = v;
    bad(0, 1) = 0.5;
    CHECK_THROWS_AS(CovariateSequence(bad, {false, false, true}), DataError);
    CHECK_THROWS_AS(CovariateSequence(v, {true, true}), DataError);
    const CovariateSequence s(v, {false, false, true});
    CHECK(s.flattened().size() == 6);
    CHECK(s.flattened()[4] == 1.0);
    CHECK(s.flattened()[5] == 2.0);
}

TEST_CASE("validate_cohort") {
    SUBCASE("minimal valid cohort") {
        const Cohort c({{"a", 5.0, true, CovariateSequence(RowMatrix::Ones(1, 2))}});
        const Cohort v = validate_cohort(c);
        CHECK(v == c);
        CHECK(validate_cohort(v) == v);
    }
    SUBCASE("negative time") {
        const Cohort c({{"a", -1.0, true, CovariateSequence(RowMatrix::Ones(1, 2))}});
        CHECK(code_of([&] { validate_cohort(c); }) == DataError::Code::NegativeTime);
    }
    SUBCASE("no events") {
        const Cohort c({{"a", 3.0, false, CovariateSequence(RowMatrix::Ones(1, 2))},
                        {"b", 4.0, false, CovariateSequence(RowMatrix::Ones(1, 2))}});
        CHECK(code_of([&] { validate_cohort(c); }) == DataError::Code::NoEvents);
    }
    SUBCASE("dimension mismatch") {
        const Cohort c({{"a", 3.0, true, CovariateSequence(RowMatrix::Ones(1, 2))},
                        {"b", 4.0, false, CovariateSequence(RowMatrix::Ones(1, 3))}});
        CHECK(code_of([&] { validate_cohort(c); }) == DataError::Code::DimensionMismatch);
    }
    SUBCASE("death on report day kept, censoring on report day rejected") {
        const Cohort ok({{"a", 0.0, true, CovariateSequence(RowMatrix::Ones(1, 1))}});
        CHECK_NOTHROW(validate_cohort(ok));
        const Cohort bad({{"a", 2.0, true, CovariateSequence(RowMatrix::Ones(1, 1))},
                          {"b", 0.0, false, CovariateSequence(RowMatrix::Ones(1, 1))}});
        CHECK_THROWS_AS(validate_cohort(bad), DataError);
    }
    SUBCASE("non-finite covariate") {
        RowMatrix x = RowMatrix::Ones(1, 1);
        x(0, 0) = std::numeric_limits<double>::quiet_NaN();
        const Cohort c({{"a", 2.0, true, CovariateSequence(x)}});
        CHECK_THROWS_AS(validate_cohort(c), DataError);
    }
}

TEST_CASE("survival curve invariants") {
    CHECK_NOTHROW(curve({1.0, 0.5, 0.5, 0.0}));
    CHECK_THROWS_AS(curve({0.9, 0.5}), DataError);
    CHECK_THROWS_AS(curve({1.0, 0.5, 0.6}), DataError);
    CHECK_THROWS_AS(curve({1.0, -0.1}), DataError);
}

TEST_CASE("discrete hazard as printed") {
    CHECK(discrete_hazard(curve({1.0, 1.0})) == std::vector<double>{0.0});
    CHECK(discrete_hazard(curve({1.0, 0.5})) == std::vector<double>{1.0});
    const auto h = discrete_hazard(curve({1.0, 0.8, 0.4}));
    REQUIRE(h.size() == 2);
    CHECK(h[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(h[1] == doctest::Approx(1.0).epsilon(1e-15));

    const auto inf = discrete_hazard(curve({1.0, 0.5, 0.0, 0.0}));
    CHECK(inf[0] == 1.0);
    CHECK(std::isinf(inf[1]));
    CHECK(std::isinf(inf[2]));
}

TEST_CASE("discrete hazard, standard convention") {
    const auto h = discrete_hazard(curve({1.0, 0.8, 0.4}), HazardConvention::Standard);
    CHECK(h[0] == doctest::Approx(0.2));
    CHECK(h[1] == doctest::Approx(0.5));
    const auto s = survival_from_hazard(h, TimeGrid({0, 1, 2}), HazardConvention::Standard);
    CHECK(s.values()[2] == doctest::Approx(0.4));
    CHECK_THROWS(survival_from_hazard(std::vector<double>{1.5}, TimeGrid({0, 1}), HazardConvention::Standard));
}

TEST_CASE("survival from hazard") {
    CHECK(survival_from_hazard(std::vector<double>{0.0}, TimeGrid({0, 1})).values() == std::vector<double>{1.0, 1.0});
    CHECK(survival_from_hazard(std::vector<double>{1.0}, TimeGrid({0, 1})).values() == std::vector<double>{1.0, 0.5});
    CHECK_THROWS(survival_from_hazard(std::vector<double>{-0.1}, TimeGrid({0, 1})));
    CHECK_THROWS(survival_from_hazard(std::vector<double>{0.1, 0.2}, TimeGrid({0, 1})));
}

TEST_CASE("hazard round trip over random draws") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> log_rate(std::log(1e-3), std::log(1e3));
    std::uniform_real_distribution<double> log_tiny(std::log(1e-9), std::log(1e-3));
    std::uniform_int_distribution<int> len(1, 40);
    double worst_rel = 0.0;
    double worst_tiny_abs = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<double> lambda(n);
        std::vector<double> tiny(n);
        for (auto& v : lambda) v = std::exp(log_rate(rng));
        for (auto& v : tiny) v = std::exp(log_tiny(rng));
        std::vector<double> b(n + 1);
        for (std::size_t l = 0; l < b.size(); ++l) b[l] = double(l);
        const TimeGrid grid(b);
        const auto back = discrete_hazard(survival_from_hazard(lambda, grid));
        const auto back_tiny = discrete_hazard(survival_from_hazard(tiny, grid));
        for (std::size_t l = 0; l < n; ++l) {
            worst_rel = std::max(worst_rel, std::abs(back[l] - lambda[l]) / lambda[l]);
            worst_tiny_abs = std::max(worst_tiny_abs, std::abs(back_tiny[l] - tiny[l]));
        }
    }
    CHECK(worst_rel < 1e-12);
    // Below 1e-3 the rate lives in the difference of two nearly equal
    // survival values, so only an absolute bound of a few ulps holds.
    CHECK(worst_tiny_abs < 1e-15);
}

TEST_CASE("survival round trip through hazards") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> keep(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 40);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<double> s(n + 1, 1.0);
        std::vector<double> b(n + 1, 0.0);
        for (std::size_t l = 1; l <= n; ++l) {
            s[l] = s[l - 1] * (0.2 + 0.8 * keep(rng));
            b[l] = double(l);
        }
        const SurvivalCurve c(TimeGrid(b), s);
        for (auto conv : {HazardConvention::AsPrinted, HazardConvention::Standard}) {
            const auto back = survival_from_hazard(discrete_hazard(c, conv), c.grid(), conv).values();
            for (std::size_t l = 0; l <= n; ++l) worst = std::max(worst, std::abs(back[l] - s[l]) / s[l]);
        }
    }
    CHECK(worst < 1e-12);
}
