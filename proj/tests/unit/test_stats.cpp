#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>

#include "oracles.hpp"
#include "provmark/core/rng.hpp"
#include "provmark/detect/stats.hpp"

namespace st = provmark::stats;

TEST_CASE("regularized incomplete gamma matches boost") {
    const double as[] = {0.25, 0.5, 1.0, 2.5, 7.0, 33.0, 99.0};
    const double xs[] = {1e-8, 0.01, 0.4, 1.0, 2.0, 5.0, 12.0, 40.0, 120.0, 300.0};
    for (double a : as)
        for (double x : xs) {
            double p = st::gamma_p(a, x);
            double q = st::gamma_q(a, x);
            CHECK(p == doctest::Approx(boost::math::gamma_p(a, x)).epsilon(1e-12));
            CHECK(q == doctest::Approx(boost::math::gamma_q(a, x)).epsilon(1e-12));
            CHECK(p + q == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("incomplete gamma edge cases") {
    CHECK(st::gamma_p(2.0, 0.0) == 0.0);
    CHECK(st::gamma_q(2.0, 0.0) == 1.0);
    CHECK_THROWS_AS(st::gamma_p(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(st::gamma_q(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("chi-squared tail agrees with boost, including fractional df") {
    const double dfs[] = {1.0, 1.875, 3.0, 3.75, 9.0, 15.0, 42.5, 99.0};
    const double stats_grid[] = {0.0, 0.3, 1.0, 4.2, 10.0, 31.0, 77.7, 150.0, 200.0};
    for (double df : dfs)
        for (double s : stats_grid) {
            double mine = st::chi_squared_tail(s, df);
            double ref = boost::math::gamma_q(df / 2.0, s / 2.0);
            CHECK(mine == doctest::Approx(ref).epsilon(1e-11));
        }
}

TEST_CASE("chi-squared tail frozen reference points") {
    // one degree of freedom at statistic 10: tail = Q(1/2, 5)
    CHECK(st::chi_squared_tail(10.0, 1.0) == doctest::Approx(1.5654e-3).epsilon(1e-4));
    CHECK(st::chi_squared_tail(0.0, 5.0) == 1.0);
    CHECK(st::chi_squared_tail(-2.0, 5.0) == 1.0);
    CHECK_THROWS_AS(st::chi_squared_tail(1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(st::chi_squared_tail(std::numeric_limits<double>::quiet_NaN(), 1.0),
                    std::invalid_argument);
}

TEST_CASE("fisher exact frozen reference table") {
    // ((3,1),(1,3)): enumeration over k in [0,4] gives 34/70
    double p = st::fisher_exact_2x2(3, 1, 1, 3);
    CHECK(p == doctest::Approx(34.0 / 70.0).epsilon(1e-12));
}

TEST_CASE("fisher exact against integer-enumeration reference on random tables") {
    provmark::Rng rng(2024);
    for (int trial = 0; trial < 400; ++trial) {
        int64_t a = rng.below(11), b = rng.below(11), c = rng.below(11), d = rng.below(11);
        if (a + b + c + d == 0) continue;
        double mine = st::fisher_exact_2x2(a, b, c, d);
        double ref = test_oracles::fisher_exact_reference(a, b, c, d);
        CHECK(mine == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("fisher exact invariances and edges") {
    // transposing or swapping both rows and columns leaves p unchanged
    CHECK(st::fisher_exact_2x2(7, 2, 3, 9) == doctest::Approx(st::fisher_exact_2x2(7, 3, 2, 9)));
    CHECK(st::fisher_exact_2x2(7, 2, 3, 9) == doctest::Approx(st::fisher_exact_2x2(9, 3, 2, 7)));
    // degenerate margins force p = 1
    CHECK(st::fisher_exact_2x2(0, 0, 5, 5) == doctest::Approx(1.0));
    CHECK(st::fisher_exact_2x2(4, 0, 6, 0) == doctest::Approx(1.0));
    // perfectly diagonal table is maximally extreme
    CHECK(st::fisher_exact_2x2(10, 0, 0, 10) ==
          doctest::Approx(test_oracles::fisher_exact_reference(10, 0, 0, 10)).epsilon(1e-10));
    CHECK(st::fisher_exact_2x2(10, 0, 0, 10) < 2e-5);
    CHECK_THROWS_AS(st::fisher_exact_2x2(-1, 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(st::fisher_exact_2x2(0, 0, 0, 0), std::invalid_argument);
}

TEST_CASE("ks distance against hand-computed sample") {
    // sorted sample {0.1, 0.4, 0.8}: largest deviation is |0.4 - 2/3|
    CHECK(st::ks_distance_uniform({0.8, 0.1, 0.4}) == doctest::Approx(2.0 / 3.0 - 0.4));
    CHECK(st::ks_distance_uniform({0.5}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(st::ks_distance_uniform({}), std::invalid_argument);
}

TEST_CASE("ks distance shrinks for an actual uniform sample") {
    provmark::Rng rng(5);
    std::vector<double> s(20000);
    for (auto& v : s) v = rng.uniform();
    CHECK(st::ks_distance_uniform(s) < 0.015);
}

TEST_CASE("spearman rank correlation") {
    CHECK(*st::spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(*st::spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
    // monotone after ranking, despite nonlinearity
    CHECK(*st::spearman({1, 2, 3, 4, 5}, {1, 8, 27, 64, 125}) == doctest::Approx(1.0));
    CHECK_FALSE(st::spearman({2, 2, 2}, {1, 2, 3}).has_value());
    CHECK_FALSE(st::spearman({1}, {2}).has_value());
    CHECK_THROWS_AS(st::spearman({1, 2}, {1, 2, 3}), std::invalid_argument);
    // ties use average ranks: hand-checked value
    auto r = st::spearman({1, 1, 2, 3}, {1, 2, 3, 4});
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(0.9486832980505138).epsilon(1e-12));
}

TEST_CASE("softmax basics") {
    auto p = st::softmax({1, 0, 0, 0});
    double e = std::exp(1.0);
    CHECK(p[0] == doctest::Approx(e / (e + 3)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1.0 / (e + 3)).epsilon(1e-14));
    double sum = p[0] + p[1] + p[2] + p[3];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    // max-shift keeps huge logits finite
    auto q = st::softmax({1000.0, 999.0});
    CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK_THROWS_AS(st::softmax({}), std::invalid_argument);
}

TEST_CASE("p-value formatting") {
    CHECK(st::format_p_value(0.0) == "<1e-300");
    CHECK(st::format_p_value(1e-310) == "<1e-300");
    CHECK(st::format_p_value(0.5) == "0.5");
    CHECK(st::format_p_value(1.0) == "1");
    CHECK(st::format_p_value(2.9e-32) == "2.9e-32");
}
