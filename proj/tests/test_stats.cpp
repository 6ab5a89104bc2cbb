#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "attn/rng.hpp"
#include "attn/stats.hpp"

using namespace attn;

TEST_CASE("shapiro-wilk reproduces the classic 11-weight reference") {
    // Shapiro & Wilk's men's-weights sample, the standard worked example for
    // the AS R94 approximation: W = 0.7888, p = 0.0066.
    std::vector<double> x = {148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236};
    auto r = shapiro_wilk(x);
    CHECK(r.statistic == doctest::Approx(0.7888).epsilon(0.001));
    CHECK(r.p_value == doctest::Approx(0.0066).epsilon(0.15));
    CHECK(std::fabs(r.p_value - 0.0066) < 5e-4);
}

TEST_CASE("shapiro-wilk accepts normal data, rejects uniform (power check)") {
    int rejected_uniform = 0;
    int accepted_normal = 0;
    for (int s = 0; s < 100; ++s) {
        Rng rng(1000 + s);
        std::vector<double> u, g;
        for (int i = 0; i < 500; ++i) {
            u.push_back(rng.uniform01());
            g.push_back(rng.normal());
        }
        if (shapiro_wilk(u).p_value < 0.05) ++rejected_uniform;
        if (shapiro_wilk(g).p_value >= 0.01) ++accepted_normal;
    }
    CHECK(rejected_uniform >= 95);
    CHECK(accepted_normal >= 90);
}

TEST_CASE("shapiro-wilk preconditions") {
    CHECK_THROWS(shapiro_wilk({1.0, 2.0}));
    CHECK_THROWS(shapiro_wilk({3.0, 3.0, 3.0, 3.0}));
}

TEST_CASE("independent t-test") {
    auto r = t_test_ind({1, 2, 3}, {4, 5, 6});
    CHECK(r.statistic == doctest::Approx(-3.674).epsilon(1e-3));
    CHECK(*r.df == doctest::Approx(4.0));

    std::vector<double> same = {1.0, 2.5, 3.0, 4.0};
    auto r2 = t_test_ind(same, same);
    CHECK(r2.statistic == doctest::Approx(0.0));
    CHECK(r2.p_value == doctest::Approx(1.0));

    // translation invariance
    auto a = std::vector<double>{0.3, 1.2, 2.2, 0.9};
    auto b = std::vector<double>{1.4, 2.0, 0.5};
    auto base = t_test_ind(a, b);
    for (auto& v : a) v += 10.0;
    for (auto& v : b) v += 10.0;
    auto shifted = t_test_ind(a, b);
    CHECK(shifted.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
    CHECK(shifted.p_value == doctest::Approx(base.p_value).epsilon(1e-12));
}

TEST_CASE("paired t-test") {
    CHECK_THROWS(paired_t_test({1, 2, 3}, {1, 2, 3}));
    auto r = paired_t_test({2, 1, 2, 1}, {1, 2, 1, 2});
    CHECK(r.statistic == doctest::Approx(0.0));
    CHECK(r.p_value == doctest::Approx(1.0));
    // closed form on a small example: d = {1,2,3,6}, mean 3, sd sqrt(14/3)
    auto r2 = paired_t_test({2, 4, 6, 10}, {1, 2, 3, 4});
    double expect_t = 3.0 / (std::sqrt(14.0 / 3.0) / 2.0);
    CHECK(r2.statistic == doctest::Approx(expect_t).epsilon(1e-9));
    CHECK(*r2.df == doctest::Approx(3.0));
}

namespace {

double brute_force_u(const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0.0;
    for (double x : a)
        for (double y : b) u += (x > y) ? 1.0 : (x == y ? 0.5 : 0.0);
    return u;
}

// Exact two-tailed p by enumerating every split of the pooled sample.
double oracle_p_4v4(const std::vector<double>& pool, unsigned chosen_mask, double u_obs) {
    int count = 0, total = 0;
    for (unsigned mask = 0; mask < 256; ++mask) {
        if (__builtin_popcount(mask) != 4) continue;
        std::vector<double> a, b;
        for (int i = 0; i < 8; ++i) ((mask >> i) & 1 ? a : b).push_back(pool[i]);
        double u = brute_force_u(a, b);
        if (std::fabs(u - 8.0) >= std::fabs(u_obs - 8.0) - 1e-12) ++count;
        ++total;
    }
    (void)chosen_mask;
    return static_cast<double>(count) / total;
}

}  // namespace

TEST_CASE("mann-whitney U basics") {
    auto r = mann_whitney_u({1, 2}, {3, 4});
    CHECK(r.statistic == doctest::Approx(0.0));
    auto r2 = mann_whitney_u({1, 3, 5, 7}, {2, 4, 6, 8});
    CHECK(r2.statistic + mann_whitney_u({2, 4, 6, 8}, {1, 3, 5, 7}).statistic ==
          doctest::Approx(16.0));
    // interleaved identical-shape samples sit at the midpoint
    CHECK(r2.statistic == doctest::Approx(6.0));
    CHECK(r2.statistic >= 0.0);
}

TEST_CASE("mann-whitney exact p equals the permutation oracle for all 4v4 splits") {
    std::vector<double> pool = {0.3, 1.1, 2.7, 3.4, 4.9, 5.2, 6.8, 7.5};
    for (unsigned mask = 0; mask < 256; ++mask) {
        if (__builtin_popcount(mask) != 4) continue;
        std::vector<double> a, b;
        for (int i = 0; i < 8; ++i) ((mask >> i) & 1 ? a : b).push_back(pool[i]);
        auto r = mann_whitney_u(a, b);
        double oracle = oracle_p_4v4(pool, mask, r.statistic);
        CHECK(r.p_value == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("mann-whitney normal approximation path") {
    Rng rng(9);
    std::vector<double> a, b;
    for (int i = 0; i < 30; ++i) {
        a.push_back(rng.normal(0, 1));
        b.push_back(rng.normal(2, 1));
    }
    auto r = mann_whitney_u(a, b);
    CHECK(r.p_value < 0.001);
    CHECK(r.statistic >= 0.0);
    CHECK(r.statistic <= 900.0);
}

TEST_CASE("pearson") {
    std::vector<double> a = {1, 2, 3, 4, 5};
    auto r = pearson(a, a);
    CHECK(r.statistic == doctest::Approx(1.0));
    std::vector<double> neg(a);
    for (auto& v : neg) v = -v;
    CHECK(pearson(a, neg).statistic == doctest::Approx(-1.0));

    Rng rng(10);
    std::vector<double> x, y;
    for (int i = 0; i < 1000; ++i) {
        x.push_back(rng.normal());
        y.push_back(rng.normal());
    }
    CHECK(std::fabs(pearson(x, y).statistic) < 0.08);

    // positive affine invariance
    auto base = pearson(x, y);
    std::vector<double> x2(x);
    for (auto& v : x2) v = 4.0 * v + 3.0;
    CHECK(pearson(x2, y).statistic == doctest::Approx(base.statistic).epsilon(1e-9));
    CHECK(pearson(x2, y).p_value >= 0.0);
    CHECK(pearson(x2, y).p_value <= 1.0);
}
