#include "poolaudit/error.hpp"
#include "poolaudit/reservoir.hpp"
#include "poolaudit/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace poolaudit;

namespace {

// Binomial CDF P(X <= k) by direct summation in log space.
double binom_cdf(int k, int n, double p) {
    if (k < 0) {
        return 0;
    }
    if (k >= n) {
        return 1;
    }
    double s = 0;
    for (int i = 0; i <= k; ++i) {
        const double lg = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        s += std::exp(lg + i * std::log(p) + (n - i) * std::log1p(-p));
    }
    return s;
}

// Root of a decreasing function on (0, 1) by bisection.
template <typename F>
double bisect_decreasing(F f, double target) {
    double lo = 0;
    double hi = 1;
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2;
        (f(mid) > target ? lo : hi) = mid;
    }
    return (lo + hi) / 2;
}

// Exact interval from the binomial tails: the upper bound solves P(X <= k) = a/2,
// the lower bound solves P(X >= k) = a/2.
std::pair<double, double> cp_oracle(int k, int n, double conf) {
    const double a = (1 - conf) / 2;
    const double low = k == 0 ? 0.0 : bisect_decreasing([&](double p) { return binom_cdf(k - 1, n, p); }, 1 - a);
    const double high = k == n ? 1.0 : bisect_decreasing([&](double p) { return binom_cdf(k, n, p); }, a);
    return {low, high};
}

// Two-sided t p-value by Simpson integration of the Student t density.
double t_two_sided(double t, double df) {
    const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
    const auto density = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
    // integrate 0..|t| and subtract from 1/2
    const int steps = 20000;
    const double h = std::fabs(t) / steps;
    double s = density(0) + density(std::fabs(t));
    for (int i = 1; i < steps; ++i) {
        s += density(i * h) * (i % 2 ? 4 : 2);
    }
    return 2 * (0.5 - s * h / 3);
}

} // namespace

TEST_CASE("pass rates") {
    CHECK(*pass_rate({2444, 608}) == doctest::Approx(0.2488).epsilon(1e-4));
    CHECK_FALSE(pass_rate({0, 0}));
    CHECK(*pass_rate({10, 10}) == 1.0);
}

TEST_CASE("group tallies merge in any order") {
    GroupTally a, b, c;
    a.add("gender", "woman", true);
    a.add("gender", "man", false);
    b.add("gender", "woman", false);
    c.add("race", "asian", true);
    GroupTally ab = a;
    ab.merge(b);
    ab.merge(c);
    GroupTally cb = c;
    cb.merge(b);
    cb.merge(a);
    CHECK(ab == cb);
    CHECK(ab.get("gender", "woman") == GroupCount{2, 1});
    CHECK(ab.get("x", "y") == GroupCount{});
}

TEST_CASE("amplification index") {
    const GroupCount global{1000, 300};
    CHECK(amplification_index({100, 30}, global) == doctest::Approx(1.0));
    CHECK(amplification_index_exact({100, 30}, global) == Rational(1));

    // majority raw share 1.421x the minority's, filtered share 1.639x
    const GroupCount major{14210, 3278};
    const GroupCount minor{10000, 2000};
    GroupCount all = major;
    all.merge(minor);
    const double ratio = amplification_index(major, all) / amplification_index(minor, all);
    CHECK(ratio == doctest::Approx(1.639 / 1.421).epsilon(1e-3));
    CHECK(ratio == doctest::Approx(1.153).epsilon(1e-3));

    CHECK_THROWS_AS(amplification_index({0, 0}, global), InvariantError);
    CHECK_THROWS_AS(amplification_index({10, 1}, {100, 0}), InvariantError);
}

TEST_CASE("binomial intervals") {
    CHECK(binomial_interval(0, 20, 0.95, IntervalMethod::clopper_pearson).low == 0.0);
    CHECK(binomial_interval(20, 20, 0.95, IntervalMethod::clopper_pearson).high == 1.0);

    const auto n = binomial_interval(50, 100, 0.95, IntervalMethod::normal);
    CHECK(n.point == 0.5);
    CHECK(std::fabs(n.low - (0.5 - 0.098)) < 1e-3);
    CHECK(std::fabs(n.high - (0.5 + 0.098)) < 1e-3);

    const auto big = binomial_interval(4104, 400000, 0.95, IntervalMethod::normal);
    CHECK(big.point == doctest::Approx(0.01026));
    CHECK(big.low < 0.01026);
    CHECK(big.high > 0.01026);

    CHECK_THROWS_AS(binomial_interval(5, 4), InvariantError);
    CHECK_THROWS_AS(binomial_interval(0, 0), InvariantError);
    CHECK_THROWS_AS(binomial_interval(1, 4, 1.0), InvariantError);
}

TEST_CASE("clopper-pearson bounds match the binomial tail oracle") {
    for (const auto& [k, n] : std::vector<std::pair<int, int>>{{0, 10}, {1, 10}, {5, 10}, {9, 10}, {10, 10},
                                                               {3, 100}, {50, 100}, {97, 100}, {17, 250}}) {
        for (double conf : {0.9, 0.95, 0.99}) {
            const auto got = binomial_interval(k, n, conf, IntervalMethod::clopper_pearson);
            const auto [lo, hi] = cp_oracle(k, n, conf);
            INFO("k=", k, " n=", n, " conf=", conf);
            CHECK(std::fabs(got.low - lo) < 1e-8);
            CHECK(std::fabs(got.high - hi) < 1e-8);
        }
    }
}

TEST_CASE("pool extrapolation") {
    const IntervalEstimate i{0.3, 0.25, 0.35};
    const auto r = extrapolate_pool(i, 100);
    CHECK(r.low == 25);
    CHECK(r.high == 35);
    const IntervalEstimate d{0.123, 0.123, 0.123};
    const auto e = extrapolate_pool(d, 1000);
    CHECK(e.low == 123);
    CHECK(e.high == 123);
}

TEST_CASE("4104 of 400000 scaled to the 12.8B pool") {
    // The quoted 129-130 million window is narrower than either 95% interval here;
    // both intervals contain it and the point estimate is 131.3 million.
    const std::uint64_t pool = 12'800'000'000ULL;
    for (auto method : {IntervalMethod::normal, IntervalMethod::clopper_pearson}) {
        const auto ci = binomial_interval(4104, 400000, 0.95, method);
        const auto r = extrapolate_pool(ci, pool);
        CHECK(r.low < 129'000'000ULL);
        CHECK(r.high > 130'000'000ULL);
        CHECK(r.high - r.low > 7'000'000ULL);
    }
    CHECK(std::llround(4104.0 / 400000.0 * 12.8e9) == 131'328'000LL);
}

TEST_CASE("ordinary least squares trend") {
    const std::vector<std::pair<double, double>> line{{1, 2}, {2, 4}, {3, 6}, {4, 8}};
    const auto t = ols_trend(line);
    CHECK(t.slope == doctest::Approx(2.0));
    CHECK(t.intercept == doctest::Approx(0.0));
    CHECK(t.p_value == 0.0);
    CHECK(t.n == 4);

    const std::vector<std::pair<double, double>> same_x{{1, 2}, {1, 4}, {1, 6}};
    CHECK_THROWS_AS(ols_trend(same_x), InvariantError);
    const std::vector<std::pair<double, double>> two{{1, 2}, {2, 4}};
    CHECK_THROWS_AS(ols_trend(two), InvariantError);
}

TEST_CASE("ols p-value matches numeric integration of the t density") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<double, double>> pts;
        const int n = 5 + static_cast<int>(uniform_below(rng, 40));
        for (int i = 0; i < n; ++i) {
            const double x = uniform_unit(rng) * 10;
            pts.emplace_back(x, 0.1 * trial * x + (uniform_unit(rng) - 0.5) * 8);
        }
        // t statistic from the textbook sums
        double mx = 0, my = 0;
        for (const auto& [x, y] : pts) {
            mx += x;
            my += y;
        }
        mx /= n;
        my /= n;
        double sxx = 0, sxy = 0;
        for (const auto& [x, y] : pts) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        const double b = sxy / sxx;
        double sse = 0;
        for (const auto& [x, y] : pts) {
            const double r = y - (my + b * (x - mx));
            sse += r * r;
        }
        const double se = std::sqrt(sse / (n - 2) / sxx);
        const double expected = t_two_sided(b / se, n - 2);
        const auto got = ols_trend(pts);
        INFO("trial ", trial);
        CHECK(got.slope == doctest::Approx(b).epsilon(1e-12));
        CHECK(std::fabs(got.p_value - expected) < 1e-7);
    }
}

TEST_CASE("ols rejection rate under the null") {
    std::mt19937_64 rng(33);
    int rejected = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < 1000; ++i) {
            pts.emplace_back(uniform_unit(rng), uniform_unit(rng));
        }
        rejected += ols_trend(pts).p_value < 0.05 ? 1 : 0;
    }
    CHECK(std::fabs(rejected / static_cast<double>(trials) - 0.05) <= 0.02);
}

TEST_CASE("age decade buckets") {
    CHECK(age_decade_bucket(20, 29) == "20-29");
    CHECK(age_decade_bucket(18, 24) == "20-29");
    CHECK(age_decade_bucket(0, 2) == "0-9");
    CHECK_THROWS_AS(age_decade_bucket(30, 20), InvariantError);
    CHECK_THROWS_AS(age_decade_bucket(-1, 5), InvariantError);
}
