#include "poolaudit/error.hpp"
#include "poolaudit/filter.hpp"
#include "poolaudit/reservoir.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

using namespace poolaudit;

namespace {

// Sort oracle: the ceil(f*n)-th largest value, computed with an exact integer
// ceiling on f = num/den.
double kth_largest(std::vector<double> v, std::uint64_t num, std::uint64_t den) {
    std::sort(v.begin(), v.end(), std::greater<>());
    const std::uint64_t keep = (num * v.size() + den - 1) / den;
    return v[keep - 1];
}

double two_pass(const std::vector<double>& v, double f) {
    ScoreHistogram h;
    for (double s : v) {
        h.add(s);
    }
    BoundaryCollector c(locate_boundary(h, f));
    for (double s : v) {
        c.add(s);
    }
    return c.threshold();
}

SampleRecord scored(double s) {
    SampleRecord r;
    r.uid = "r";
    r.url = "https://a.b/c";
    r.clip_score = s;
    return r;
}

} // namespace

TEST_CASE("cosine similarity") {
    const std::vector<float> x{1, 0, 0};
    CHECK(cosine_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<float> a{1, 0};
    const std::vector<float> b{0, 1};
    CHECK(cosine_similarity(a, b) == 0.0);

    // 32 / sqrt(14 * 77) in long double
    const long double expected = 32.0L / std::sqrt(14.0L * 77.0L);
    const std::vector<float> u{1, 2, 3};
    const std::vector<float> v{4, 5, 6};
    CHECK(std::fabs(cosine_similarity(u, v) - static_cast<double>(expected)) < 1e-6);
    CHECK(std::fabs(expected - 0.974632L) < 1e-6L);

    const std::vector<float> zero{0, 0, 0};
    CHECK_THROWS_WITH_AS(cosine_similarity(u, zero), doctest::Contains("degenerate embedding"), InvariantError);
    CHECK_THROWS_AS(cosine_similarity(u, a), InvariantError);
}

TEST_CASE("resolve_threshold") {
    std::vector<double> tenths;
    for (int i = 1; i <= 10; ++i) {
        tenths.push_back(i / 10.0);
    }
    CHECK(resolve_threshold(tenths, FilterSpec::top_fraction(0.3)) == 0.8);
    CHECK(resolve_threshold(tenths, FilterSpec::fixed(0.243)) == 0.243);
    const std::vector<double> flat(10, 0.5);
    const double t = resolve_threshold(flat, FilterSpec::top_fraction(0.3));
    CHECK(t == 0.5);
    CHECK(std::all_of(flat.begin(), flat.end(), [&](double s) { return passes(s, t, TiePolicy::include_ties); }));
    CHECK(std::none_of(flat.begin(), flat.end(), [&](double s) { return passes(s, t, TiePolicy::exclude_ties); }));
    CHECK_THROWS_AS(resolve_threshold({}, FilterSpec::top_fraction(0.3)), InvariantError);
    CHECK(resolve_threshold(tenths, FilterSpec::top_fraction(1.0)) == 0.1);
}

TEST_CASE("filter spec validation") {
    CHECK_THROWS_AS(FilterSpec::top_fraction(0.0).validate(), ConfigError);
    CHECK_THROWS_AS(FilterSpec::top_fraction(1.5).validate(), ConfigError);
    CHECK_THROWS_AS(FilterSpec::fixed(1.5).validate(), ConfigError);
    CHECK_NOTHROW(FilterSpec::fixed(-1.0).validate());
    CHECK_NOTHROW(FilterSpec::top_fraction(1.0).validate());
}

TEST_CASE("top_count") {
    CHECK(top_count(10, 0.3) == 3);
    CHECK(top_count(12'800'000, 0.3) == 3'840'000);
    CHECK(top_count(7, 0.3) == 3);  // 2.1 -> 3
    CHECK(top_count(1, 0.001) == 1);
    CHECK(top_count(100, 1.0) == 100);
}

TEST_CASE("two-pass histogram threshold equals the sort oracle") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + uniform_below(rng, 5000);
        std::vector<double> v(n);
        const bool coarse = trial % 3 == 0;  // many exact ties
        for (auto& s : v) {
            s = uniform_unit(rng) * 2 - 1;
            if (coarse) {
                s = std::round(s * 20) / 20;
            }
        }
        const std::uint64_t num = 1 + uniform_below(rng, 100);
        const double f = static_cast<double>(num) / 100.0;
        INFO("trial ", trial, " n=", n, " f=", f);
        CHECK(two_pass(v, f) == kth_largest(v, num, 100));
        CHECK(resolve_threshold(v, FilterSpec::top_fraction(f)) == kth_largest(v, num, 100));
    }
}

TEST_CASE("histogram handles the score range ends") {
    CHECK(ScoreHistogram::bucket_of(-1.0) == 0);
    CHECK(ScoreHistogram::bucket_of(1.0) == ScoreHistogram::kBuckets - 1);
    const std::vector<double> v{-1.0, 1.0, 1.0, -1.0};
    CHECK(two_pass(v, 0.5) == 1.0);
    CHECK(two_pass(v, 0.75) == -1.0);
    ScoreHistogram empty;
    CHECK_THROWS_AS(locate_boundary(empty, 0.3), InvariantError);
}

TEST_CASE("apply_filter") {
    CHECK(apply_filter(scored(0.25), 0.243, TiePolicy::include_ties, nullptr).passed);
    CHECK(apply_filter(scored(0.243), 0.243, TiePolicy::include_ties, nullptr).passed);
    CHECK_FALSE(apply_filter(scored(0.243), 0.243, TiePolicy::exclude_ties, nullptr).passed);

    EmbeddingMatrix m(2, 2, {1, 0, 1, 0});
    SampleRecord r;
    r.uid = "e";
    r.url = "https://a.b/c";
    r.embedding_image = 0;
    r.embedding_text = 1;
    const auto out = apply_filter(r, 0.9, TiePolicy::include_ties, &m);
    CHECK(out.score == doctest::Approx(1.0));
    CHECK(out.passed);

    SampleRecord none;
    none.uid = "n";
    none.url = "https://a.b/c";
    CHECK_THROWS_WITH_AS(apply_filter(none, 0.2, TiePolicy::include_ties, nullptr),
                         doctest::Contains("unscoreable"), InvariantError);
}

TEST_CASE("shipped score wins and a disagreeing embedding is counted") {
    EmbeddingMatrix m(2, 2, {1, 0, 0, 1});
    SampleRecord r = scored(0.5);
    r.embedding_image = 0;
    r.embedding_text = 1;
    std::uint64_t discrepancies = 0;
    const auto out = apply_filter(r, 0.3, TiePolicy::include_ties, &m, &discrepancies);
    CHECK(out.score == 0.5);
    CHECK(discrepancies == 1);
}
