#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

namespace poolaudit {

struct GroupKey {
    std::string dimension;
    std::string label;

    auto operator<=>(const GroupKey&) const = default;
};

struct GroupCount {
    std::uint64_t raw = 0;
    std::uint64_t passed = 0;

    void add(bool pass) {
        ++raw;
        passed += pass ? 1 : 0;
    }
    void merge(const GroupCount& other) {
        raw += other.raw;
        passed += other.passed;
    }
    bool operator==(const GroupCount&) const = default;
};

// (dimension, label) -> counts. Merging is a commutative monoid, so partial tallies
// from any worker schedule combine to the same result.
class GroupTally {
public:
    void add(const std::string& dimension, const std::string& label, bool pass);
    void add(const GroupKey& key, const GroupCount& count);
    void merge(const GroupTally& other);

    const std::map<GroupKey, GroupCount>& groups() const noexcept { return groups_; }
    GroupCount get(const std::string& dimension, const std::string& label) const;
    bool operator==(const GroupTally&) const = default;

private:
    std::map<GroupKey, GroupCount> groups_;
};

// passed / raw; nullopt for an empty group.
std::optional<double> pass_rate(const GroupCount& g);

// p_g / P: the group's pass rate relative to the population pass rate, which equals
// (filtered share) / (raw share). Throws InvariantError if g.raw == 0 or
// global.passed == 0.
double amplification_index(const GroupCount& g, const GroupCount& global);

using Rational = boost::multiprecision::cpp_rational;

// Exact form of amplification_index: (g.passed * global.raw) / (g.raw * global.passed).
Rational amplification_index_exact(const GroupCount& g, const GroupCount& global);

enum class IntervalMethod { normal, clopper_pearson };

std::string to_string(IntervalMethod method);

struct IntervalEstimate {
    double point = 0;
    double low = 0;
    double high = 0;
    IntervalMethod method = IntervalMethod::clopper_pearson;
    double confidence = 0.95;
};

// Normal: p +- z*sqrt(p(1-p)/n) clamped to [0,1]. Clopper-Pearson: exact beta
// quantile bounds. Throws InvariantError unless 0 <= successes <= trials, trials >= 1
// and confidence in (0,1).
IntervalEstimate binomial_interval(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95,
                                   IntervalMethod method = IntervalMethod::clopper_pearson);

struct PoolRange {
    std::uint64_t low = 0;
    std::uint64_t high = 0;
};

// (round(low * pool), round(high * pool)).
PoolRange extrapolate_pool(const IntervalEstimate& interval, std::uint64_t pool_size);

struct TrendResult {
    double slope = 0;
    double intercept = 0;
    double p_value = 1;
    std::size_t n = 0;
};

// Least squares y = intercept + slope * x with a two-sided t-test on the slope
// (n - 2 degrees of freedom). A perfect fit with nonzero slope reports p = 0.
// Throws InvariantError when n < 3 or all x are equal.
TrendResult ols_trend(std::span<const std::pair<double, double>> points);

// Decade label for an age range, bucketed by floor((low + high) / 2): (18,24) -> "20-29".
// Throws InvariantError unless 0 <= low <= high.
std::string age_decade_bucket(int low, int high);

// Per-analysis minimum raw support below which a pass rate is suppressed.
struct MinSupport {
    std::uint64_t identity_keywords = 1;
    std::uint64_t intersections = 10;
    std::uint64_t common_words = 100;
    std::uint64_t face = 1;
    std::uint64_t languages = 1000;
    std::uint64_t language_trend = 100;
    std::uint64_t cctld = 10000;
    std::uint64_t websites = 10000;
    std::uint64_t news_sites = 200;
    std::uint64_t categories = 1000;
    std::uint64_t years = 500;
    std::uint64_t ip_country = 5000;
    std::uint64_t occupations = 10;
};

} // namespace poolaudit
