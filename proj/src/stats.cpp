#include "poolaudit/stats.hpp"

#include "poolaudit/error.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>

namespace poolaudit {

void GroupTally::add(const std::string& dimension, const std::string& label, bool pass) {
    groups_[GroupKey{dimension, label}].add(pass);
}

void GroupTally::add(const GroupKey& key, const GroupCount& count) {
    groups_[key].merge(count);
}

void GroupTally::merge(const GroupTally& other) {
    for (const auto& [key, count] : other.groups_) {
        groups_[key].merge(count);
    }
}

GroupCount GroupTally::get(const std::string& dimension, const std::string& label) const {
    const auto it = groups_.find(GroupKey{dimension, label});
    return it == groups_.end() ? GroupCount{} : it->second;
}

std::optional<double> pass_rate(const GroupCount& g) {
    if (g.raw == 0) {
        return std::nullopt;
    }
    return static_cast<double>(g.passed) / static_cast<double>(g.raw);
}

double amplification_index(const GroupCount& g, const GroupCount& global) {
    if (g.raw == 0 || global.passed == 0 || global.raw == 0) {
        throw InvariantError("stats", "amplification index needs a nonempty group and a nonzero global pass count");
    }
    const long double pg = static_cast<long double>(g.passed) / static_cast<long double>(g.raw);
    const long double p = static_cast<long double>(global.passed) / static_cast<long double>(global.raw);
    return static_cast<double>(pg / p);
}

Rational amplification_index_exact(const GroupCount& g, const GroupCount& global) {
    if (g.raw == 0 || global.passed == 0 || global.raw == 0) {
        throw InvariantError("stats", "amplification index needs a nonempty group and a nonzero global pass count");
    }
    using boost::multiprecision::cpp_int;
    const Rational group_rate(cpp_int(g.passed), cpp_int(g.raw));
    const Rational global_rate(cpp_int(global.passed), cpp_int(global.raw));
    return group_rate / global_rate;
}

std::string to_string(IntervalMethod method) {
    return method == IntervalMethod::normal ? "normal" : "clopper_pearson";
}

IntervalEstimate binomial_interval(std::uint64_t successes, std::uint64_t trials, double confidence,
                                   IntervalMethod method) {
    if (trials == 0 || successes > trials || !(confidence > 0.0 && confidence < 1.0)) {
        throw InvariantError("stats", "invalid binomial counts or confidence");
    }
    const double n = static_cast<double>(trials);
    const double x = static_cast<double>(successes);
    const double alpha = 1.0 - confidence;
    IntervalEstimate out;
    out.point = x / n;
    out.method = method;
    out.confidence = confidence;

    if (method == IntervalMethod::normal) {
        const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
        const double half = z * std::sqrt(out.point * (1.0 - out.point) / n);
        out.low = std::max(0.0, out.point - half);
        out.high = std::min(1.0, out.point + half);
        return out;
    }

    out.low = successes == 0 ? 0.0
                             : boost::math::quantile(boost::math::beta_distribution<double>(x, n - x + 1.0), alpha / 2.0);
    out.high = successes == trials
                   ? 1.0
                   : boost::math::quantile(boost::math::beta_distribution<double>(x + 1.0, n - x), 1.0 - alpha / 2.0);
    out.low = std::min(out.low, out.point);
    out.high = std::max(out.high, out.point);
    return out;
}

PoolRange extrapolate_pool(const IntervalEstimate& interval, std::uint64_t pool_size) {
    if (pool_size == 0) {
        throw InvariantError("stats", "pool size must be at least 1");
    }
    const auto scale = [&](double p) {
        return static_cast<std::uint64_t>(std::llround(static_cast<long double>(p) * pool_size));
    };
    return PoolRange{scale(interval.low), scale(interval.high)};
}

TrendResult ols_trend(std::span<const std::pair<double, double>> points) {
    const std::size_t n = points.size();
    if (n < 3) {
        throw InvariantError("stats", "trend needs at least 3 points");
    }
    long double mx = 0;
    long double my = 0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    long double sxx = 0;
    long double sxy = 0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0) {
        throw InvariantError("stats", "trend is undefined when all x are equal");
    }
    TrendResult out;
    out.n = n;
    const long double slope = sxy / sxx;
    const long double intercept = my - slope * mx;
    long double rss = 0;
    for (const auto& [x, y] : points) {
        const long double r = y - (intercept + slope * x);
        rss += r * r;
    }
    out.slope = static_cast<double>(slope);
    out.intercept = static_cast<double>(intercept);

    const long double se = std::sqrt(rss / static_cast<long double>(n - 2) / sxx);
    if (se == 0) {
        out.p_value = slope == 0 ? 1.0 : 0.0;
        return out;
    }
    const double t = static_cast<double>(std::fabs(slope / se));
    const boost::math::students_t_distribution<double> dist(static_cast<double>(n - 2));
    out.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
    return out;
}

std::string age_decade_bucket(int low, int high) {
    if (low < 0 || high < low) {
        throw InvariantError("stats", "age range needs 0 <= low <= high");
    }
    const int mid = (low + high) / 2;
    const int start = mid / 10 * 10;
    return std::to_string(start) + "-" + std::to_string(start + 9);
}

} // namespace poolaudit
