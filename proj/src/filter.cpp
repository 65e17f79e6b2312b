#include "poolaudit/filter.hpp"

#include "poolaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace poolaudit {

FilterSpec FilterSpec::fixed(double threshold, TiePolicy ties) {
    return FilterSpec{Mode::fixed_threshold, threshold, ties};
}

FilterSpec FilterSpec::top_fraction(double fraction, TiePolicy ties) {
    return FilterSpec{Mode::top_fraction, fraction, ties};
}

void FilterSpec::validate() const {
    if (mode == Mode::fixed_threshold) {
        if (!(value >= -1.0 && value <= 1.0)) {
            throw ConfigError("filter", "fixed threshold must lie in [-1, 1]");
        }
    } else if (!(value > 0.0 && value <= 1.0)) {
        throw ConfigError("filter", "top fraction must lie in (0, 1]");
    }
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size() || u.empty()) {
        throw InvariantError("filter", "degenerate embedding: dimension mismatch");
    }
    double dot = 0;
    double uu = 0;
    double vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0 || vv == 0) {
        throw InvariantError("filter", "degenerate embedding: zero vector");
    }
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::uint64_t top_count(std::uint64_t n, double fraction) {
    const long double exact = static_cast<long double>(fraction) * static_cast<long double>(n);
    const long double nearest = std::round(exact);
    if (std::fabs(exact - nearest) <= 1e-9L * std::max<long double>(1.0L, exact)) {
        return static_cast<std::uint64_t>(nearest);
    }
    return static_cast<std::uint64_t>(std::ceil(exact));
}

double resolve_threshold(std::span<const double> scores, const FilterSpec& spec) {
    spec.validate();
    if (spec.mode == FilterSpec::Mode::fixed_threshold) {
        return spec.value;
    }
    if (scores.empty()) {
        throw InvariantError("filter", "cannot resolve a top fraction over an empty score set");
    }
    const std::uint64_t keep = std::max<std::uint64_t>(1, top_count(scores.size(), spec.value));
    std::vector<double> copy(scores.begin(), scores.end());
    const auto nth = copy.begin() + static_cast<std::ptrdiff_t>(keep - 1);
    std::nth_element(copy.begin(), nth, copy.end(), std::greater<>());
    return *nth;
}

std::uint32_t ScoreHistogram::bucket_of(double score) {
    const double pos = (std::clamp(score, -1.0, 1.0) + 1.0) * static_cast<double>(kBuckets / 2);
    return static_cast<std::uint32_t>(std::min<double>(std::floor(pos), kBuckets - 1));
}

void ScoreHistogram::add(double score) {
    ++counts_[bucket_of(score)];
    ++total_;
}

void ScoreHistogram::merge(const ScoreHistogram& other) {
    for (std::size_t i = 0; i < kBuckets; ++i) {
        counts_[i] += other.counts_[i];
    }
    total_ += other.total_;
}

BoundaryBucket locate_boundary(const ScoreHistogram& histogram, double fraction) {
    if (histogram.total() == 0) {
        throw InvariantError("filter", "cannot resolve a top fraction over an empty score set");
    }
    const std::uint64_t keep = std::max<std::uint64_t>(1, top_count(histogram.total(), fraction));
    std::uint64_t above = 0;
    for (std::size_t b = ScoreHistogram::kBuckets; b-- > 0;) {
        const std::uint64_t c = histogram.count(static_cast<std::uint32_t>(b));
        if (above + c >= keep) {
            return BoundaryBucket{static_cast<std::uint32_t>(b), keep - above};
        }
        above += c;
    }
    throw InvariantError("filter", "histogram total disagrees with bucket counts");
}

void BoundaryCollector::merge(const BoundaryCollector& other) {
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
}

double BoundaryCollector::threshold() const {
    if (boundary_.rank == 0 || boundary_.rank > values_.size()) {
        throw InvariantError("filter", "boundary bucket pass saw a different score multiset than the coarse pass");
    }
    std::vector<double> copy = values_;
    const auto nth = copy.begin() + static_cast<std::ptrdiff_t>(boundary_.rank - 1);
    std::nth_element(copy.begin(), nth, copy.end(), std::greater<>());
    return *nth;
}

RecordScore score_record(const SampleRecord& record, const EmbeddingMatrix* embeddings) {
    const bool has_rows = embeddings && record.embedding_image && record.embedding_text;
    if (!record.clip_score && !has_rows) {
        throw InvariantError("filter", "unscoreable record '" + record.uid + "'");
    }
    if (!has_rows) {
        return {*record.clip_score, false};
    }
    const double cosine =
        cosine_similarity(embeddings->row(*record.embedding_image), embeddings->row(*record.embedding_text));
    if (!record.clip_score) {
        return {cosine, false};
    }
    return {*record.clip_score, std::fabs(cosine - *record.clip_score) > kScoreDiscrepancyTolerance};
}

FilterOutcome apply_filter(const SampleRecord& record, double threshold, TiePolicy ties,
                           const EmbeddingMatrix* embeddings, std::uint64_t* discrepancies) {
    const RecordScore s = score_record(record, embeddings);
    if (s.discrepancy && discrepancies) {
        ++*discrepancies;
    }
    return FilterOutcome{record.uid, s.score, passes(s.score, threshold, ties)};
}

} // namespace poolaudit
