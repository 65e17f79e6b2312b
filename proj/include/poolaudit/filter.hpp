#pragma once

#include "poolaudit/embedding.hpp"
#include "poolaudit/record.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace poolaudit {

enum class TiePolicy {
    include_ties,  // score >= threshold passes
    exclude_ties,  // score > threshold passes
};

struct FilterSpec {
    enum class Mode { fixed_threshold, top_fraction };

    Mode mode = Mode::top_fraction;
    double value = 0.30;  // threshold t, or fraction f
    TiePolicy ties = TiePolicy::include_ties;

    static FilterSpec fixed(double threshold, TiePolicy ties = TiePolicy::include_ties);
    static FilterSpec top_fraction(double fraction, TiePolicy ties = TiePolicy::include_ties);

    // Throws ConfigError unless t in [-1,1] or f in (0,1].
    void validate() const;
};

struct FilterOutcome {
    std::string uid;
    double score = 0;
    bool passed = false;
};

// dot(u,v) / (|u||v|) clamped to [-1,1]. Throws InvariantError on a dimension
// mismatch or a zero vector.
double cosine_similarity(std::span<const float> u, std::span<const float> v);

inline bool passes(double score, double threshold, TiePolicy ties) {
    return ties == TiePolicy::include_ties ? score >= threshold : score > threshold;
}

// Number of items a top fraction f of n keeps: ceil(f*n), with products that are
// integral up to rounding noise (0.3 * 10) treated as exact.
std::uint64_t top_count(std::uint64_t n, double fraction);

// In-memory threshold resolution. Fixed mode returns t unchanged. Top-fraction mode
// returns the ceil(f*N)-th largest score, so that with include_ties at least that
// many items pass. Throws InvariantError on an empty multiset in top-fraction mode.
double resolve_threshold(std::span<const double> scores, const FilterSpec& spec);

// Coarse pass of the bounded-memory quantile: 2^16 equal-width buckets over [-1, 1].
class ScoreHistogram {
public:
    static constexpr std::size_t kBuckets = std::size_t{1} << 16;

    static std::uint32_t bucket_of(double score);

    void add(double score);
    void merge(const ScoreHistogram& other);

    std::uint64_t total() const noexcept { return total_; }
    std::uint64_t count(std::uint32_t bucket) const { return counts_[bucket]; }

private:
    std::vector<std::uint64_t> counts_ = std::vector<std::uint64_t>(kBuckets, 0);
    std::uint64_t total_ = 0;
};

struct BoundaryBucket {
    std::uint32_t bucket = 0;
    std::uint64_t rank = 0;  // 1-based position of the threshold, counted from the top of the bucket
};

// Throws InvariantError when the histogram is empty.
BoundaryBucket locate_boundary(const ScoreHistogram& histogram, double fraction);

// Exact pass over the boundary bucket only.
class BoundaryCollector {
public:
    explicit BoundaryCollector(BoundaryBucket boundary) : boundary_(boundary) {}

    void add(double score) {
        if (ScoreHistogram::bucket_of(score) == boundary_.bucket) {
            values_.push_back(score);
        }
    }
    void merge(const BoundaryCollector& other);
    double threshold() const;

private:
    BoundaryBucket boundary_;
    std::vector<double> values_;
};

struct RecordScore {
    double score = 0;
    bool discrepancy = false;  // shipped score and embedding cosine differ by more than 1e-4
};

inline constexpr double kScoreDiscrepancyTolerance = 1e-4;

// Precomputed clip_score wins; otherwise the cosine of the image and text rows.
// Throws InvariantError for an unscoreable record.
RecordScore score_record(const SampleRecord& record, const EmbeddingMatrix* embeddings);

FilterOutcome apply_filter(const SampleRecord& record, double threshold, TiePolicy ties,
                           const EmbeddingMatrix* embeddings, std::uint64_t* discrepancies = nullptr);

} // namespace poolaudit
