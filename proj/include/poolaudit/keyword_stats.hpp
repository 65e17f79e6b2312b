#pragma once

#include "poolaudit/patterns.hpp"
#include "poolaudit/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace poolaudit {

inline constexpr const char* kTotalLabel = "total";

// Per-sample keyword hits, keyed by pattern-set name.
struct KeywordAnnotation {
    std::string uid;
    std::map<std::string, std::set<std::string>> hits;
};

KeywordAnnotation annotate_keywords(const std::string& uid, std::string_view text,
                                    std::span<const PatternSet> sets);

struct IntersectionCell {
    std::string label_a;  // kTotalLabel for a column margin
    std::string label_b;  // kTotalLabel for a row margin
    GroupCount count;
    bool suppressed = false;
};

struct IntersectionMatrix {
    std::string dimension_a;
    std::string dimension_b;
    std::vector<IntersectionCell> cells;

    const IntersectionCell* find(const std::string& a, const std::string& b) const;
};

// Streaming form of intersect_groups. A sample contributes once per label it hits.
class IntersectionAccumulator {
public:
    IntersectionAccumulator(const PatternSet& a, const PatternSet& b);

    void add(std::span<const std::size_t> hits_a, std::span<const std::size_t> hits_b, bool passed);
    void merge(const IntersectionAccumulator& other);

    // Cells with raw < min_support are marked suppressed. Labels flagged
    // excluded_from_reports are dropped unless include_excluded.
    IntersectionMatrix matrix(std::uint64_t min_support, bool include_excluded = false) const;

private:
    const PatternSet* a_;
    const PatternSet* b_;
    std::vector<GroupCount> cells_;  // a-major
    std::vector<GroupCount> margin_a_;
    std::vector<GroupCount> margin_b_;
};

// Pass rates over samples hitting both labels, plus single-label "total" margins.
// Throws InvariantError if min_support == 0.
IntersectionMatrix intersect_groups(std::span<const KeywordAnnotation> annotations,
                                    const std::unordered_map<std::string, bool>& passed_by_uid,
                                    const PatternSet& a, const PatternSet& b, std::uint64_t min_support);

// Lowercased tokens split on non-alphanumeric ASCII; bytes >= 0x80 stay inside
// tokens so UTF-8 words are kept whole. Duplicates removed, sorted.
std::vector<std::string> unique_tokens(std::string_view text);

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

struct WordStats {
    std::string word;
    std::uint64_t n_any = 0;  // qualifying samples containing the word
    std::uint64_t n_woman = 0;
    std::uint64_t pass_woman = 0;
    std::uint64_t n_man = 0;
    std::uint64_t pass_man = 0;
};

struct WordGapRow {
    WordStats stats;
    double rate_woman = 0;
    double rate_man = 0;
    double gap = 0;  // rate_woman - rate_man
};

struct WordGapResult {
    std::vector<WordGapRow> woman_associated;  // gap > 0, largest first
    std::vector<WordGapRow> man_associated;    // gap < 0, most negative first
    std::uint64_t qualifying_samples = 0;
    std::uint64_t below_min_count = 0;  // words seen fewer than min_count times
};

class WordGapAccumulator {
public:
    WordGapAccumulator(const PatternSet& woman, const PatternSet& man,
                       const std::unordered_set<std::string>& stopwords);

    void add(std::string_view text, bool passed);
    // For callers that already lowercased the text and matched both sets.
    void add_matched(std::string_view lowered, bool hits_woman, bool hits_man, bool passed);
    // Unique non-stopword tokens of already lowercased text.
    std::vector<std::string> content_tokens(std::string_view lowered) const;
    // `tokens` must be unique and stopword-free, as returned by content_tokens.
    void add_tokens(std::span<const std::string> tokens, bool hits_woman, bool hits_man, bool passed);
    void merge(const WordGapAccumulator& other);

    // Words with >= min_count qualifying samples and both gendered rates defined,
    // top_k per direction, ties broken by (gap, word).
    WordGapResult result(std::uint64_t min_count, std::size_t top_k) const;

    const PatternSet& woman() const noexcept { return *woman_; }
    const PatternSet& man() const noexcept { return *man_; }

private:
    const PatternSet* woman_;
    const PatternSet* man_;
    const std::unordered_set<std::string>* stopwords_;
    std::unordered_map<std::string, WordStats> words_;
    std::uint64_t qualifying_ = 0;
};

struct TextSample {
    std::string_view text;
    bool passed = false;
};

WordGapResult common_word_gap(std::span<const TextSample> samples, const PatternSet& woman, const PatternSet& man,
                              const std::unordered_set<std::string>& stopwords, std::uint64_t min_count = 100,
                              std::size_t top_k = 20);

} // namespace poolaudit
