#pragma once

#include <boost/regex.hpp>

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace poolaudit {

struct KeywordPattern {
    std::string label;
    std::string source;     // regex as written in the config
    std::string dimension;  // optional grouping (gender, race, ...)
    bool excluded_from_reports = false;
    boost::regex compiled;  // \b(?:source)\b, applied to lowercased text
};

// Named list of whole-word, case-insensitive keyword patterns with unique labels.
class PatternSet {
public:
    PatternSet() = default;
    PatternSet(std::string name, std::vector<KeywordPattern> patterns);

    // Compiles `source` wrapped in word boundaries. Throws ConfigError on a bad regex.
    static KeywordPattern make_pattern(std::string label, std::string source, std::string dimension = {},
                                       bool excluded = false);

    const std::string& name() const noexcept { return name_; }
    const std::vector<KeywordPattern>& patterns() const noexcept { return patterns_; }
    std::size_t size() const noexcept { return patterns_.size(); }

    // Patterns whose dimension equals `dimension`, as a new set named after it.
    PatternSet subset(const std::string& dimension) const;

private:
    std::string name_;
    std::vector<KeywordPattern> patterns_;
};

// Reads `{"name":..., "patterns":[{"label":..., "regex":...}]}` or an array of such
// objects. Extra keys `dimension` and `excluded_from_reports` are honored.
std::vector<PatternSet> load_pattern_sets(const std::filesystem::path& path);
PatternSet load_pattern_set(const std::filesystem::path& path);

std::string lowercase_text(std::string_view text);

// Indices of patterns matching `lowered` (already lowercased), ascending.
std::vector<std::size_t> match_indices(const std::string& lowered, const PatternSet& set);

// Labels whose pattern matches `text` as a whole word, case-insensitively.
std::set<std::string> match_patterns(std::string_view text, const PatternSet& set);

} // namespace poolaudit
