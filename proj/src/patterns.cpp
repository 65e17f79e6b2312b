#include "poolaudit/patterns.hpp"

#include "poolaudit/error.hpp"
#include "poolaudit/url.hpp"

#include <json.hpp>

#include <fstream>

namespace poolaudit {
namespace {

PatternSet set_from_json(const nlohmann::json& obj, const std::string& origin) {
    if (!obj.is_object() || !obj.contains("name") || !obj["name"].is_string() || !obj.contains("patterns") ||
        !obj["patterns"].is_array()) {
        throw ConfigError("text_annot", origin + ": pattern set needs a string 'name' and a 'patterns' array");
    }
    std::vector<KeywordPattern> patterns;
    for (const auto& p : obj["patterns"]) {
        if (!p.is_object() || !p.contains("label") || !p.contains("regex") || !p["label"].is_string() ||
            !p["regex"].is_string()) {
            throw ConfigError("text_annot", origin + ": every pattern needs string 'label' and 'regex'");
        }
        patterns.push_back(PatternSet::make_pattern(p["label"].get<std::string>(), p["regex"].get<std::string>(),
                                                    p.value("dimension", std::string{}),
                                                    p.value("excluded_from_reports", false)));
    }
    return PatternSet(obj["name"].get<std::string>(), std::move(patterns));
}

} // namespace

PatternSet::PatternSet(std::string name, std::vector<KeywordPattern> patterns)
    : name_(std::move(name)), patterns_(std::move(patterns)) {
    std::set<std::string> seen;
    for (const auto& p : patterns_) {
        if (!seen.insert(p.label).second) {
            throw ConfigError("text_annot", "duplicate label '" + p.label + "' in pattern set '" + name_ + "'");
        }
    }
}

KeywordPattern PatternSet::make_pattern(std::string label, std::string source, std::string dimension,
                                        bool excluded) {
    KeywordPattern p;
    p.label = std::move(label);
    p.source = std::move(source);
    p.dimension = std::move(dimension);
    p.excluded_from_reports = excluded;
    try {
        p.compiled = boost::regex("\\b(?:" + p.source + ")\\b", boost::regex::perl | boost::regex::optimize);
    } catch (const boost::regex_error& e) {
        throw ConfigError("text_annot", "pattern '" + p.label + "' does not compile: " + e.what());
    }
    return p;
}

PatternSet PatternSet::subset(const std::string& dimension) const {
    std::vector<KeywordPattern> picked;
    for (const auto& p : patterns_) {
        if (p.dimension == dimension) {
            picked.push_back(p);
        }
    }
    return PatternSet(dimension, std::move(picked));
}

std::vector<PatternSet> load_pattern_sets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("text_annot", "cannot open pattern config " + path.string());
    }
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("text_annot", path.string() + ": malformed JSON");
    }
    std::vector<PatternSet> sets;
    if (doc.is_array()) {
        for (const auto& obj : doc) {
            sets.push_back(set_from_json(obj, path.string()));
        }
    } else {
        sets.push_back(set_from_json(doc, path.string()));
    }
    return sets;
}

PatternSet load_pattern_set(const std::filesystem::path& path) {
    auto sets = load_pattern_sets(path);
    if (sets.size() != 1) {
        throw ConfigError("text_annot", path.string() + ": expected exactly one pattern set");
    }
    return std::move(sets.front());
}

std::string lowercase_text(std::string_view text) {
    return to_lower_ascii(text);
}

std::vector<std::size_t> match_indices(const std::string& lowered, const PatternSet& set) {
    std::vector<std::size_t> hits;
    const auto& patterns = set.patterns();
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        if (boost::regex_search(lowered, patterns[i].compiled)) {
            hits.push_back(i);
        }
    }
    return hits;
}

std::set<std::string> match_patterns(std::string_view text, const PatternSet& set) {
    std::set<std::string> labels;
    if (text.empty()) {
        return labels;
    }
    const std::string lowered = lowercase_text(text);
    for (std::size_t i : match_indices(lowered, set)) {
        labels.insert(set.patterns()[i].label);
    }
    return labels;
}

} // namespace poolaudit
