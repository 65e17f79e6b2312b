#pragma once

#include "poolaudit/clients.hpp"
#include "poolaudit/filter.hpp"
#include "poolaudit/stats.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace poolaudit {

namespace annotator {
inline constexpr const char* identity_keywords = "identity_keywords";
inline constexpr const char* intersections = "intersections";
inline constexpr const char* gender_word_gap = "gender_word_gap";
inline constexpr const char* face_gender_age = "face_gender_age";
inline constexpr const char* face_knn_race = "face_knn_race";
inline constexpr const char* languages = "languages";
inline constexpr const char* cctld = "cctld";
inline constexpr const char* ip_country = "ip_country";
inline constexpr const char* websites = "websites";
inline constexpr const char* news_sites = "news_sites";
inline constexpr const char* categories = "categories";
inline constexpr const char* years = "years";
inline constexpr const char* occupations = "occupations";
} // namespace annotator

// All annotator names, in report order.
const std::vector<std::string>& all_annotators();

struct KnnSettings {
    std::size_t k_gender = 7;
    std::size_t k_race = 5;
    double p = 2.0;
    bool unanimous_only = true;
    double holdout_fraction = 0.0;  // 0 disables validation
    std::optional<std::size_t> holdout_count;
};

struct AuditConfig {
    std::vector<std::string> shards;  // globs
    std::vector<std::filesystem::path> embeddings;
    std::vector<std::filesystem::path> face_embeddings;
    FilterSpec filter;
    std::set<std::string> annotators;

    std::filesystem::path identity_patterns;
    std::filesystem::path gender_patterns;
    std::filesystem::path stopwords;
    std::filesystem::path public_suffix_list;
    bool naive_suffixes = false;
    std::filesystem::path regions;
    std::filesystem::path category_map;
    std::filesystem::path news_sites;

    std::optional<std::filesystem::path> reference_db;
    std::optional<std::filesystem::path> ip_db;
    std::optional<std::filesystem::path> occupations;
    std::optional<std::filesystem::path> fixture_dir;
    FetchMode fetch_mode = FetchMode::replay;

    KnnSettings knn;
    MinSupport min_support;
    std::uint64_t seed = 0;
    std::map<std::string, std::uint64_t> subsample;  // annotator -> reservoir size
    std::uint64_t pool_size = 12'800'000'000ULL;
    std::string nsfw_category = "NSFW";
    bool include_excluded_labels = false;
    IntervalMethod interval = IntervalMethod::clopper_pearson;
    std::size_t top_k_words = 20;

    std::filesystem::path output_dir = "report";
    unsigned workers = 0;  // 0: available parallelism
    bool quiet = false;

    bool enabled(const std::string& name) const { return annotators.count(name) != 0; }
    unsigned worker_count() const;
};

// Command-line values; each one set replaces the config file's value.
struct ConfigOverrides {
    std::vector<std::string> shards;
    std::vector<std::string> embeddings;
    std::optional<double> threshold;
    std::optional<double> top_frac;
    bool strict_ties = false;
    std::optional<std::vector<std::string>> annotators;
    std::optional<std::string> fixture_dir;
    std::optional<std::string> fetch_mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<unsigned> workers;
    bool quiet = false;
};

// Builds a config from parsed JSON. Relative paths resolve against `base_dir`.
// Every problem found is collected; a non-empty list is thrown as one ConfigError
// with one problem per line.
AuditConfig resolve_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                           const ConfigOverrides& overrides = {});

// Reads and resolves a config file. An empty file is an error.
AuditConfig validate_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

// Canonical JSON of everything that can change results (workers, output_dir and
// quiet are left out), and its sha256.
nlohmann::ordered_json config_to_json(const AuditConfig& cfg);
std::string config_hash(const AuditConfig& cfg);

std::filesystem::path bundled_data_dir();

} // namespace poolaudit
