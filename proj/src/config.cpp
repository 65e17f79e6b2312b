#include "poolaudit/config.hpp"

#include "poolaudit/error.hpp"
#include "poolaudit/sha256.hpp"
#include "poolaudit/shards.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <utility>

namespace poolaudit {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::pair<const char*, std::uint64_t MinSupport::*>>& min_support_fields() {
    static const std::vector<std::pair<const char*, std::uint64_t MinSupport::*>> fields{
        {"identity_keywords", &MinSupport::identity_keywords},
        {"intersections", &MinSupport::intersections},
        {"common_words", &MinSupport::common_words},
        {"face", &MinSupport::face},
        {"languages", &MinSupport::languages},
        {"language_trend", &MinSupport::language_trend},
        {"cctld", &MinSupport::cctld},
        {"websites", &MinSupport::websites},
        {"news_sites", &MinSupport::news_sites},
        {"categories", &MinSupport::categories},
        {"years", &MinSupport::years},
        {"ip_country", &MinSupport::ip_country},
        {"occupations", &MinSupport::occupations},
    };
    return fields;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "shards",       "embeddings",   "face_embeddings", "filter",      "annotators",   "patterns",
        "stopwords",    "public_suffix_list", "naive_suffixes", "regions", "category_map", "news_sites",
        "reference_db", "ip_db",        "occupations",     "fixtures",    "knn",          "min_support",
        "seed",         "subsample",    "pool_size",       "nsfw_category", "include_excluded_labels",
        "interval_method", "top_k_words", "output_dir",    "workers",     "quiet"};
    return keys;
}

// Collects problems instead of stopping at the first one.
class Reader {
public:
    Reader(const json& root, fs::path base) : root_(root), base_(std::move(base)) {}

    std::vector<std::string> errors;

    void error(const std::string& msg) { errors.push_back(msg); }

    const json* find(const json& obj, const char* key) {
        if (!obj.is_object()) {
            return nullptr;
        }
        const auto it = obj.find(key);
        return it == obj.end() || it->is_null() ? nullptr : &*it;
    }

    template <typename T>
    std::optional<T> get(const json& obj, const char* key, const std::string& where) {
        const json* v = find(obj, key);
        if (!v) {
            return std::nullopt;
        }
        try {
            return v->get<T>();
        } catch (const json::exception&) {
            error(where + key + ": wrong type");
            return std::nullopt;
        }
    }

    fs::path absolute(const std::string& p) const {
        fs::path path(p);
        return (path.is_absolute() ? path : base_ / path).lexically_normal();
    }

    std::optional<fs::path> path(const json& obj, const char* key, const std::string& where) {
        auto s = get<std::string>(obj, key, where);
        if (!s) {
            return std::nullopt;
        }
        return absolute(*s);
    }

    void require_file(const fs::path& p, const std::string& what) {
        std::error_code ec;
        if (!fs::is_regular_file(p, ec)) {
            error(what + ": no such file " + p.string());
        }
    }

    void require_dir(const fs::path& p, const std::string& what) {
        std::error_code ec;
        if (!fs::is_directory(p, ec)) {
            error(what + ": no such directory " + p.string());
        }
    }

    const json& root() const { return root_; }
    const fs::path& base() const { return base_; }

private:
    const json& root_;
    fs::path base_;
};

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += (i ? "\n  " : "") + lines[i];
    }
    return out;
}

} // namespace

const std::vector<std::string>& all_annotators() {
    static const std::vector<std::string> names{
        annotator::identity_keywords, annotator::intersections, annotator::gender_word_gap,
        annotator::face_gender_age,   annotator::face_knn_race, annotator::languages,
        annotator::cctld,             annotator::ip_country,    annotator::websites,
        annotator::news_sites,        annotator::categories,    annotator::years,
        annotator::occupations};
    return names;
}

unsigned AuditConfig::worker_count() const {
    if (workers > 0) {
        return workers;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

fs::path bundled_data_dir() {
    const char* env = std::getenv("POOLAUDIT_DATA_DIR");
    return env && *env ? fs::path(env) : fs::path(POOLAUDIT_DATA_DIR);
}

AuditConfig resolve_config(const json& j, const fs::path& base_dir, const ConfigOverrides& ov) {
    AuditConfig cfg;
    Reader r(j, base_dir);
    if (!j.is_object()) {
        throw ConfigError("cli", "config must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!known_keys().count(key)) {
            r.error("unknown key '" + key + "'");
        }
    }

    // Filter. The two modes are exclusive within one source; a flag replaces the file's choice.
    const auto filter_from = [&](std::optional<double> threshold, std::optional<double> frac, bool strict,
                                 const std::string& where) -> std::optional<FilterSpec> {
        if (threshold && frac) {
            r.error(where + "both threshold and top-frac are set; choose one");
            return std::nullopt;
        }
        const TiePolicy ties = strict ? TiePolicy::exclude_ties : TiePolicy::include_ties;
        if (threshold) {
            return FilterSpec::fixed(*threshold, ties);
        }
        if (frac) {
            return FilterSpec::top_fraction(*frac, ties);
        }
        return std::nullopt;
    };
    bool strict = false;
    if (const json* f = r.find(j, "filter")) {
        if (!f->is_object()) {
            r.error("filter: expected an object");
        } else {
            for (const auto& [key, _] : f->items()) {
                if (key != "threshold" && key != "top_frac" && key != "strict_ties") {
                    r.error("filter: unknown key '" + key + "'");
                }
            }
            strict = r.get<bool>(*f, "strict_ties", "filter.").value_or(false);
            if (auto spec = filter_from(r.get<double>(*f, "threshold", "filter."), r.get<double>(*f, "top_frac", "filter."),
                                        strict, "filter: ")) {
                cfg.filter = *spec;
            }
        }
    }
    if (auto spec = filter_from(ov.threshold, ov.top_frac, ov.strict_ties || strict, "flags: ")) {
        cfg.filter = *spec;
    }
    cfg.filter.ties = (ov.strict_ties || strict) ? TiePolicy::exclude_ties : cfg.filter.ties;
    try {
        cfg.filter.validate();
    } catch (const Error& e) {
        r.error(e.what());
    }

    // Inputs.
    if (!ov.shards.empty()) {
        for (const auto& s : ov.shards) {
            cfg.shards.push_back(fs::path(s).is_absolute() ? s : (fs::current_path() / s).lexically_normal().string());
        }
    } else if (auto shards = r.get<std::vector<std::string>>(j, "shards", "")) {
        for (const auto& s : *shards) {
            cfg.shards.push_back(r.absolute(s).string());
        }
    }
    if (cfg.shards.empty()) {
        r.error("shards: at least one shard glob is required");
    }
    for (const auto& pattern : cfg.shards) {
        try {
            expand_globs({pattern});
        } catch (const Error&) {
            r.error("shards: no readable file matches " + pattern);
        }
    }
    if (!ov.embeddings.empty()) {
        for (const auto& e : ov.embeddings) {
            cfg.embeddings.push_back(fs::absolute(e).lexically_normal());
        }
    } else if (auto emb = r.get<std::vector<std::string>>(j, "embeddings", "")) {
        for (const auto& e : *emb) {
            cfg.embeddings.push_back(r.absolute(e));
        }
    }
    if (auto emb = r.get<std::vector<std::string>>(j, "face_embeddings", "")) {
        for (const auto& e : *emb) {
            cfg.face_embeddings.push_back(r.absolute(e));
        }
    }
    for (const auto& p : cfg.embeddings) {
        r.require_file(p, "embeddings");
    }
    for (const auto& p : cfg.face_embeddings) {
        r.require_file(p, "face_embeddings");
    }

    // Bundled data, each replaceable.
    const fs::path data = bundled_data_dir();
    const json empty = json::object();
    const json* patterns = r.find(j, "patterns");
    cfg.identity_patterns =
        r.path(patterns ? *patterns : empty, "identity", "patterns.").value_or(data / "identity_keywords.json");
    cfg.gender_patterns =
        r.path(patterns ? *patterns : empty, "gender", "patterns.").value_or(data / "gender_keywords.json");
    cfg.stopwords = r.path(j, "stopwords", "").value_or(data / "stopwords.txt");
    cfg.public_suffix_list = r.path(j, "public_suffix_list", "").value_or(data / "public_suffix_list.dat");
    cfg.naive_suffixes = r.get<bool>(j, "naive_suffixes", "").value_or(false);
    cfg.regions = r.path(j, "regions", "").value_or(data / "regions.csv");
    cfg.category_map = r.path(j, "category_map", "").value_or(data / "category_map.csv");
    cfg.news_sites = r.path(j, "news_sites", "").value_or(data / "news_sites.csv");
    r.require_file(cfg.identity_patterns, "patterns.identity");
    r.require_file(cfg.gender_patterns, "patterns.gender");
    r.require_file(cfg.stopwords, "stopwords");
    if (!cfg.naive_suffixes) {
        r.require_file(cfg.public_suffix_list, "public_suffix_list");
    }
    r.require_file(cfg.regions, "regions");
    r.require_file(cfg.category_map, "category_map");
    r.require_file(cfg.news_sites, "news_sites");

    cfg.reference_db = r.path(j, "reference_db", "");
    if (cfg.reference_db) {
        r.require_file(*cfg.reference_db, "reference_db");
        r.require_file(fs::path(cfg.reference_db->string() + ".csv"), "reference_db labels");
    }
    cfg.ip_db = r.path(j, "ip_db", "");
    if (cfg.ip_db) {
        r.require_file(*cfg.ip_db, "ip_db");
    }
    cfg.occupations = r.path(j, "occupations", "");
    if (cfg.occupations) {
        r.require_file(*cfg.occupations, "occupations");
    }

    // Fixtures: file < environment < flag.
    std::optional<std::string> mode_name;
    if (const json* fx = r.find(j, "fixtures")) {
        if (auto dir = r.path(*fx, "dir", "fixtures.")) {
            cfg.fixture_dir = dir;
        }
        mode_name = r.get<std::string>(*fx, "mode", "fixtures.");
    }
    if (const char* env = std::getenv("POOLAUDIT_MODE"); env && *env) {
        mode_name = env;
    }
    if (ov.fetch_mode) {
        mode_name = ov.fetch_mode;
    }
    if (ov.fixture_dir) {
        cfg.fixture_dir = fs::absolute(*ov.fixture_dir).lexically_normal();
    }
    if (mode_name) {
        try {
            cfg.fetch_mode = parse_fetch_mode(*mode_name);
        } catch (const Error& e) {
            r.error(e.what());
        }
    }
    if (cfg.fixture_dir && cfg.fetch_mode == FetchMode::replay) {
        r.require_dir(*cfg.fixture_dir, "fixtures.dir");
    }

    if (const json* knn = r.find(j, "knn")) {
        cfg.knn.k_gender = r.get<std::size_t>(*knn, "k_gender", "knn.").value_or(cfg.knn.k_gender);
        cfg.knn.k_race = r.get<std::size_t>(*knn, "k_race", "knn.").value_or(cfg.knn.k_race);
        cfg.knn.p = r.get<double>(*knn, "p", "knn.").value_or(cfg.knn.p);
        cfg.knn.unanimous_only = r.get<bool>(*knn, "unanimous_only", "knn.").value_or(cfg.knn.unanimous_only);
        cfg.knn.holdout_fraction = r.get<double>(*knn, "holdout_fraction", "knn.").value_or(0.0);
        cfg.knn.holdout_count = r.get<std::size_t>(*knn, "holdout_count", "knn.");
    }
    if (cfg.knn.k_gender == 0 || cfg.knn.k_race == 0) {
        r.error("knn: k must be at least 1");
    }
    if (!(cfg.knn.p >= 1.0)) {
        r.error("knn.p: Minkowski order must be >= 1");
    }
    if (cfg.knn.holdout_fraction < 0.0 || cfg.knn.holdout_fraction >= 1.0) {
        r.error("knn.holdout_fraction: must lie in [0, 1)");
    }

    if (const json* ms = r.find(j, "min_support")) {
        if (!ms->is_object()) {
            r.error("min_support: expected an object");
        } else {
            for (const auto& [key, _] : ms->items()) {
                const auto& fields = min_support_fields();
                const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return key == f.first; });
                if (it == fields.end()) {
                    r.error("min_support: unknown analysis '" + key + "'");
                    continue;
                }
                if (auto v = r.get<std::uint64_t>(*ms, it->first, "min_support.")) {
                    if (*v == 0) {
                        r.error(std::string("min_support.") + it->first + ": must be at least 1");
                    }
                    cfg.min_support.*(it->second) = *v;
                }
            }
        }
    }

    cfg.seed = ov.seed ? *ov.seed : r.get<std::uint64_t>(j, "seed", "").value_or(0);
    if (const json* ss = r.find(j, "subsample")) {
        if (!ss->is_object()) {
            r.error("subsample: expected an object");
        } else {
            for (const auto& [key, _] : ss->items()) {
                if (std::find(all_annotators().begin(), all_annotators().end(), key) == all_annotators().end()) {
                    r.error("subsample: unknown annotator '" + key + "'");
                } else if (auto v = r.get<std::uint64_t>(*ss, key.c_str(), "subsample.")) {
                    cfg.subsample[key] = *v;
                }
            }
        }
    }
    cfg.pool_size = r.get<std::uint64_t>(j, "pool_size", "").value_or(cfg.pool_size);
    if (cfg.pool_size == 0) {
        r.error("pool_size: must be at least 1");
    }
    cfg.nsfw_category = r.get<std::string>(j, "nsfw_category", "").value_or(cfg.nsfw_category);
    cfg.include_excluded_labels = r.get<bool>(j, "include_excluded_labels", "").value_or(false);
    if (auto m = r.get<std::string>(j, "interval_method", "")) {
        if (*m == "normal") {
            cfg.interval = IntervalMethod::normal;
        } else if (*m != "clopper_pearson") {
            r.error("interval_method: expected normal or clopper_pearson");
        }
    }
    cfg.top_k_words = r.get<std::size_t>(j, "top_k_words", "").value_or(cfg.top_k_words);

    cfg.output_dir = ov.output_dir ? fs::absolute(*ov.output_dir).lexically_normal()
                                   : r.path(j, "output_dir", "").value_or(base_dir / "report");
    cfg.workers = ov.workers ? *ov.workers : r.get<unsigned>(j, "workers", "").value_or(0);
    cfg.quiet = ov.quiet || r.get<bool>(j, "quiet", "").value_or(false);

    // Annotators: an explicit list must have its inputs; the default is whatever
    // the configured inputs support.
    const bool have_knn = cfg.reference_db && !cfg.face_embeddings.empty();
    const bool have_fixtures = cfg.fixture_dir.has_value() || cfg.fetch_mode == FetchMode::live;
    const auto requirement = [&](const std::string& name) -> std::optional<std::string> {
        if (name == annotator::face_knn_race && !have_knn) {
            return "needs reference_db and face_embeddings";
        }
        if ((name == annotator::face_gender_age || name == annotator::categories || name == annotator::years) &&
            !have_fixtures) {
            return "needs fixtures.dir (or live mode)";
        }
        if (name == annotator::ip_country && (!cfg.ip_db || !have_fixtures)) {
            return "needs ip_db and fixtures.dir (or live mode)";
        }
        if (name == annotator::occupations && !cfg.occupations) {
            return "needs occupations";
        }
        return std::nullopt;
    };
    std::optional<std::vector<std::string>> names = ov.annotators;
    if (!names) {
        names = r.get<std::vector<std::string>>(j, "annotators", "");
    }
    if (names) {
        for (const auto& name : *names) {
            if (std::find(all_annotators().begin(), all_annotators().end(), name) == all_annotators().end()) {
                r.error("annotators: unknown annotator '" + name + "'");
            } else if (auto why = requirement(name)) {
                r.error("annotators: " + name + " " + *why);
            } else {
                cfg.annotators.insert(name);
            }
        }
    } else {
        for (const auto& name : all_annotators()) {
            if (!requirement(name)) {
                cfg.annotators.insert(name);
            }
        }
    }

    if (!r.errors.empty()) {
        throw ConfigError("cli", "invalid config:\n  " + join_lines(r.errors));
    }
    return cfg;
}

AuditConfig validate_config(const fs::path& path, const ConfigOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cli", "cannot read config " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ConfigError("cli", "no config: " + path.string() + " is empty");
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("cli", "config " + path.string() + " is not valid JSON: " + e.what());
    }
    const fs::path base = fs::absolute(path).parent_path();
    return resolve_config(j, base, overrides);
}

nlohmann::ordered_json config_to_json(const AuditConfig& cfg) {
    using oj = nlohmann::ordered_json;
    const auto paths = [](const std::vector<fs::path>& ps) {
        oj arr = oj::array();
        for (const auto& p : ps) {
            arr.push_back(p.string());
        }
        return arr;
    };
    const auto opt_path = [](const std::optional<fs::path>& p) { return p ? oj(p->string()) : oj(nullptr); };
    oj filter{{"mode", cfg.filter.mode == FilterSpec::Mode::fixed_threshold ? "threshold" : "top_frac"},
              {"value", cfg.filter.value},
              {"ties", cfg.filter.ties == TiePolicy::include_ties ? "include" : "exclude"}};
    oj ms = oj::object();
    for (const auto& [name, member] : min_support_fields()) {
        ms[name] = cfg.min_support.*member;
    }
    oj subsample = oj::object();
    for (const auto& [name, k] : cfg.subsample) {
        subsample[name] = k;
    }
    oj knn{{"k_gender", cfg.knn.k_gender},
           {"k_race", cfg.knn.k_race},
           {"p", cfg.knn.p},
           {"unanimous_only", cfg.knn.unanimous_only},
           {"holdout_fraction", cfg.knn.holdout_fraction},
           {"holdout_count", cfg.knn.holdout_count ? oj(*cfg.knn.holdout_count) : oj(nullptr)}};
    oj annotators = oj::array();
    for (const auto& name : all_annotators()) {
        if (cfg.enabled(name)) {
            annotators.push_back(name);
        }
    }
    oj shards = oj::array();
    for (const auto& s : cfg.shards) {
        shards.push_back(s);
    }
    return oj{{"shards", shards},
              {"embeddings", paths(cfg.embeddings)},
              {"face_embeddings", paths(cfg.face_embeddings)},
              {"filter", filter},
              {"annotators", annotators},
              {"identity_patterns", cfg.identity_patterns.string()},
              {"gender_patterns", cfg.gender_patterns.string()},
              {"stopwords", cfg.stopwords.string()},
              {"public_suffix_list", cfg.naive_suffixes ? oj(nullptr) : oj(cfg.public_suffix_list.string())},
              {"regions", cfg.regions.string()},
              {"category_map", cfg.category_map.string()},
              {"news_sites", cfg.news_sites.string()},
              {"reference_db", opt_path(cfg.reference_db)},
              {"ip_db", opt_path(cfg.ip_db)},
              {"occupations", opt_path(cfg.occupations)},
              {"fixture_dir", opt_path(cfg.fixture_dir)},
              {"fetch_mode", to_string(cfg.fetch_mode)},
              {"knn", knn},
              {"min_support", ms},
              {"seed", cfg.seed},
              {"subsample", subsample},
              {"pool_size", cfg.pool_size},
              {"nsfw_category", cfg.nsfw_category},
              {"include_excluded_labels", cfg.include_excluded_labels},
              {"interval_method", to_string(cfg.interval)},
              {"top_k_words", cfg.top_k_words}};
}

std::string config_hash(const AuditConfig& cfg) {
    return sha256_hex(config_to_json(cfg).dump());
}

} // namespace poolaudit
