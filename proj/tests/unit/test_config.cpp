#include "poolaudit/config.hpp"
#include "poolaudit/error.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace poolaudit;
using nlohmann::json;

namespace {

struct Workspace {
    testing::TempDir dir;
    Workspace() { testing::write_file(dir / "a.jsonl", "{\"uid\":\"u1\",\"url\":\"https://a.com/x\",\"text\":\"t\",\"clip_score\":0.3}\n"); }
    json minimal() const { return json{{"shards", {"a.jsonl"}}}; }
};

std::string message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("minimal config gets defaults") {
    Workspace w;
    const auto cfg = resolve_config(w.minimal(), w.dir.path());
    CHECK(cfg.filter.mode == FilterSpec::Mode::top_fraction);
    CHECK(cfg.filter.value == 0.30);
    CHECK(cfg.filter.ties == TiePolicy::include_ties);
    CHECK(cfg.min_support.intersections == 10);
    CHECK(cfg.min_support.cctld == 10000);
    CHECK(cfg.knn.k_gender == 7);
    CHECK(cfg.knn.k_race == 5);
    CHECK(cfg.shards.size() == 1);
    CHECK(cfg.enabled(annotator::identity_keywords));
    CHECK_FALSE(cfg.enabled(annotator::face_knn_race));
    CHECK_FALSE(cfg.enabled(annotator::occupations));
    CHECK(cfg.output_dir == w.dir.path() / "report");
}

TEST_CASE("threshold and top-frac are exclusive") {
    Workspace w;
    auto j = w.minimal();
    j["filter"] = {{"threshold", 0.28}, {"top_frac", 0.3}};
    CHECK(message([&] { resolve_config(j, w.dir.path()); }).find("choose one") != std::string::npos);

    ConfigOverrides ov;
    ov.threshold = 0.28;
    ov.top_frac = 0.3;
    CHECK(message([&] { resolve_config(w.minimal(), w.dir.path(), ov); }).find("flags:") != std::string::npos);

    // a flag replaces the file's mode
    j["filter"] = {{"top_frac", 0.3}};
    ConfigOverrides t;
    t.threshold = 0.28;
    const auto cfg = resolve_config(j, w.dir.path(), t);
    CHECK(cfg.filter.mode == FilterSpec::Mode::fixed_threshold);
    CHECK(cfg.filter.value == 0.28);
}

TEST_CASE("every problem is reported at once") {
    Workspace w;
    auto j = w.minimal();
    j["ip_db"] = "missing_ip.csv";
    j["occupations"] = "missing_occ.csv";
    const auto msg = message([&] { resolve_config(j, w.dir.path()); });
    CHECK(msg.find("missing_ip.csv") != std::string::npos);
    CHECK(msg.find("missing_occ.csv") != std::string::npos);
}

TEST_CASE("bad values are rejected") {
    Workspace w;
    const auto bad = [&](json patch, const std::string& needle) {
        auto j = w.minimal();
        j.merge_patch(patch);
        const auto msg = message([&] { resolve_config(j, w.dir.path()); });
        INFO(msg);
        CHECK(msg.find(needle) != std::string::npos);
    };
    bad({{"colour", 1}}, "unknown key 'colour'");
    bad({{"filter", {{"top_frac", 0.0}}}}, "filter");
    bad({{"filter", {{"threshold", 1.5}}}}, "filter");
    bad({{"knn", {{"p", 0.5}}}}, "knn.p");
    bad({{"knn", {{"k_race", 0}}}}, "knn");
    bad({{"min_support", {{"cctld", 0}}}}, "min_support.cctld");
    bad({{"min_support", {{"nope", 3}}}}, "unknown analysis 'nope'");
    bad({{"annotators", {"face_knn_race"}}}, "needs reference_db");
    bad({{"annotators", {"horoscope"}}}, "unknown annotator 'horoscope'");
    bad({{"shards", {"none-*.jsonl"}}}, "no readable file");
    bad({{"fixtures", {{"mode", "offline"}}}}, "offline");
    bad({{"seed", "abc"}}, "seed: wrong type");
}

TEST_CASE("config files") {
    Workspace w;
    testing::write_file(w.dir / "empty.json", "  \n");
    CHECK(message([&] { validate_config(w.dir / "empty.json"); }).find("no config") != std::string::npos);
    testing::write_file(w.dir / "broken.json", "{");
    CHECK(message([&] { validate_config(w.dir / "broken.json"); }).find("not valid JSON") != std::string::npos);
    CHECK_THROWS_AS(validate_config(w.dir / "absent.json"), ConfigError);
    testing::write_file(w.dir / "ok.json", w.minimal().dump());
    CHECK(validate_config(w.dir / "ok.json").shards.size() == 1);
    try {
        validate_config(w.dir / "empty.json");
    } catch (const ConfigError& e) {
        CHECK(e.exit_code() == 2);
    }
}

TEST_CASE("config hash tracks result-affecting settings only") {
    Workspace w;
    const auto base = resolve_config(w.minimal(), w.dir.path());
    const auto h = config_hash(base);
    CHECK(h == config_hash(resolve_config(w.minimal(), w.dir.path())));

    ConfigOverrides strict;
    strict.strict_ties = true;
    CHECK(config_hash(resolve_config(w.minimal(), w.dir.path(), strict)) != h);

    ConfigOverrides seed;
    seed.seed = 99;
    CHECK(config_hash(resolve_config(w.minimal(), w.dir.path(), seed)) != h);

    ConfigOverrides workers;
    workers.workers = 8;
    workers.quiet = true;
    workers.output_dir = (w.dir / "elsewhere").string();
    CHECK(config_hash(resolve_config(w.minimal(), w.dir.path(), workers)) == h);
}
