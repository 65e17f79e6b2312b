#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/pipeline.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <chrono>
#include <sstream>

using namespace poolaudit;
namespace fs = std::filesystem;

namespace {

fs::path demo_dir() { return testing::data_dir() / "demo"; }

AuditConfig demo_config(unsigned workers = 1) {
    ConfigOverrides ov;
    ov.quiet = true;
    ov.workers = workers;
    return validate_config(demo_dir() / "config.json", ov);
}

// Rows keyed by their first `key_cols` cells; the value is the rest up to `width`.
using Keyed = std::map<std::vector<std::string>, std::vector<std::string>>;

Keyed keyed(const std::vector<std::vector<std::string>>& rows, std::size_t key_cols, std::size_t width) {
    Keyed out;
    for (const auto& r : rows) {
        REQUIRE(r.size() >= width);
        out[{r.begin(), r.begin() + static_cast<long>(key_cols)}] = {r.begin() + static_cast<long>(key_cols),
                                                                      r.begin() + static_cast<long>(width)};
    }
    return out;
}

std::vector<std::vector<std::string>> golden_rows(const std::string& name) {
    std::vector<std::vector<std::string>> rows;
    csv::for_each_row(demo_dir() / "expected" / (name + ".csv"), [&](const csv::Row& r, std::size_t line) {
        if (line > 1) {
            rows.push_back(r);
        }
    });
    return rows;
}

std::string table_bytes(const Table& t) {
    std::ostringstream ss;
    write_table_csv(t, ss);
    return ss.str();
}

const AuditRun& demo_run() {
    static const AuditRun run = run_audit(demo_config(), std::make_shared<FailingTransport>());
    return run;
}

} // namespace

TEST_CASE("demo run matches the golden tables") {
    const auto& run = demo_run();
    for (const char* name : {"categories", "cctld", "face_gender_age", "face_knn_race", "identity_keywords",
                             "ip_country", "languages", "news_sites", "occupations", "websites", "years"}) {
        INFO(name);
        REQUIRE(run.report.tables.count(name) == 1);
        CHECK(keyed(run.report.tables.at(name).rows, 2, 4) == keyed(golden_rows(name), 2, 4));
    }
    REQUIRE(run.report.tables.count("intersections") == 1);
    CHECK(keyed(run.report.tables.at("intersections").rows, 2, 4) == keyed(golden_rows("intersections"), 2, 4));
}

TEST_CASE("demo summary counts") {
    const auto& run = demo_run();
    const auto golden = nlohmann::json::parse(testing::read_file(demo_dir() / "expected" / "summary.json"));
    const auto& m = run.report.manifest;
    CHECK(m["stages"]["records"] == golden["records"]);
    CHECK(m["stages"]["skipped_lines"] == golden["skipped_lines"]);
    CHECK(m["overall"]["passed"] == golden["passed"]);
    CHECK(m["filter"]["resolved_threshold"].get<double>() == doctest::Approx(golden["threshold"].get<double>()).epsilon(1e-9));
    CHECK(m["network"] == "offline");
    CHECK(m["stages"]["score_discrepancies"] == 0);
    // identity labels dismissed as ambiguous are absent
    for (const auto& row : run.report.tables.at("identity_keywords").rows) {
        CHECK(row[1].find("black") == std::string::npos);
        CHECK(row[1].find("white") == std::string::npos);
    }
}

TEST_CASE("worker count does not change any output") {
    const auto& one = demo_run();
    const auto eight = run_audit(demo_config(8), std::make_shared<FailingTransport>());
    REQUIRE(one.report.tables.size() == eight.report.tables.size());
    for (const auto& [name, table] : one.report.tables) {
        INFO(name);
        CHECK(table_bytes(table) == table_bytes(eight.report.tables.at(name)));
    }
    CHECK(one.report.manifest.dump() == eight.report.manifest.dump());
}

TEST_CASE("replay makes no network calls") {
    auto failing = std::make_shared<FailingTransport>();
    run_audit(demo_config(2), failing);
    CHECK(failing->calls() == 0);
}

TEST_CASE("report directory from the demo config") {
    testing::TempDir dir;
    auto cfg = demo_config();
    cfg.output_dir = dir / "report";
    const auto start = std::chrono::steady_clock::now();
    run_audit_to_dir(cfg, std::make_shared<FailingTransport>());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 10.0);
    CHECK(fs::exists(dir / "report" / "manifest.json"));
    CHECK(fs::exists(dir / "report" / "identity_keywords.csv"));
    const auto m = nlohmann::json::parse(testing::read_file(dir / "report" / "manifest.json"));
    CHECK(m["tables"].size() == demo_run().report.tables.size());
}

TEST_CASE("a missing fixture stops the run naming the service") {
    testing::TempDir dir;
    fs::copy(demo_dir(), dir / "demo", fs::copy_options::recursive);
    fs::path victim;
    for (const auto& e : fs::directory_iterator(dir / "demo" / "fixtures" / "cloudflare")) {
        if (e.path().extension() == ".bin") {
            victim = e.path();
            break;
        }
    }
    REQUIRE_FALSE(victim.empty());
    fs::remove(victim);
    ConfigOverrides ov;
    ov.quiet = true;
    ov.workers = 1;
    const auto cfg = validate_config(dir / "demo" / "config.json", ov);
    try {
        run_audit(cfg, std::make_shared<FailingTransport>());
        FAIL("expected a fixture miss");
    } catch (const FixtureMissingError& e) {
        CHECK(e.exit_code() == 3);
        CHECK(e.service() == "cloudflare");
    }
}
