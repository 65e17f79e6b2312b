#include "poolaudit/error.hpp"
#include "poolaudit/report.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <sstream>

using namespace poolaudit;

namespace {

std::string csv_of(const Table& t) {
    std::ostringstream ss;
    write_table_csv(t, ss);
    return ss.str();
}

GroupTally sample_tally() {
    GroupTally t;
    for (int i = 0; i < 40; ++i) {
        t.add("gender", "woman", i < 16);
        t.add("gender", "man", i < 8);
    }
    for (int i = 0; i < 5; ++i) {
        t.add("race", "latina", i < 5);
    }
    return t;
}

} // namespace

TEST_CASE("real formatting") {
    CHECK(format_real(0.5) == "0.500000");
    CHECK(format_real(-0.0) == "0.000000");
    CHECK(format_real(-1e-9) == "0.000000");
    CHECK(format_real(1.0 / 3) == "0.333333");
    CHECK(format_real(-2.25) == "-2.250000");
}

TEST_CASE("group stats table orders and suppresses") {
    const auto tally = sample_tally();
    const GroupCount overall{85, 29};
    const auto t = group_stats_table("identity_keywords", tally, overall, 10);
    CHECK(t.columns == group_stats_columns());
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0][0] == "gender");
    CHECK(t.rows[0][1] == "woman");
    CHECK(t.rows[0][4] == "0.400000");
    CHECK(t.rows[1][1] == "man");
    CHECK(t.rows[1][4] == "0.200000");
    // woman: 0.4 / (29/85)
    CHECK(t.rows[0][7] == format_real(0.4 * 85 / 29));
    // latina has 5 < 10 samples: counts kept, rate blank
    CHECK(t.rows[2][1] == "latina");
    CHECK(t.rows[2][2] == "5");
    CHECK(t.rows[2][3] == "5");
    CHECK(t.rows[2][4].empty());
    CHECK(t.rows[2][7].empty());
    CHECK(t.rows[2][8] == "1");
    CHECK(t.suppressed == 1);
}

TEST_CASE("empty analyses give header-only csv") {
    const auto t = group_stats_table("languages", GroupTally{}, GroupCount{}, 10);
    CHECK(csv_of(t) == "dimension,label,raw,passed,pass_rate,ci_low,ci_high,amplification,suppressed\n");
}

TEST_CASE("trend and extrapolation tables") {
    const std::vector<TrendSeries> series{{"en", {{1, 1}, {2, 2}, {3, 3.5}}}, {"fr", {{1, 1}, {2, 2}}}};
    const auto t = trend_table("language_trend", series, 10);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "3");
    CHECK(t.rows[0][2] == "1.250000");
    CHECK(t.rows[1][2].empty());
    CHECK(t.suppressed == 1);

    const std::vector<ExtrapolationInput> in{{"nsfw", 4104, 400000}, {"empty", 0, 0}};
    const auto e = extrapolation_table(in, 12'800'000'000ULL);
    REQUIRE(e.rows.size() == 4);
    CHECK(e.rows[0][1] == "clopper_pearson");
    CHECK(e.rows[1][1] == "normal");
    CHECK(e.rows[0][5] == "0.010260");
    CHECK(e.rows[2][5].empty());
    CHECK(e.suppressed == 2);
}

TEST_CASE("emit writes one csv per table and a manifest") {
    testing::TempDir dir;
    AuditReport r;
    r.manifest["tool"] = "poolaudit";
    const auto tally = sample_tally();
    const char* names[] = {"identity_keywords", "face_gender_age", "face_knn_race", "languages", "cctld",
                           "ip_country",        "websites",        "news_sites",    "categories", "years",
                           "occupations",       "extra_a",         "extra_b"};
    for (const char* n : names) {
        r.tables[n] = group_stats_table(n, tally, {85, 29}, 10);
    }
    const auto files = emit_tables(r, dir / "out");
    CHECK(files.size() == 14);
    for (const char* n : names) {
        CHECK(std::filesystem::exists(dir / "out" / (std::string(n) + ".csv")));
    }
    const auto manifest = nlohmann::json::parse(testing::read_file(dir / "out" / "manifest.json"));
    CHECK(manifest["tool"] == "poolaudit");
    CHECK(manifest["tables"].size() == 13);
    CHECK(manifest["tables"]["languages"]["rows"] == 3);
    CHECK(manifest["tables"]["languages"]["suppressed"] == 1);

    // same input, same bytes
    emit_tables(r, dir / "again");
    for (const auto& f : files) {
        CHECK(testing::read_file(f) == testing::read_file(dir / "again" / f.filename()));
    }

    testing::write_file(dir / "blocker", "x");
    CHECK_THROWS_AS(emit_tables(r, dir / "blocker" / "sub"), IoError);
}

TEST_CASE("csv quoting") {
    Table t;
    t.columns = {"a", "b"};
    t.rows = {{"x,y", "say \"hi\""}};
    CHECK(csv_of(t) == "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
}
