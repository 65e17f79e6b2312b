#include "poolaudit/embedding.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/record.hpp"
#include "poolaudit/reservoir.hpp"
#include "poolaudit/shards.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

using namespace poolaudit;
using testing::TempDir;
using testing::write_file;

namespace {

// PAEM bytes written by hand, independent of save_embeddings.
std::string paem(std::uint32_t rows, std::uint32_t dims, const std::vector<float>& values) {
    std::string out = "PAEM";
    const auto u32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
    u32(rows);
    u32(dims);
    for (float f : values) {
        out.append(reinterpret_cast<const char*>(&f), 4);
    }
    return out;
}

std::string record_line(int i) {
    return R"({"uid":"u)" + std::to_string(i) + R"(","url":"https://x.com/)" + std::to_string(i) +
           R"(.jpg","text":"t","clip_score":0.1})";
}

} // namespace

TEST_CASE("parse_record maps fields") {
    const auto r = parse_record(R"({"uid":"a1","url":"https://x.com/i.jpg","text":"red dress","clip_score":0.31})");
    CHECK(r.uid == "a1");
    CHECK(r.text == "red dress");
    REQUIRE(r.clip_score);
    CHECK(*r.clip_score == 0.31);
    CHECK_FALSE(r.embedding_image);
    CHECK_FALSE(r.embedding_text);
    CHECK_FALSE(r.face_boxes);
}

TEST_CASE("parse_record rejects bad records") {
    CHECK_THROWS_WITH_AS(parse_record(R"({"uid":"a2","url":"not a url","text":"t"})"),
                         doctest::Contains("invalid url"), RecordError);
    CHECK_THROWS_WITH_AS(parse_record(R"({"uid":"a3","url":"https://y.org/p.png","text":"","clip_score":1.5})"),
                         doctest::Contains("score out of range"), RecordError);
    CHECK_THROWS_AS(parse_record(R"({"uid":"a4","url":"https://y.org/p.png")"), RecordError);
    CHECK_THROWS_AS(parse_record(R"({"url":"https://y.org/p.png","text":""})"), RecordError);
}

TEST_CASE("record round-trips through the line format") {
    SampleRecord r;
    r.uid = "x";
    r.url = "https://a.b/c";
    r.text = "caf\xc3\xa9 \"quoted\"";
    r.clip_score = -0.25;
    r.embedding_image = 3;
    r.embedding_text = 4;
    r.face_boxes = std::vector<FaceBox>{{0.1, 0.2, 0.3, 0.4, 7}};
    r.language = "fr";
    const auto back = parse_record(format_record(r));
    CHECK(back.uid == r.uid);
    CHECK(back.text == r.text);
    CHECK(*back.clip_score == -0.25);
    CHECK(*back.embedding_text == 4);
    REQUIRE(back.face_boxes->size() == 1);
    CHECK(*back.face_boxes->front().embedding == 7);
    CHECK(*back.language == "fr");

    ScoredRecord s{r, 0.5, true};
    const auto sb = parse_scored_record(format_scored_record(s));
    CHECK(sb.score == 0.5);
    CHECK(sb.passed);
}

TEST_CASE("shard stream counts records and skips") {
    TempDir dir;
    write_file(dir / "a.jsonl", record_line(1) + "\n" + record_line(2) + "\n" + record_line(3) + "\n");
    write_file(dir / "b.jsonl", record_line(4) + "\n" + record_line(5) + "\n" + record_line(6) + "\n");
    write_file(dir / "c.jsonl", record_line(7) + "\n{broken\n");

    SUBCASE("two shards of three valid lines") {
        ShardStream s(open_manifest({(dir / "a.jsonl").string(), (dir / "b.jsonl").string()}, {}));
        std::vector<std::string> uids;
        while (auto r = s.next()) {
            uids.push_back(r->uid);
        }
        CHECK(uids == std::vector<std::string>{"u1", "u2", "u3", "u4", "u5", "u6"});
        CHECK(s.tally().skipped == 0);
    }
    SUBCASE("one valid and one malformed line") {
        ShardStream s(open_manifest({(dir / "c.jsonl").string()}, {}));
        int n = 0;
        while (s.next()) {
            ++n;
        }
        CHECK(n == 1);
        CHECK(s.tally().skipped == 1);
        REQUIRE(s.tally().first_errors.size() == 1);
        CHECK(s.tally().first_errors.front().find("c.jsonl:2") != std::string::npos);
    }
    SUBCASE("empty manifest") {
        ShardStream s(open_manifest({}, {}));
        CHECK_FALSE(s.next());
    }
    SUBCASE("globs expand sorted") {
        const auto paths = expand_globs({(dir / "*.jsonl").string()});
        REQUIRE(paths.size() == 3);
        CHECK(paths[0].filename() == "a.jsonl");
        CHECK(paths[2].filename() == "c.jsonl");
    }
    SUBCASE("missing shard is fatal") {
        CHECK_THROWS_AS(open_manifest({(dir / "nope.jsonl").string()}, {}), IoError);
    }
    SUBCASE("for_each_record yields in-shard ordinals") {
        std::vector<std::uint64_t> ordinals;
        const auto t = for_each_record(dir / "b.jsonl", [&](SampleRecord&&, std::uint64_t o) { ordinals.push_back(o); });
        CHECK(ordinals == std::vector<std::uint64_t>{0, 1, 2});
        CHECK(t.records == 3);
    }
}

TEST_CASE("reservoir sampling") {
    std::vector<int> items(10);
    std::iota(items.begin(), items.end(), 0);

    const auto a = reservoir_sample(items, 5, 7);
    const auto b = reservoir_sample(items, 5, 7);
    CHECK(a.size() == 5);
    CHECK(a == b);

    std::vector<int> three{1, 2, 3};
    CHECK(reservoir_sample(three, 5, 7) == three);
    CHECK(reservoir_sample(three, 0, 7).empty());
}

TEST_CASE("reservoir sampling selects each item with probability k/N") {
    // Empirical inclusion frequency over many seeds; each item should appear in
    // 10% of samples.
    constexpr int n = 1000;
    constexpr int k = 100;
    constexpr int seeds = 10000;
    std::vector<int> items(n);
    std::iota(items.begin(), items.end(), 0);
    std::vector<int> hits(n, 0);
    for (int s = 0; s < seeds; ++s) {
        for (int v : reservoir_sample(items, k, static_cast<std::uint64_t>(s) * 2654435761u + 1)) {
            ++hits[v];
        }
    }
    int outside = 0;
    for (int h : hits) {
        const double f = static_cast<double>(h) / seeds;
        outside += std::fabs(f - 0.10) > 0.01 ? 1 : 0;
    }
    // Binomial sd at p=0.1 over 10,000 draws is 0.003, so +-0.01 is over 3 sd.
    CHECK(outside == 0);
}

TEST_CASE("uniform_below stays in range and covers it") {
    std::mt19937_64 rng(1);
    std::vector<int> seen(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = uniform_below(rng, 7);
        REQUIRE(v < 7);
        ++seen[v];
    }
    for (int c : seen) {
        CHECK(c > 800);
    }
    CHECK(uniform_below(rng, 1) == 0);
}

TEST_CASE("embedding files") {
    TempDir dir;
    SUBCASE("2x3 matrix") {
        write_file(dir / "m.paem", paem(2, 3, {1, 2, 3, 4, 5, 6}));
        const auto m = load_embeddings(dir / "m.paem");
        CHECK(m.rows() == 2);
        CHECK(m.dims() == 3);
        CHECK(m.row(1)[2] == 6.0f);
    }
    SUBCASE("truncated data") {
        write_file(dir / "m.paem", paem(2, 3, {1, 2, 3, 4, 5}));
        CHECK_THROWS_WITH_AS(load_embeddings(dir / "m.paem"), doctest::Contains("truncated"), IoError);
    }
    SUBCASE("non-finite value names row and column") {
        const float nan = std::numeric_limits<float>::quiet_NaN();
        write_file(dir / "m.paem", paem(2, 3, {1, 2, 3, 4, nan, 6}));
        CHECK_THROWS_WITH_AS(load_embeddings(dir / "m.paem"), doctest::Contains("non-finite at row 1, col 1"),
                             IoError);
    }
    SUBCASE("bad magic") {
        write_file(dir / "m.paem", "XXXX");
        CHECK_THROWS_WITH_AS(load_embeddings(dir / "m.paem"), doctest::Contains("byte offset 0"), IoError);
    }
    SUBCASE("save and load with an id map") {
        EmbeddingMatrix m(2, 2, {1, 0, 0, 1}, {{"a", 0}, {"b", 1}});
        save_embeddings(m, dir / "s.paem");
        const auto back = load_embeddings(dir / "s.paem");
        CHECK(back.find("b") == std::optional<std::uint32_t>(1));
        CHECK(back.data().size() == 4);
    }
    SUBCASE("concatenation offsets later parts") {
        std::vector<EmbeddingMatrix> parts;
        parts.emplace_back(1, 2, std::vector<float>{1, 2});
        parts.emplace_back(2, 2, std::vector<float>{3, 4, 5, 6}, std::map<std::string, std::uint32_t>{{"k", 1}});
        const auto all = concatenate(parts);
        CHECK(all.rows() == 3);
        CHECK(all.row(2)[1] == 6.0f);
        CHECK(all.find("k") == std::optional<std::uint32_t>(2));
    }
}
