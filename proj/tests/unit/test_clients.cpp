#include "poolaudit/clients.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/sha256.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace poolaudit;
using testing::TempDir;

namespace {

// Serves canned bodies and counts calls.
class CannedTransport : public Transport {
public:
    HttpResponse fetch(const RequestKey& key) override {
        ++calls;
        if (key.canonical == "down.example") {
            return {503, "unavailable"};
        }
        return {200, "body for " + key.describe() + " #" + std::to_string(calls)};
    }
    int calls = 0;
};

const char* kStockPhotos =
    R"({"success":true,"errors":[],"result":{"domain":"shutterstock.com","content_categories":[{"id":116,"name":"Stock Photos"}]}})";
const char* kUncategorized = R"({"success":true,"result":{"domain":"x.org","content_categories":[]}})";
const char* kSnapshot2013 =
    R"({"url":"example.com","archived_snapshots":{"closest":{"status":"200","available":true,"url":"http://web.archive.org/web/20130415000000/http://example.com/","timestamp":"20130415000000"}}})";
const char* kNoSnapshot = R"({"url":"example.com","archived_snapshots":{}})";
const std::string kFace =
    R"({"BoundingBox":{"Width":0.2,"Height":0.3,"Left":0.1,"Top":0.1},"AgeRange":{"Low":20,"High":29},"Gender":{"Value":"Female","Confidence":99.2}})";
const std::string kOneFace = R"({"FaceDetails":[)" + kFace + "]}";
const char* kNoFaces = R"({"FaceDetails":[]})";
const std::string kNoFacesText = kNoFaces;

} // namespace

TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("request keys are canonical") {
    CHECK(RequestKey::domain_categories("NYTimes.com").canonical == "nytimes.com");
    CHECK(RequestKey::wayback("HTTP://Example.COM/A?b").canonical == "http://example.com/A?b");
    CHECK(RequestKey::dns("Example.com.").canonical == "example.com");
    CHECK(RequestKey::faces("uid-1").service == service::faces);
    CHECK_THROWS_AS(RequestKey::wayback("/relative"), InvariantError);
    const auto k = RequestKey::dns("a.b");
    CHECK(k.digest() == sha256_hex("dns\na.b"));
}

TEST_CASE("fixture store") {
    TempDir dir;
    FixtureStore store(dir / "fx");
    const auto key = RequestKey::domain_categories("shutterstock.com");
    CHECK_FALSE(store.contains(key));
    const auto empty_hash = store.content_hash();
    CHECK(store.put(key, kStockPhotos, 200, "2026-01-01T00:00:00Z"));
    CHECK_FALSE(store.put(key, "other", 200, "2026-01-02T00:00:00Z"));
    CHECK(store.get(key) == std::optional<std::string>(kStockPhotos));
    CHECK(store.meta(key)->key == "shutterstock.com");
    CHECK(store.meta(key)->fetched_at == "2026-01-01T00:00:00Z");
    CHECK(store.bin_path(key) == dir / "fx" / "cloudflare" / (key.digest() + ".bin"));
    CHECK(store.content_hash() != empty_hash);
    CHECK(store.content_hash() == FixtureStore(dir / "fx").content_hash());
}

TEST_CASE("replay, record and live modes") {
    TempDir dir;
    auto store = std::make_shared<FixtureStore>(dir / "fx");
    auto transport = std::make_shared<CannedTransport>();
    const auto key = RequestKey::wayback("https://example.com/a.jpg");

    SUBCASE("replay miss names the key") {
        ServiceClient replay(FetchMode::replay, store, transport);
        try {
            replay.fetch_with_replay(key);
            FAIL("expected a fixture miss");
        } catch (const FixtureMissingError& e) {
            CHECK(e.exit_code() == 3);
            CHECK(std::string(e.what()).find("https://example.com/a.jpg") != std::string::npos);
            CHECK(e.service() == "wayback");
        }
        CHECK(transport->calls == 0);
    }
    SUBCASE("record then replay") {
        ServiceClient record(FetchMode::record, store, transport);
        const auto first = record.fetch_with_replay(key);
        const auto again = record.fetch_with_replay(key);
        CHECK(first == again);
        CHECK(transport->calls == 1);
        ServiceClient replay(FetchMode::replay, store, std::make_shared<FailingTransport>());
        CHECK(replay.fetch_with_replay(key) == first);
        CHECK(replay.fetch_with_replay(key) == first);
    }
    SUBCASE("live does not store") {
        ServiceClient live(FetchMode::live, store, transport);
        live.fetch_with_replay(key);
        CHECK_FALSE(store->contains(key));
    }
    SUBCASE("non-2xx is an IO error and is not stored") {
        ServiceClient record(FetchMode::record, store, transport);
        const auto down = RequestKey::domain_categories("down.example");
        CHECK_THROWS_WITH_AS(record.fetch_with_replay(down), doctest::Contains("503"), IoError);
        CHECK_FALSE(store->contains(down));
    }
    SUBCASE("failing transport counts calls") {
        auto failing = std::make_shared<FailingTransport>();
        ServiceClient live(FetchMode::live, nullptr, failing);
        CHECK_THROWS_AS(live.fetch_with_replay(key), IoError);
        CHECK(failing->calls() == 1);
    }
}

TEST_CASE("fetch modes") {
    CHECK(parse_fetch_mode("replay") == FetchMode::replay);
    CHECK(parse_fetch_mode("record") == FetchMode::record);
    CHECK(to_string(FetchMode::live) == "live");
    CHECK_THROWS_AS(parse_fetch_mode("offline"), ConfigError);
    ::setenv("POOLAUDIT_MODE", "record", 1);
    CHECK(fetch_mode_from_env() == FetchMode::record);
    ::unsetenv("POOLAUDIT_MODE");
    CHECK(fetch_mode_from_env(FetchMode::live) == FetchMode::live);
}

TEST_CASE("domain category responses") {
    CHECK(parse_domain_categories(kStockPhotos) == std::set<std::string>{"Stock Photos"});
    CHECK(parse_domain_categories(kUncategorized).empty());
    CHECK_THROWS_AS(parse_domain_categories("not json"), InvariantError);
    CHECK_THROWS_AS(parse_domain_categories(R"({"success":false,"errors":[{"code":1}]})"), InvariantError);
    CHECK_THROWS_AS(parse_domain_categories(R"({"result":{"content_categories":[{"id":1}]}})"), InvariantError);

    // 100,000 domains of which 94,428 carry a category
    Coverage c;
    for (int i = 0; i < 100000; ++i) {
        const auto names = parse_domain_categories(i < 94428 ? kStockPhotos : kUncategorized);
        ++c.requests;
        c.answered += names.empty() ? 0 : 1;
    }
    CHECK(c.rate() == doctest::Approx(0.944).epsilon(0.001));
}

TEST_CASE("archive availability responses") {
    CHECK(parse_wayback_first(kSnapshot2013) == std::optional<std::string>("20130415000000"));
    CHECK_FALSE(parse_wayback_first(kNoSnapshot));
    CHECK_THROWS_AS(parse_wayback_first(R"({"archived_snapshots":[]})"), InvariantError);

    // 1,000,000 URLs, 22.7% archived
    Coverage c;
    for (int i = 0; i < 1000000; ++i) {
        ++c.requests;
        c.answered += (i % 1000 < 227 ? parse_wayback_first(kSnapshot2013) : parse_wayback_first(kNoSnapshot)) ? 1 : 0;
    }
    CHECK(c.rate() == doctest::Approx(0.227).epsilon(1e-9));
}

TEST_CASE("face detection responses") {
    const auto one = parse_face_attributes(kOneFace);
    REQUIRE(one.size() == 1);
    CHECK(one[0].gender == "Female");
    CHECK(one[0].age_low == 20);
    CHECK(one[0].age_high == 29);
    CHECK(one[0].width == doctest::Approx(0.2));
    CHECK(parse_face_attributes(kNoFaces).empty());
    CHECK_THROWS_AS(parse_face_attributes(R"({"FaceDetails":[{"Gender":{}}]})"), InvariantError);

    // 100,000 images: 18,000 with faces, 11,000 of them with exactly one
    const std::string two = R"({"FaceDetails":[)" + kFace + "," + kFace + "]}";
    REQUIRE(parse_face_attributes(two).size() == 2);
    std::uint64_t with_faces = 0;
    std::uint64_t single = 0;
    for (int i = 0; i < 100000; ++i) {
        const std::string& body = i < 11000 ? kOneFace : i < 18000 ? two : kNoFacesText;
        const auto faces = parse_face_attributes(body);
        with_faces += faces.empty() ? 0 : 1;
        single += faces.size() == 1 ? 1 : 0;
    }
    CHECK(with_faces == 18000);
    CHECK(single == 11000);
}

TEST_CASE("dns responses") {
    const auto ips = parse_dns(R"({"host":"a.b","ipv4":["10.0.0.2","10.0.0.1"]})");
    CHECK(ips.size() == 2);
    CHECK(parse_dns(R"({"host":"a.b","ipv4":[]})").empty());
    CHECK_THROWS_AS(parse_dns(R"({"host":"a.b"})"), InvariantError);
    CHECK_THROWS_AS(parse_dns(R"({"ipv4":["10.0.0.300"]})"), InvariantError);
}

TEST_CASE("typed fetchers go through the store") {
    TempDir dir;
    auto store = std::make_shared<FixtureStore>(dir / "fx");
    store->put(RequestKey::domain_categories("shutterstock.com"), kStockPhotos, 200, "t");
    store->put(RequestKey::wayback("https://example.com/"), kSnapshot2013, 200, "t");
    store->put(RequestKey::faces("u1"), kOneFace, 200, "t");
    store->put(RequestKey::dns("a.b"), R"({"host":"a.b","ipv4":["10.0.0.1"]})", 200, "t");
    ServiceClient client(FetchMode::replay, store, std::make_shared<FailingTransport>());
    CHECK(fetch_domain_categories(client, "ShutterStock.com") == std::set<std::string>{"Stock Photos"});
    CHECK(fetch_wayback_first(client, "HTTPS://EXAMPLE.COM/") == std::optional<std::string>("20130415000000"));
    CHECK(fetch_face_attributes(client, "u1").size() == 1);
    CHECK(resolve_host(client, "A.B.") == std::vector<std::uint32_t>{0x0a000001u});
    CHECK_THROWS_AS(fetch_face_attributes(client, "u2"), FixtureMissingError);
}
