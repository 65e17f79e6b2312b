#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace poolaudit {

namespace service {
inline constexpr const char* categories = "cloudflare";
inline constexpr const char* wayback = "wayback";
inline constexpr const char* faces = "rekognition";
inline constexpr const char* dns = "dns";
} // namespace service

enum class FetchMode { replay, record, live };

std::string to_string(FetchMode mode);
// Throws ConfigError on an unknown name.
FetchMode parse_fetch_mode(const std::string& name);
// POOLAUDIT_MODE, or `fallback` when unset.
FetchMode fetch_mode_from_env(FetchMode fallback = FetchMode::replay);

struct RequestKey {
    std::string service;
    std::string canonical;

    // Lowercased registered domain.
    static RequestKey domain_categories(std::string_view domain);
    // URL with scheme and host lowercased. Throws InvariantError on a relative URL.
    static RequestKey wayback(std::string_view url);
    static RequestKey faces(std::string_view uid);
    static RequestKey dns(std::string_view host);

    // sha256(service + "\n" + canonical), the fixture file stem.
    std::string digest() const;
    std::string describe() const { return service + ":" + canonical; }

    auto operator<=>(const RequestKey&) const = default;
};

struct FixtureMeta {
    std::string service;
    std::string key;
    int status = 200;
    std::string fetched_at;
};

// `<dir>/<service>/<digest>.bin` holding the response bytes, plus `<digest>.meta.json`.
class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path bin_path(const RequestKey& key) const;
    std::filesystem::path meta_path(const RequestKey& key) const;

    bool contains(const RequestKey& key) const;
    std::optional<std::string> get(const RequestKey& key) const;
    std::optional<FixtureMeta> meta(const RequestKey& key) const;

    // Stores a response unless one already exists for the key. Returns false when
    // an earlier response was kept.
    bool put(const RequestKey& key, std::string_view bytes, int status, const std::string& fetched_at);

    // Hash over the sorted (relative path, file sha256) pairs of every file, or the
    // hash of the empty string when the directory does not exist.
    std::string content_hash() const;

private:
    std::filesystem::path dir_;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    // Throws IoError when the service cannot be reached.
    virtual HttpResponse fetch(const RequestKey& key) = 0;
};

// Calls the real services over HTTPS (DNS through the system resolver).
// Endpoints and credentials come from the environment; see README.
class LiveTransport : public Transport {
public:
    explicit LiveTransport(double requests_per_second = 1.0);
    HttpResponse fetch(const RequestKey& key) override;

private:
    void acquire();

    double rate_;
    std::mutex mutex_;
    double tokens_ = 1.0;
    std::chrono::steady_clock::time_point last_;
};

// Transport that refuses every call; used to prove a run made no network requests.
class FailingTransport : public Transport {
public:
    HttpResponse fetch(const RequestKey& key) override;
    std::uint64_t calls() const noexcept { return calls_.load(); }

private:
    std::atomic<std::uint64_t> calls_{0};
};

class ServiceClient {
public:
    // `transport` may be null in replay mode; a LiveTransport is created on first need.
    ServiceClient(FetchMode mode, std::shared_ptr<FixtureStore> store, std::shared_ptr<Transport> transport = nullptr);

    FetchMode mode() const noexcept { return mode_; }
    const FixtureStore* store() const noexcept { return store_.get(); }

    // Replay: stored bytes or FixtureMissingError. Record: fetch, store (first write
    // wins) and return the stored bytes. Live: fetch only. Non-2xx responses outside
    // replay throw IoError with the status.
    std::string fetch_with_replay(const RequestKey& key);

private:
    Transport& transport();

    FetchMode mode_;
    std::shared_ptr<FixtureStore> store_;
    std::shared_ptr<Transport> transport_;
    std::mutex transport_mutex_;
};

struct FaceAttributes {
    double left = 0;  // bounding box, fractions of the image size
    double top = 0;
    double width = 0;
    double height = 0;
    std::string gender;
    int age_low = 0;
    int age_high = 0;
};

// Response parsers. Each throws InvariantError on a malformed body.

// `result.content_categories[].name`; a missing or empty list means uncategorized.
std::set<std::string> parse_domain_categories(std::string_view body);
// `archived_snapshots.closest.timestamp` when available.
std::optional<std::string> parse_wayback_first(std::string_view body);
// `FaceDetails[]` with BoundingBox, AgeRange and Gender.
std::vector<FaceAttributes> parse_face_attributes(std::string_view body);
// `{"host": ..., "ipv4": ["a.b.c.d", ...]}`.
std::vector<std::uint32_t> parse_dns(std::string_view body);

std::set<std::string> fetch_domain_categories(ServiceClient& client, std::string_view domain);
std::optional<std::string> fetch_wayback_first(ServiceClient& client, std::string_view url);
std::vector<FaceAttributes> fetch_face_attributes(ServiceClient& client, std::string_view uid);
std::vector<std::uint32_t> resolve_host(ServiceClient& client, std::string_view host);

// Requests answered with a non-empty result versus all requests.
struct Coverage {
    std::uint64_t requests = 0;
    std::uint64_t answered = 0;

    double rate() const { return requests == 0 ? 0.0 : static_cast<double>(answered) / static_cast<double>(requests); }
    void merge(const Coverage& other) {
        requests += other.requests;
        answered += other.answered;
    }
};

} // namespace poolaudit
