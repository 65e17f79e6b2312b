#include "poolaudit/clients.hpp"

#include "poolaudit/error.hpp"
#include "poolaudit/sha256.hpp"
#include "poolaudit/url.hpp"

#include <httplib.h>
#include <json.hpp>

#include <netdb.h>
#include <arpa/inet.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

namespace poolaudit {
namespace {

using nlohmann::json;

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string percent_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes to a private temp file, then hard-links it into place so a concurrent
// writer for the same key cannot replace an existing file.
bool publish_once(const std::filesystem::path& target, std::string_view bytes) {
    static std::atomic<std::uint64_t> counter{0};
    std::filesystem::create_directories(target.parent_path());
    const auto tmp = target.parent_path() /
                     (".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("clients", "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("clients", "cannot write " + tmp.string());
        }
    }
    const bool linked = ::link(tmp.c_str(), target.c_str()) == 0;
    const int err = errno;
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    if (!linked && err != EEXIST) {
        throw IoError("clients", "cannot store " + target.string() + ": " + std::strerror(err));
    }
    return linked;
}

json parse_body(std::string_view body, const char* what) {
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        throw InvariantError("clients", std::string("malformed ") + what + " response: " + e.what());
    }
}

[[noreturn]] void malformed(const char* what, const std::string& detail) {
    throw InvariantError("clients", std::string("malformed ") + what + " response: " + detail);
}

HttpResponse http_get(const std::string& endpoint, const std::string& suffix, const std::string& token) {
    const auto parsed = parse_url(endpoint);
    if (!parsed) {
        throw ConfigError("clients", "bad endpoint '" + endpoint + "'");
    }
    std::string base = parsed->scheme + "://" + parsed->host;
    if (!parsed->port.empty()) {
        base += ":" + parsed->port;
    }
    std::string path = parsed->rest.empty() ? "/" : parsed->rest;
    path += suffix;

    httplib::Client cli(base);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(30);
    cli.set_follow_location(true);
    httplib::Headers headers{{"User-Agent", std::string("poolaudit/") + POOLAUDIT_VERSION}};
    if (!token.empty()) {
        headers.emplace("Authorization", "Bearer " + token);
    }
    auto res = cli.Get(path, headers);
    if (!res) {
        throw IoError("clients", "request to " + base + " failed: " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
}

HttpResponse resolve_live(const std::string& host) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &result);
    std::vector<std::string> ips;
    if (rc == 0) {
        for (auto* ai = result; ai != nullptr; ai = ai->ai_next) {
            char buf[INET_ADDRSTRLEN];
            const auto* sin = reinterpret_cast<const sockaddr_in*>(ai->ai_addr);
            if (::inet_ntop(AF_INET, &sin->sin_addr, buf, sizeof buf)) {
                ips.emplace_back(buf);
            }
        }
        ::freeaddrinfo(result);
    } else if (rc != EAI_NONAME && rc != EAI_NODATA) {
        throw IoError("clients", "dns lookup of " + host + " failed: " + ::gai_strerror(rc));
    }
    std::sort(ips.begin(), ips.end());
    ips.erase(std::unique(ips.begin(), ips.end()), ips.end());
    return HttpResponse{200, json{{"host", host}, {"ipv4", ips}}.dump()};
}

} // namespace

std::string to_string(FetchMode mode) {
    switch (mode) {
    case FetchMode::replay: return "replay";
    case FetchMode::record: return "record";
    case FetchMode::live: return "live";
    }
    return "replay";
}

FetchMode parse_fetch_mode(const std::string& name) {
    if (name == "replay") return FetchMode::replay;
    if (name == "record") return FetchMode::record;
    if (name == "live") return FetchMode::live;
    throw ConfigError("clients", "unknown fetch mode '" + name + "' (replay, record, live)");
}

FetchMode fetch_mode_from_env(FetchMode fallback) {
    const char* v = std::getenv("POOLAUDIT_MODE");
    return v && *v ? parse_fetch_mode(v) : fallback;
}

RequestKey RequestKey::domain_categories(std::string_view domain) {
    return {service::categories, to_lower_ascii(domain)};
}

RequestKey RequestKey::wayback(std::string_view url) {
    const auto parsed = parse_url(url);
    if (!parsed) {
        throw InvariantError("clients", "not an absolute url: " + std::string(url));
    }
    return {service::wayback, canonical_url(*parsed)};
}

RequestKey RequestKey::faces(std::string_view uid) {
    return {service::faces, std::string(uid)};
}

RequestKey RequestKey::dns(std::string_view host) {
    std::string h = to_lower_ascii(host);
    while (!h.empty() && h.back() == '.') {
        h.pop_back();
    }
    return {service::dns, h};
}

std::string RequestKey::digest() const {
    return sha256_hex(service + "\n" + canonical);
}

std::filesystem::path FixtureStore::bin_path(const RequestKey& key) const {
    return dir_ / key.service / (key.digest() + ".bin");
}

std::filesystem::path FixtureStore::meta_path(const RequestKey& key) const {
    return dir_ / key.service / (key.digest() + ".meta.json");
}

bool FixtureStore::contains(const RequestKey& key) const {
    return std::filesystem::is_regular_file(bin_path(key));
}

std::optional<std::string> FixtureStore::get(const RequestKey& key) const {
    return read_file(bin_path(key));
}

std::optional<FixtureMeta> FixtureStore::meta(const RequestKey& key) const {
    const auto text = read_file(meta_path(key));
    if (!text) {
        return std::nullopt;
    }
    const json j = parse_body(*text, "fixture metadata");
    return FixtureMeta{j.value("service", ""), j.value("key", ""), j.value("status", 0), j.value("fetched_at", "")};
}

bool FixtureStore::put(const RequestKey& key, std::string_view bytes, int status, const std::string& fetched_at) {
    if (!publish_once(bin_path(key), bytes)) {
        return false;
    }
    const json meta{{"service", key.service}, {"key", key.canonical}, {"status", status}, {"fetched_at", fetched_at}};
    publish_once(meta_path(key), meta.dump(2) + "\n");
    return true;
}

std::string FixtureStore::content_hash() const {
    std::vector<std::pair<std::string, std::string>> entries;
    if (std::filesystem::is_directory(dir_)) {
        for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
            if (!entry.is_regular_file() || entry.path().filename().string().rfind(".tmp-", 0) == 0) {
                continue;
            }
            entries.emplace_back(std::filesystem::relative(entry.path(), dir_).generic_string(),
                                 sha256_file_hex(entry.path()));
        }
    }
    std::sort(entries.begin(), entries.end());
    std::string joined;
    for (const auto& [path, hash] : entries) {
        joined += path + "\t" + hash + "\n";
    }
    return sha256_hex(joined);
}

LiveTransport::LiveTransport(double requests_per_second)
    : rate_(requests_per_second), last_(std::chrono::steady_clock::now()) {
    if (!(rate_ > 0)) {
        throw ConfigError("clients", "request rate must be positive");
    }
}

void LiveTransport::acquire() {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(1.0, tokens_ + elapsed * rate_);
    if (tokens_ < 1.0) {
        std::this_thread::sleep_for(std::chrono::duration<double>((1.0 - tokens_) / rate_));
        last_ = std::chrono::steady_clock::now();
        tokens_ = 0.0;
    } else {
        tokens_ -= 1.0;
    }
}

HttpResponse LiveTransport::fetch(const RequestKey& key) {
    if (key.service == service::dns) {
        return resolve_live(key.canonical);
    }
    acquire();
    if (key.service == service::categories) {
        std::string endpoint = env_or("POOLAUDIT_CLOUDFLARE_ENDPOINT", "");
        if (endpoint.empty()) {
            const std::string account = env_or("POOLAUDIT_CLOUDFLARE_ACCOUNT", "");
            if (account.empty()) {
                throw ConfigError("clients", "live categories need POOLAUDIT_CLOUDFLARE_ACCOUNT or POOLAUDIT_CLOUDFLARE_ENDPOINT");
            }
            endpoint = "https://api.cloudflare.com/client/v4/accounts/" + account + "/intel/domain?domain=";
        }
        return http_get(endpoint, percent_encode(key.canonical), env_or("POOLAUDIT_CLOUDFLARE_TOKEN", ""));
    }
    if (key.service == service::wayback) {
        const std::string endpoint =
            env_or("POOLAUDIT_WAYBACK_ENDPOINT", "https://archive.org/wayback/available?timestamp=19900101&url=");
        return http_get(endpoint, percent_encode(key.canonical), "");
    }
    if (key.service == service::faces) {
        const std::string endpoint = env_or("POOLAUDIT_FACE_ENDPOINT", "");
        if (endpoint.empty()) {
            throw ConfigError("clients", "live face attributes need POOLAUDIT_FACE_ENDPOINT");
        }
        return http_get(endpoint, percent_encode(key.canonical), env_or("POOLAUDIT_FACE_TOKEN", ""));
    }
    throw ConfigError("clients", "no live transport for service '" + key.service + "'");
}

HttpResponse FailingTransport::fetch(const RequestKey& key) {
    calls_.fetch_add(1);
    throw IoError("clients", "network access refused for " + key.describe());
}

ServiceClient::ServiceClient(FetchMode mode, std::shared_ptr<FixtureStore> store, std::shared_ptr<Transport> transport)
    : mode_(mode), store_(std::move(store)), transport_(std::move(transport)) {
    if (mode_ != FetchMode::live && !store_) {
        throw ConfigError("clients", to_string(mode_) + " mode needs a fixture directory");
    }
}

Transport& ServiceClient::transport() {
    std::lock_guard lock(transport_mutex_);
    if (!transport_) {
        transport_ = std::make_shared<LiveTransport>(std::strtod(env_or("POOLAUDIT_RATE", "1").c_str(), nullptr));
    }
    return *transport_;
}

std::string ServiceClient::fetch_with_replay(const RequestKey& key) {
    if (mode_ == FetchMode::replay) {
        if (auto bytes = store_->get(key)) {
            return std::move(*bytes);
        }
        throw FixtureMissingError(key.service, key.canonical);
    }
    if (mode_ == FetchMode::record) {
        if (auto bytes = store_->get(key)) {
            return std::move(*bytes);
        }
    }
    HttpResponse res = transport().fetch(key);
    if (res.status < 200 || res.status >= 300) {
        throw IoError("clients", key.describe() + " returned HTTP " + std::to_string(res.status));
    }
    if (mode_ == FetchMode::record) {
        store_->put(key, res.body, res.status, utc_now());
        return *store_->get(key);
    }
    return std::move(res.body);
}

std::set<std::string> parse_domain_categories(std::string_view body) {
    const json j = parse_body(body, "categories");
    if (!j.is_object()) {
        malformed("categories", "expected an object");
    }
    if (j.contains("success") && j["success"].is_boolean() && !j["success"].get<bool>()) {
        malformed("categories", "service reported failure");
    }
    std::set<std::string> names;
    const auto result = j.find("result");
    if (result == j.end() || result->is_null()) {
        return names;
    }
    if (!result->is_object()) {
        malformed("categories", "result is not an object");
    }
    const auto cats = result->find("content_categories");
    if (cats == result->end() || cats->is_null()) {
        return names;
    }
    if (!cats->is_array()) {
        malformed("categories", "content_categories is not an array");
    }
    for (const auto& c : *cats) {
        if (!c.is_object() || !c.contains("name") || !c["name"].is_string()) {
            malformed("categories", "category without a name");
        }
        names.insert(c["name"].get<std::string>());
    }
    return names;
}

std::optional<std::string> parse_wayback_first(std::string_view body) {
    const json j = parse_body(body, "wayback");
    if (!j.is_object()) {
        malformed("wayback", "expected an object");
    }
    const auto snaps = j.find("archived_snapshots");
    if (snaps == j.end() || snaps->is_null()) {
        return std::nullopt;
    }
    if (!snaps->is_object()) {
        malformed("wayback", "archived_snapshots is not an object");
    }
    const auto closest = snaps->find("closest");
    if (closest == snaps->end() || closest->is_null()) {
        return std::nullopt;
    }
    if (!closest->is_object() || !closest->contains("timestamp") || !(*closest)["timestamp"].is_string()) {
        malformed("wayback", "closest snapshot without a timestamp");
    }
    if (closest->contains("available") && (*closest)["available"].is_boolean() &&
        !(*closest)["available"].get<bool>()) {
        return std::nullopt;
    }
    return (*closest)["timestamp"].get<std::string>();
}

std::vector<FaceAttributes> parse_face_attributes(std::string_view body) {
    const json j = parse_body(body, "face");
    if (!j.is_object()) {
        malformed("face", "expected an object");
    }
    std::vector<FaceAttributes> faces;
    const auto details = j.find("FaceDetails");
    if (details == j.end()) {
        return faces;
    }
    if (!details->is_array()) {
        malformed("face", "FaceDetails is not an array");
    }
    try {
        for (const auto& d : *details) {
            FaceAttributes f;
            const auto& box = d.at("BoundingBox");
            f.left = box.at("Left").get<double>();
            f.top = box.at("Top").get<double>();
            f.width = box.at("Width").get<double>();
            f.height = box.at("Height").get<double>();
            f.gender = d.at("Gender").at("Value").get<std::string>();
            f.age_low = d.at("AgeRange").at("Low").get<int>();
            f.age_high = d.at("AgeRange").at("High").get<int>();
            if (f.age_low < 0 || f.age_high < f.age_low) {
                malformed("face", "bad AgeRange");
            }
            faces.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        malformed("face", e.what());
    }
    return faces;
}

std::vector<std::uint32_t> parse_dns(std::string_view body) {
    const json j = parse_body(body, "dns");
    if (!j.is_object() || !j.contains("ipv4") || !j["ipv4"].is_array()) {
        malformed("dns", "expected {\"ipv4\": [...]}");
    }
    std::vector<std::uint32_t> ips;
    for (const auto& v : j["ipv4"]) {
        if (!v.is_string()) {
            malformed("dns", "address is not a string");
        }
        const auto ip = parse_ipv4(v.get<std::string>());
        if (!ip) {
            malformed("dns", "bad address '" + v.get<std::string>() + "'");
        }
        ips.push_back(*ip);
    }
    return ips;
}

std::set<std::string> fetch_domain_categories(ServiceClient& client, std::string_view domain) {
    return parse_domain_categories(client.fetch_with_replay(RequestKey::domain_categories(domain)));
}

std::optional<std::string> fetch_wayback_first(ServiceClient& client, std::string_view url) {
    return parse_wayback_first(client.fetch_with_replay(RequestKey::wayback(url)));
}

std::vector<FaceAttributes> fetch_face_attributes(ServiceClient& client, std::string_view uid) {
    return parse_face_attributes(client.fetch_with_replay(RequestKey::faces(uid)));
}

std::vector<std::uint32_t> resolve_host(ServiceClient& client, std::string_view host) {
    return parse_dns(client.fetch_with_replay(RequestKey::dns(host)));
}

} // namespace poolaudit
