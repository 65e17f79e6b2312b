#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>

namespace poolaudit {

// Public suffix rules (normal, wildcard and exception). A list built with
// naive() treats the last label as the suffix.
class PublicSuffixList {
public:
    static PublicSuffixList load(const std::filesystem::path& path, bool include_private = false);
    static PublicSuffixList naive();

    // Number of trailing labels of `host` forming its public suffix (>= 1).
    std::size_t suffix_labels(std::string_view host) const;
    bool is_country_tld(std::string_view label) const;
    const std::string& version() const noexcept { return version_; }
    bool is_naive() const noexcept { return naive_; }

private:
    std::unordered_set<std::string> rules_;
    std::unordered_set<std::string> wildcards_;   // "*.ck" stored as "ck"
    std::unordered_set<std::string> exceptions_;  // "!www.ck" stored as "www.ck"
    std::unordered_set<std::string> country_tlds_;
    std::string version_;
    bool naive_ = false;
};

// country code (uppercase) -> western flag.
class RegionTable {
public:
    static RegionTable load(const std::filesystem::path& path);
    std::optional<bool> western(std::string_view country_code) const;
    std::size_t size() const noexcept { return table_.size(); }

private:
    std::map<std::string, bool> table_;
};

struct DomainInfo {
    std::string host;
    std::string registered;
    std::optional<std::string> cctld;
    std::optional<bool> western;
};

// Registered domain = public suffix plus one label. Hosts that are themselves a
// suffix (or IP literals) are their own registered domain. Throws InvariantError
// for an unparseable URL.
DomainInfo extract_base_domain(std::string_view url, const PublicSuffixList& psl,
                               const RegionTable* regions = nullptr);

DomainInfo domain_from_host(std::string_view host, const PublicSuffixList& psl, const RegionTable* regions = nullptr);

} // namespace poolaudit
