#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace poolaudit {

struct IpRange {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    std::string country;  // two-letter code, or "-" when the source leaves it unassigned
};

// Sorted, disjoint, inclusive IPv4 ranges.
class IpRangeDb {
public:
    IpRangeDb() = default;
    // Throws InvariantError naming the 1-based row on unsorted, overlapping or
    // inverted ranges.
    explicit IpRangeDb(std::vector<IpRange> rows);

    // CSV `ip_from,ip_to,country_code[,country_name]`, quoted fields allowed (the
    // IP2Location LITE DB1 layout). Rows whose bounds exceed 32 bits are IPv6 and are
    // skipped and counted.
    static IpRangeDb load(const std::filesystem::path& path);

    // Binary search; nullopt when no range covers `ip` or the range is unassigned.
    std::optional<std::string> country(std::uint32_t ip) const;
    // Reference linear scan with identical semantics.
    std::optional<std::string> country_linear(std::uint32_t ip) const;

    const std::vector<IpRange>& rows() const noexcept { return rows_; }
    std::uint64_t skipped_ipv6() const noexcept { return skipped_ipv6_; }

private:
    std::vector<IpRange> rows_;
    std::uint64_t skipped_ipv6_ = 0;
};

inline std::optional<std::string> ip_country(const IpRangeDb& db, std::uint32_t ip) {
    return db.country(ip);
}

} // namespace poolaudit
