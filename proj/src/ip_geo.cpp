#include "poolaudit/ip_geo.hpp"

#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"

#include <algorithm>
#include <charconv>
#include <iostream>

namespace poolaudit {
namespace {

std::optional<std::string> assigned(const IpRange& r) {
    if (r.country.empty() || r.country == "-") {
        return std::nullopt;
    }
    return r.country;
}

void validate_rows(const std::vector<IpRange>& rows_, const std::string& context) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (rows_[i].from > rows_[i].to) {
            throw InvariantError("source_annot", context + "ip range row " + std::to_string(i + 1) + " has ip_from > ip_to");
        }
        if (i > 0) {
            if (rows_[i].from < rows_[i - 1].from) {
                throw InvariantError("source_annot", context + "ip range row " + std::to_string(i + 1) + " is not sorted");
            }
            if (rows_[i].from <= rows_[i - 1].to) {
                throw InvariantError("source_annot", context + "ip range row " + std::to_string(i + 1) +
                                                         " overlaps row " + std::to_string(i));
            }
        }
    }
}

} // namespace

IpRangeDb::IpRangeDb(std::vector<IpRange> rows) : rows_(std::move(rows)) {
    validate_rows(rows_, "");
}

IpRangeDb IpRangeDb::load(const std::filesystem::path& path) {
    std::vector<IpRange> rows;
    std::uint64_t skipped = 0;
    csv::for_each_row(path, [&](const csv::Row& row, std::size_t line_no) {
        if (row.size() < 3) {
            throw InvariantError("source_annot", path.string() + ": row " + std::to_string(line_no) +
                                                     " needs ip_from,ip_to,country_code");
        }
        if (line_no == 1 && row[0] == "ip_from") {
            return;
        }
        unsigned __int128 bounds[2]{};
        for (int k = 0; k < 2; ++k) {
            const std::string& f = row[static_cast<std::size_t>(k)];
            if (f.empty() || f.size() > 39 || !std::all_of(f.begin(), f.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                throw InvariantError("source_annot", path.string() + ": row " + std::to_string(line_no) +
                                                         " has a non-numeric bound");
            }
            unsigned __int128 v = 0;
            for (char c : f) {
                v = v * 10 + static_cast<unsigned>(c - '0');
            }
            bounds[k] = v;
        }
        if (bounds[0] > 0xFFFFFFFFu || bounds[1] > 0xFFFFFFFFu) {
            ++skipped;
            return;
        }
        rows.push_back(IpRange{static_cast<std::uint32_t>(bounds[0]), static_cast<std::uint32_t>(bounds[1]), row[2]});
    });
    if (skipped > 0) {
        std::cerr << "warning: skipped " << skipped << " IPv6 rows in " << path.string() << "\n";
    }
    validate_rows(rows, path.string() + ": ");
    IpRangeDb db;
    db.rows_ = std::move(rows);
    db.skipped_ipv6_ = skipped;
    return db;
}

std::optional<std::string> IpRangeDb::country(std::uint32_t ip) const {
    const auto it = std::upper_bound(rows_.begin(), rows_.end(), ip,
                                     [](std::uint32_t value, const IpRange& r) { return value < r.from; });
    if (it == rows_.begin()) {
        return std::nullopt;
    }
    const IpRange& r = *std::prev(it);
    if (ip > r.to) {
        return std::nullopt;
    }
    return assigned(r);
}

std::optional<std::string> IpRangeDb::country_linear(std::uint32_t ip) const {
    for (const auto& r : rows_) {
        if (r.from <= ip && ip <= r.to) {
            return assigned(r);
        }
    }
    return std::nullopt;
}

} // namespace poolaudit
