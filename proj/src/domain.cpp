#include "poolaudit/domain.hpp"

#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/url.hpp"

#include <fstream>
#include <vector>

namespace poolaudit {
namespace {

std::vector<std::string_view> split_labels(std::string_view host) {
    std::vector<std::string_view> labels;
    std::size_t start = 0;
    while (start <= host.size()) {
        const auto dot = host.find('.', start);
        if (dot == std::string_view::npos) {
            labels.push_back(host.substr(start));
            break;
        }
        labels.push_back(host.substr(start, dot - start));
        start = dot + 1;
    }
    return labels;
}

bool is_two_letters(std::string_view s) {
    return s.size() == 2 && s[0] >= 'a' && s[0] <= 'z' && s[1] >= 'a' && s[1] <= 'z';
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'a' && c <= 'z') {
            c = static_cast<char>(c - 'a' + 'A');
        }
    }
    return out;
}

bool is_ip_literal(std::string_view host) {
    return host.find(':') != std::string_view::npos || parse_ipv4(host).has_value();
}

} // namespace

PublicSuffixList PublicSuffixList::load(const std::filesystem::path& path, bool include_private) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("source_annot", "cannot open public suffix list " + path.string());
    }
    PublicSuffixList psl;
    bool in_private = false;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.rfind("//", 0) == 0) {
            if (line.find("===BEGIN PRIVATE DOMAINS===") != std::string::npos) {
                in_private = true;
            } else if (line.find("===END PRIVATE DOMAINS===") != std::string::npos) {
                in_private = false;
            } else if (psl.version_.empty() && line.rfind("// VERSION: ", 0) == 0) {
                psl.version_ = line.substr(12);
            }
            continue;
        }
        const auto end = line.find_first_of(" \t");
        std::string rule = to_lower_ascii(line.substr(0, end));
        if (rule.empty()) {
            continue;
        }
        if (!in_private && rule.find('.') == std::string::npos && is_two_letters(rule)) {
            psl.country_tlds_.insert(rule);
        }
        if (in_private && !include_private) {
            continue;
        }
        if (rule.front() == '!') {
            psl.exceptions_.insert(rule.substr(1));
        } else if (rule.rfind("*.", 0) == 0) {
            psl.wildcards_.insert(rule.substr(2));
        } else {
            psl.rules_.insert(std::move(rule));
        }
    }
    if (psl.rules_.empty()) {
        throw ConfigError("source_annot", path.string() + " contains no public suffix rules");
    }
    return psl;
}

PublicSuffixList PublicSuffixList::naive() {
    PublicSuffixList psl;
    psl.naive_ = true;
    psl.version_ = "naive-last-two-labels";
    return psl;
}

std::size_t PublicSuffixList::suffix_labels(std::string_view host) const {
    const auto labels = split_labels(host);
    const std::size_t n = labels.size();
    if (naive_ || n == 0) {
        return 1;
    }
    // Suffix candidates, longest first: labels[i..n).
    std::vector<std::string_view> tails(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t offset = static_cast<std::size_t>(labels[i].data() - host.data());
        tails[i] = host.substr(offset);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (exceptions_.count(std::string(tails[i]))) {
            return n - i - 1;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (rules_.count(std::string(tails[i]))) {
            return n - i;
        }
        if (i + 1 < n && wildcards_.count(std::string(tails[i + 1]))) {
            return n - i;
        }
    }
    return 1;
}

bool PublicSuffixList::is_country_tld(std::string_view label) const {
    if (!is_two_letters(label)) {
        return false;
    }
    return naive_ || country_tlds_.count(std::string(label)) > 0;
}

RegionTable RegionTable::load(const std::filesystem::path& path) {
    RegionTable table;
    csv::for_each_row(path, [&](const csv::Row& row, std::size_t line_no) {
        if (line_no == 1 && !row.empty() && row[0] == "country_code") {
            return;
        }
        if (row.size() < 2 || (row[1] != "0" && row[1] != "1")) {
            throw ConfigError("source_annot", path.string() + ":" + std::to_string(line_no) +
                                                  ": expected country_code,western(0|1)");
        }
        table.table_[upper(row[0])] = row[1] == "1";
    });
    return table;
}

std::optional<bool> RegionTable::western(std::string_view country_code) const {
    const auto it = table_.find(upper(country_code));
    if (it == table_.end()) {
        return std::nullopt;
    }
    return it->second;
}

DomainInfo domain_from_host(std::string_view host_in, const PublicSuffixList& psl, const RegionTable* regions) {
    DomainInfo info;
    info.host = to_lower_ascii(host_in);
    if (is_ip_literal(info.host)) {
        info.registered = info.host;
        return info;
    }
    const auto labels = split_labels(info.host);
    const std::size_t n = labels.size();
    const std::size_t suffix = psl.suffix_labels(info.host);
    if (suffix >= n) {
        info.registered = info.host;
    } else {
        const auto& first = labels[n - suffix - 1];
        info.registered = info.host.substr(static_cast<std::size_t>(first.data() - info.host.data()));
    }
    if (n > 1 && psl.is_country_tld(labels.back())) {
        info.cctld = std::string(labels.back());
    }
    if (info.cctld && regions) {
        info.western = regions->western(*info.cctld);
    }
    return info;
}

DomainInfo extract_base_domain(std::string_view url, const PublicSuffixList& psl, const RegionTable* regions) {
    const auto parsed = parse_url(url);
    if (!parsed) {
        throw InvariantError("source_annot", "unparseable URL '" + std::string(url) + "'");
    }
    return domain_from_host(parsed->host, psl, regions);
}

} // namespace poolaudit
