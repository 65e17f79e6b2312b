#pragma once

#include "poolaudit/domain.hpp"
#include "poolaudit/patterns.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace poolaudit {

// Raw service category name -> merged name; identity on unlisted names.
class CategoryMap {
public:
    CategoryMap() = default;
    explicit CategoryMap(std::map<std::string, std::string> mapping) : mapping_(std::move(mapping)) {}

    // CSV `raw_name,merged_name` with a header row.
    static CategoryMap load(const std::filesystem::path& path);

    const std::string& merged(const std::string& raw) const;
    const std::map<std::string, std::string>& mapping() const noexcept { return mapping_; }

private:
    std::map<std::string, std::string> mapping_;
};

std::set<std::string> map_categories(const std::set<std::string>& raw, const CategoryMap& map);

struct NewsSite {
    std::string name;
    std::string country;
};

class NewsSiteTable {
public:
    // CSV `domain,name,country` with a header row.
    static NewsSiteTable load(const std::filesystem::path& path);
    void add(const std::string& registered_domain, NewsSite site);

    std::optional<NewsSite> find(const std::string& registered_domain) const;
    std::size_t size() const noexcept { return sites_.size(); }

private:
    std::map<std::string, NewsSite> sites_;
};

// Exact match on the registered domain, so subdomains of a listed site match.
std::optional<NewsSite> match_news_site(const DomainInfo& domain, const NewsSiteTable& table);

// Year of a 14-digit `YYYYMMDDhhmmss` archive timestamp. Throws InvariantError
// when malformed.
int earliest_index_year(std::string_view timestamp);

struct Occupation {
    std::string title;
    double salary = 0;
    double prestige = 0;
};

// Job titles matched as whole phrases in lowercased text.
class OccupationTable {
public:
    // CSV `title,salary,prestige` with a header row.
    static OccupationTable load(const std::filesystem::path& path);

    const std::vector<Occupation>& occupations() const noexcept { return occupations_; }
    const PatternSet& patterns() const noexcept { return patterns_; }

private:
    std::vector<Occupation> occupations_;
    PatternSet patterns_;
};

} // namespace poolaudit
