#include "poolaudit/source_tables.hpp"

#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/url.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace poolaudit {
namespace {

std::string escape_regex(std::string_view literal) {
    static const std::string special = R"(\^$.|?*+()[]{})";
    std::string out;
    for (char c : literal) {
        if (special.find(c) != std::string::npos) {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    return out;
}

double parse_number(const std::string& field, const std::filesystem::path& path, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size()) {
        throw ConfigError("source_annot", path.string() + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
    }
    return v;
}

} // namespace

CategoryMap CategoryMap::load(const std::filesystem::path& path) {
    std::map<std::string, std::string> mapping;
    csv::for_each_row(path, [&](const csv::Row& row, std::size_t line_no) {
        if (line_no == 1) {
            return;
        }
        if (row.size() != 2 || row[0].empty() || row[1].empty()) {
            throw ConfigError("source_annot", path.string() + ":" + std::to_string(line_no) +
                                                  ": expected raw_name,merged_name");
        }
        mapping[row[0]] = row[1];
    });
    return CategoryMap(std::move(mapping));
}

const std::string& CategoryMap::merged(const std::string& raw) const {
    const auto it = mapping_.find(raw);
    return it == mapping_.end() ? raw : it->second;
}

std::set<std::string> map_categories(const std::set<std::string>& raw, const CategoryMap& map) {
    std::set<std::string> out;
    for (const auto& name : raw) {
        out.insert(map.merged(name));
    }
    return out;
}

NewsSiteTable NewsSiteTable::load(const std::filesystem::path& path) {
    NewsSiteTable table;
    csv::for_each_row(path, [&](const csv::Row& row, std::size_t line_no) {
        if (line_no == 1) {
            return;
        }
        if (row.size() != 3 || row[0].empty()) {
            throw ConfigError("source_annot", path.string() + ":" + std::to_string(line_no) + ": expected domain,name,country");
        }
        table.add(row[0], NewsSite{row[1], row[2]});
    });
    return table;
}

void NewsSiteTable::add(const std::string& registered_domain, NewsSite site) {
    sites_[to_lower_ascii(registered_domain)] = std::move(site);
}

std::optional<NewsSite> NewsSiteTable::find(const std::string& registered_domain) const {
    const auto it = sites_.find(registered_domain);
    if (it == sites_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<NewsSite> match_news_site(const DomainInfo& domain, const NewsSiteTable& table) {
    if (auto hit = table.find(domain.host)) {
        return hit;
    }
    return table.find(domain.registered);
}

int earliest_index_year(std::string_view ts) {
    const auto malformed = [&]() {
        return InvariantError("source_annot", "malformed archive timestamp '" + std::string(ts) + "'");
    };
    if (ts.size() != 14) {
        throw malformed();
    }
    for (char c : ts) {
        if (c < '0' || c > '9') {
            throw malformed();
        }
    }
    const auto field = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        std::from_chars(ts.data() + pos, ts.data() + pos + len, v);
        return v;
    };
    const int month = field(4, 2);
    const int day = field(6, 2);
    if (month < 1 || month > 12 || day < 1 || day > 31 || field(8, 2) > 23 || field(10, 2) > 59 || field(12, 2) > 60) {
        throw malformed();
    }
    return field(0, 4);
}

OccupationTable OccupationTable::load(const std::filesystem::path& path) {
    OccupationTable table;
    std::vector<KeywordPattern> patterns;
    csv::for_each_row(path, [&](const csv::Row& row, std::size_t line_no) {
        if (line_no == 1) {
            return;
        }
        if (row.size() != 3 || row[0].empty()) {
            throw ConfigError("source_annot", path.string() + ":" + std::to_string(line_no) +
                                                  ": expected title,salary,prestige");
        }
        Occupation occ{to_lower_ascii(row[0]), parse_number(row[1], path, line_no), parse_number(row[2], path, line_no)};
        patterns.push_back(PatternSet::make_pattern(occ.title, escape_regex(occ.title), "occupation"));
        table.occupations_.push_back(std::move(occ));
    });
    table.patterns_ = PatternSet("occupations", std::move(patterns));
    return table;
}

} // namespace poolaudit
