#include "poolaudit/report.hpp"

#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace poolaudit {
namespace {

using u128 = unsigned __int128;

// a.passed/a.raw > b.passed/b.raw without rounding.
bool higher_rate(const GroupCount& a, const GroupCount& b) {
    return static_cast<u128>(a.passed) * b.raw > static_cast<u128>(b.passed) * a.raw;
}

bool same_rate(const GroupCount& a, const GroupCount& b) {
    return static_cast<u128>(a.passed) * b.raw == static_cast<u128>(b.passed) * a.raw;
}

std::string flag(bool v) {
    return v ? "1" : "0";
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("report", "cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) {
        throw IoError("report", "write failed for " + path.string());
    }
}

} // namespace

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s = buf;
    if (s == "-0.000000") {
        s = "0.000000";
    }
    return s;
}

Table group_stats_table(const std::string& name, const GroupTally& tally, const GroupCount& overall,
                        std::uint64_t min_support, IntervalMethod method, double confidence) {
    Table t;
    t.name = name;
    t.columns = group_stats_columns();
    t.min_support = min_support;

    struct Entry {
        const GroupKey* key;
        GroupCount count;
        bool suppressed;
    };
    std::vector<Entry> entries;
    for (const auto& [key, count] : tally.groups()) {
        entries.push_back({&key, count, count.raw == 0 || count.raw < min_support});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.key->dimension != b.key->dimension) {
            return a.key->dimension < b.key->dimension;
        }
        if (a.suppressed != b.suppressed) {
            return !a.suppressed;
        }
        if (!a.suppressed && !same_rate(a.count, b.count)) {
            return higher_rate(a.count, b.count);
        }
        return a.key->label < b.key->label;
    });

    for (const auto& e : entries) {
        std::vector<std::string> row{e.key->dimension, e.key->label, std::to_string(e.count.raw),
                                     std::to_string(e.count.passed)};
        if (e.suppressed) {
            ++t.suppressed;
            row.insert(row.end(), {"", "", "", "", "1"});
        } else {
            const auto ci = binomial_interval(e.count.passed, e.count.raw, confidence, method);
            row.push_back(format_real(ci.point));
            row.push_back(format_real(ci.low));
            row.push_back(format_real(ci.high));
            row.push_back(overall.passed > 0 ? format_real(amplification_index(e.count, overall)) : "");
            row.push_back("0");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table intersections_table(std::span<const IntersectionMatrix> matrices, std::uint64_t min_support) {
    Table t;
    t.name = "intersections";
    t.columns = {"label_a", "label_b", "raw", "passed", "pass_rate", "suppressed"};
    t.min_support = min_support;

    std::set<std::pair<std::string, std::string>> seen;
    std::vector<const IntersectionCell*> cells;
    for (const auto& m : matrices) {
        for (const auto& c : m.cells) {
            if (seen.emplace(c.label_a, c.label_b).second) {
                cells.push_back(&c);
            }
        }
    }
    std::stable_sort(cells.begin(), cells.end(), [](const IntersectionCell* a, const IntersectionCell* b) {
        if (a->suppressed != b->suppressed) {
            return !a->suppressed;
        }
        if (!a->suppressed && !same_rate(a->count, b->count)) {
            return higher_rate(a->count, b->count);
        }
        return std::tie(a->label_a, a->label_b) < std::tie(b->label_a, b->label_b);
    });
    for (const auto* c : cells) {
        const auto rate = pass_rate(c->count);
        const bool hidden = c->suppressed || !rate;
        t.suppressed += hidden ? 1 : 0;
        t.rows.push_back({c->label_a, c->label_b, std::to_string(c->count.raw), std::to_string(c->count.passed),
                          hidden ? "" : format_real(*rate), flag(hidden)});
    }
    return t;
}

Table word_gap_table(const WordGapResult& result, std::uint64_t min_count) {
    Table t;
    t.name = "gender_word_gap";
    t.columns = {"direction", "rank",      "word",   "n_any",     "n_woman", "pass_woman",
                 "rate_woman", "n_man", "pass_man", "rate_man", "gap"};
    t.min_support = min_count;
    t.suppressed = result.below_min_count;
    const auto emit = [&](const char* direction, const std::vector<WordGapRow>& rows) {
        std::size_t rank = 0;
        for (const auto& r : rows) {
            const auto& s = r.stats;
            t.rows.push_back({direction, std::to_string(++rank), s.word, std::to_string(s.n_any),
                              std::to_string(s.n_woman), std::to_string(s.pass_woman), format_real(r.rate_woman),
                              std::to_string(s.n_man), std::to_string(s.pass_man), format_real(r.rate_man),
                              format_real(r.gap)});
        }
    };
    emit("woman", result.woman_associated);
    emit("man", result.man_associated);
    return t;
}

Table trend_table(const std::string& name, std::span<const TrendSeries> series, std::uint64_t min_support) {
    Table t;
    t.name = name;
    t.columns = {"series", "n", "slope", "intercept", "p_value"};
    t.min_support = min_support;
    for (const auto& s : series) {
        std::vector<std::string> row{s.series, std::to_string(s.points.size())};
        bool fitted = false;
        if (s.points.size() >= 3) {
            const bool constant_x = std::all_of(s.points.begin(), s.points.end(),
                                                [&](const auto& p) { return p.first == s.points.front().first; });
            if (!constant_x) {
                const auto fit = ols_trend(s.points);
                row.push_back(format_real(fit.slope));
                row.push_back(format_real(fit.intercept));
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.6g", fit.p_value);
                row.push_back(buf);
                fitted = true;
            }
        }
        if (!fitted) {
            row.insert(row.end(), {"", "", ""});
            ++t.suppressed;
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table extrapolation_table(std::span<const ExtrapolationInput> inputs, std::uint64_t pool_size, double confidence) {
    Table t;
    t.name = "nsfw_extrapolation";
    t.columns = {"quantity", "method", "confidence", "successes", "trials", "point",
                 "low",      "high",   "pool_size",  "pool_low",  "pool_high"};
    t.min_support = 1;
    for (const auto& in : inputs) {
        for (const auto method : {IntervalMethod::clopper_pearson, IntervalMethod::normal}) {
            std::vector<std::string> row{in.quantity, to_string(method), format_real(confidence),
                                         std::to_string(in.successes), std::to_string(in.trials)};
            if (in.trials == 0) {
                row.insert(row.end(), {"", "", "", std::to_string(pool_size), "", ""});
                ++t.suppressed;
            } else {
                const auto ci = binomial_interval(in.successes, in.trials, confidence, method);
                const auto pool = extrapolate_pool(ci, pool_size);
                row.insert(row.end(), {format_real(ci.point), format_real(ci.low), format_real(ci.high),
                                       std::to_string(pool_size), std::to_string(pool.low),
                                       std::to_string(pool.high)});
            }
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

void write_table_csv(const Table& table, std::ostream& out) {
    csv::write_row(out, table.columns);
    for (const auto& row : table.rows) {
        csv::write_row(out, row);
    }
}

std::vector<std::filesystem::path> emit_tables(const AuditReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("report", "cannot create " + out_dir.string() + ": " + ec.message());
    }
    std::vector<std::filesystem::path> files;
    nlohmann::ordered_json listing = nlohmann::ordered_json::object();
    for (const auto& [name, table] : report.tables) {
        std::ostringstream ss;
        write_table_csv(table, ss);
        const auto path = out_dir / (name + ".csv");
        write_file(path, ss.str());
        files.push_back(path);
        listing[name] = {{"file", name + ".csv"},
                         {"rows", table.rows.size()},
                         {"min_support", table.min_support},
                         {"suppressed", table.suppressed}};
    }
    auto manifest = report.manifest;
    manifest["tables"] = listing;
    const auto path = out_dir / "manifest.json";
    write_file(path, manifest.dump(2) + "\n");
    files.push_back(path);
    return files;
}

} // namespace poolaudit
