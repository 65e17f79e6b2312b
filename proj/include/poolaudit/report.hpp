#pragma once

#include "poolaudit/keyword_stats.hpp"
#include "poolaudit/stats.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace poolaudit {

// One CSV table with formatted cells.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::uint64_t min_support = 0;
    std::uint64_t suppressed = 0;
};

struct AuditReport {
    nlohmann::ordered_json manifest;
    std::map<std::string, Table> tables;
};

// Fixed six decimals, so outputs do not depend on stream state.
std::string format_real(double v);

inline const std::vector<std::string>& group_stats_columns() {
    static const std::vector<std::string> cols{"dimension", "label", "raw",     "passed",       "pass_rate",
                                               "ci_low",    "ci_high", "amplification", "suppressed"};
    return cols;
}

// One row per (dimension, label). Groups with raw < min_support keep their counts
// but leave the rate, interval and amplification blank. Amplification is relative
// to `overall`. Rows are ordered by dimension, then shown rows by descending pass
// rate (compared exactly), then label; suppressed rows follow by label.
Table group_stats_table(const std::string& name, const GroupTally& tally, const GroupCount& overall,
                        std::uint64_t min_support, IntervalMethod method = IntervalMethod::clopper_pearson,
                        double confidence = 0.95);

// Cells of several matrices in one table; a margin shared by two matrices (the
// race totals of gender x race and religion x race) appears once.
Table intersections_table(std::span<const IntersectionMatrix> matrices, std::uint64_t min_support);

Table word_gap_table(const WordGapResult& result, std::uint64_t min_count);

struct TrendSeries {
    std::string series;
    std::vector<std::pair<double, double>> points;
};

// slope, intercept and p-value per series; series with fewer than three points or a
// constant x report n and leave the fit blank.
Table trend_table(const std::string& name, std::span<const TrendSeries> series, std::uint64_t min_support);

struct ExtrapolationInput {
    std::string quantity;
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;
};

// Both interval methods per quantity, scaled to `pool_size`.
Table extrapolation_table(std::span<const ExtrapolationInput> inputs, std::uint64_t pool_size, double confidence = 0.95);

// Writes `<name>.csv` for every table plus manifest.json. Creates out_dir. Throws
// IoError on any write failure.
std::vector<std::filesystem::path> emit_tables(const AuditReport& report, const std::filesystem::path& out_dir);

void write_table_csv(const Table& table, std::ostream& out);

} // namespace poolaudit
