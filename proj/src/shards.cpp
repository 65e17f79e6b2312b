#include "poolaudit/shards.hpp"

#include "poolaudit/error.hpp"

#include <glob.h>

#include <algorithm>

namespace poolaudit {
namespace {

constexpr std::size_t kKeptErrors = 8;

void note_error(StreamTally& tally, const std::filesystem::path& path, std::size_t line_no, const char* what) {
    ++tally.skipped;
    if (tally.first_errors.size() < kKeptErrors) {
        tally.first_errors.push_back(path.string() + ":" + std::to_string(line_no) + ": " + what);
    }
}

template <typename Parsed, typename Parse, typename Visit>
StreamTally read_shard(const std::filesystem::path& shard, Parse parse, const Visit& visit) {
    std::ifstream in(shard, std::ios::binary);
    if (!in) {
        throw IoError("ingest", "cannot read shard " + shard.string());
    }
    StreamTally tally;
    std::string line;
    while (std::getline(in, line)) {
        ++tally.lines;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        Parsed parsed;
        try {
            parsed = parse(line);
        } catch (const RecordError& e) {
            note_error(tally, shard, tally.lines, e.what());
            continue;
        }
        visit(std::move(parsed), tally.records);
        ++tally.records;
    }
    if (in.bad()) {
        throw IoError("ingest", "read failure in shard " + shard.string());
    }
    return tally;
}

} // namespace

void StreamTally::merge(const StreamTally& other) {
    lines += other.lines;
    records += other.records;
    skipped += other.skipped;
    for (const auto& e : other.first_errors) {
        if (first_errors.size() >= kKeptErrors) {
            break;
        }
        first_errors.push_back(e);
    }
}

std::vector<std::filesystem::path> expand_globs(const std::vector<std::string>& patterns) {
    std::vector<std::filesystem::path> out;
    for (const auto& pattern : patterns) {
        glob_t g{};
        const int rc = ::glob(pattern.c_str(), GLOB_NOCHECK, nullptr, &g);
        if (rc != 0 && rc != GLOB_NOMATCH) {
            globfree(&g);
            throw IoError("ingest", "glob failed for '" + pattern + "'");
        }
        std::vector<std::filesystem::path> matched;
        for (std::size_t i = 0; i < g.gl_pathc; ++i) {
            matched.emplace_back(g.gl_pathv[i]);
        }
        globfree(&g);
        std::sort(matched.begin(), matched.end());
        for (auto& p : matched) {
            std::error_code ec;
            if (!std::filesystem::is_regular_file(p, ec)) {
                throw IoError("ingest", "shard not found or not a file: " + p.string());
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

ShardManifest open_manifest(const std::vector<std::string>& shard_globs,
                            const std::vector<std::string>& embedding_paths) {
    ShardManifest manifest;
    manifest.shard_paths = expand_globs(shard_globs);
    for (const auto& e : embedding_paths) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(e, ec)) {
            throw IoError("ingest", "embedding file not found: " + e);
        }
        manifest.embedding_paths.emplace_back(e);
    }
    return manifest;
}

ShardStream::ShardStream(ShardManifest manifest) : manifest_(std::move(manifest)) {}

bool ShardStream::open_next_shard() {
    if (shard_index_ >= manifest_.shard_paths.size()) {
        return false;
    }
    const auto& path = manifest_.shard_paths[shard_index_];
    current_ = std::ifstream(path, std::ios::binary);
    if (!current_) {
        throw IoError("ingest", "cannot read shard " + path.string());
    }
    line_no_ = 0;
    open_ = true;
    return true;
}

std::optional<SampleRecord> ShardStream::next() {
    std::string line;
    for (;;) {
        if (!open_ && !open_next_shard()) {
            return std::nullopt;
        }
        if (!std::getline(current_, line)) {
            if (current_.bad()) {
                throw IoError("ingest", "read failure in shard " + manifest_.shard_paths[shard_index_].string());
            }
            open_ = false;
            ++shard_index_;
            continue;
        }
        ++line_no_;
        ++tally_.lines;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        try {
            SampleRecord rec = parse_record(line);
            ++tally_.records;
            return rec;
        } catch (const RecordError& e) {
            note_error(tally_, manifest_.shard_paths[shard_index_], line_no_, e.what());
        }
    }
}

StreamTally for_each_record(const std::filesystem::path& shard,
                            const std::function<void(SampleRecord&&, std::uint64_t)>& visit) {
    return read_shard<SampleRecord>(shard, [](const std::string& l) { return parse_record(l); }, visit);
}

StreamTally for_each_scored_record(const std::filesystem::path& shard,
                                   const std::function<void(ScoredRecord&&, std::uint64_t)>& visit) {
    return read_shard<ScoredRecord>(shard, [](const std::string& l) { return parse_scored_record(l); }, visit);
}

} // namespace poolaudit
