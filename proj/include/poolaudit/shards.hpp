#pragma once

#include "poolaudit/record.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace poolaudit {

struct ShardManifest {
    std::vector<std::filesystem::path> shard_paths;
    std::optional<std::uint64_t> record_count_hint;
    std::vector<std::filesystem::path> embedding_paths;
};

// Expands shell-style globs (sorted per pattern, pattern order kept) and checks
// that every resulting path is a readable file. Throws IoError otherwise.
std::vector<std::filesystem::path> expand_globs(const std::vector<std::string>& patterns);

ShardManifest open_manifest(const std::vector<std::string>& shard_globs,
                            const std::vector<std::string>& embedding_paths);

struct StreamTally {
    std::uint64_t lines = 0;
    std::uint64_t records = 0;
    std::uint64_t skipped = 0;
    std::vector<std::string> first_errors;  // at most a handful, "path:line: message"

    void merge(const StreamTally& other);
};

// Pull-style reader over every shard of a manifest, in shard order.
class ShardStream {
public:
    explicit ShardStream(ShardManifest manifest);

    // Next parseable record, or nullopt when all shards are exhausted.
    // Throws IoError when a shard cannot be opened.
    std::optional<SampleRecord> next();

    const StreamTally& tally() const noexcept { return tally_; }

private:
    bool open_next_shard();

    ShardManifest manifest_;
    std::size_t shard_index_ = 0;
    std::size_t line_no_ = 0;
    std::ifstream current_;
    bool open_ = false;
    StreamTally tally_;
};

// Reads one shard, calling `visit(record, ordinal)` for every parseable line where
// ordinal counts yielded records within the shard.
StreamTally for_each_record(const std::filesystem::path& shard,
                            const std::function<void(SampleRecord&&, std::uint64_t)>& visit);

// Same as for_each_record for shards that already carry `score`/`passed`.
StreamTally for_each_scored_record(const std::filesystem::path& shard,
                                   const std::function<void(ScoredRecord&&, std::uint64_t)>& visit);

} // namespace poolaudit
