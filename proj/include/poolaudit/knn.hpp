#pragma once

#include "poolaudit/embedding.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace poolaudit {

enum class Attribute { gender, race };

std::string to_string(Attribute attribute);
Attribute parse_attribute(const std::string& name);

struct ReferenceEntry {
    std::string person_id;
    std::uint32_t row = 0;
    std::string gender;
    std::string race;
};

// Labeled reference embeddings (for example, a face database with self-reported
// attributes). Vocabularies are the distinct labels present.
class ReferenceDb {
public:
    ReferenceDb() = default;
    // Throws InvariantError on duplicate person ids, empty labels or a row out of range.
    ReferenceDb(EmbeddingMatrix embeddings, std::vector<ReferenceEntry> entries);

    // `path` is an embedding file; labels come from the sidecar `<path>.csv` with
    // header `person_id,row,gender,race`.
    static ReferenceDb load(const std::filesystem::path& path);

    const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }
    const std::vector<ReferenceEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::set<std::string>& vocabulary(Attribute attribute) const;
    const std::string& label(std::size_t entry, Attribute attribute) const;

    // Copy restricted to the given entry indices.
    ReferenceDb select(std::span<const std::size_t> indices) const;

private:
    EmbeddingMatrix embeddings_;
    std::vector<ReferenceEntry> entries_;
    std::set<std::string> gender_vocab_;
    std::set<std::string> race_vocab_;
};

struct KnnConfig {
    std::size_t k = 7;
    double p = 2.0;  // Minkowski order
    Attribute attribute = Attribute::gender;

    // Throws ConfigError unless 1 <= k <= reference_size and p >= 1.
    void validate(std::size_t reference_size) const;
};

struct Neighbor {
    std::size_t entry = 0;
    double distance = 0;
};

// Exact nearest-neighbor search by linear scan; never approximate.
class KnnIndex {
public:
    // Throws InvariantError on an empty database.
    explicit KnnIndex(ReferenceDb db);

    const ReferenceDb& db() const noexcept { return db_; }
    std::size_t size() const noexcept { return db_.size(); }
    std::size_t dims() const noexcept { return dims_; }

    // k nearest entries under Minkowski-p, ordered by (distance, person_id).
    // Throws InvariantError on a dimension mismatch.
    std::vector<Neighbor> nearest(std::span<const float> query, std::size_t k, double p) const;

private:
    ReferenceDb db_;
    std::size_t dims_ = 0;
    std::vector<float> points_;  // entry-major copy of the referenced rows
};

KnnIndex build_index(ReferenceDb db);

struct GroupScore {
    std::map<std::string, double> distribution;  // each value is votes / k
    std::map<std::string, std::size_t> votes;
    std::string argmax;
    bool unanimous = false;
    std::size_t k = 0;
};

// Uniform votes over the k nearest neighbors. Equal vote counts resolve to the label
// that appears first in (distance, person_id) order.
GroupScore knn_annotate(std::span<const float> query, const KnnIndex& index, const KnnConfig& cfg);

struct UnanimityReport {
    std::vector<std::size_t> kept;  // indices into the input
    std::size_t total = 0;

    double ratio() const { return total == 0 ? 0.0 : static_cast<double>(kept.size()) / static_cast<double>(total); }
};

UnanimityReport unanimity_filter(std::span<const GroupScore> scores);

struct HoldoutSpec {
    std::optional<std::size_t> count;
    double fraction = 0.0;  // used when count is unset
};

struct GroupAccuracy {
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

struct ValidationTable {
    std::size_t holdout = 0;
    GroupAccuracy overall;
    std::map<std::pair<std::string, std::string>, GroupAccuracy> by_group;  // (gender, race)
};

// Seeded split: index on the remainder, classify the held-out entries.
// Throws InvariantError when the holdout is empty, covers the whole database, or
// leaves fewer than k reference entries.
ValidationTable holdout_validate(const ReferenceDb& db, const HoldoutSpec& holdout, std::uint64_t seed,
                                 const KnnConfig& cfg);

struct AgreementStats {
    std::size_t compared = 0;
    std::size_t matches = 0;
    double rate = 0;
    std::map<std::pair<std::string, std::string>, std::size_t> confusion;  // (label a, label b) -> count
};

// Compares labels on the uids present in both maps. Throws InvariantError when the
// key sets do not intersect.
AgreementStats agreement_stats(const std::map<std::string, std::string>& a,
                               const std::map<std::string, std::string>& b);

} // namespace poolaudit
