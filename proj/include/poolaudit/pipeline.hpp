#pragma once

#include "poolaudit/clients.hpp"
#include "poolaudit/config.hpp"
#include "poolaudit/domain.hpp"
#include "poolaudit/embedding.hpp"
#include "poolaudit/ip_geo.hpp"
#include "poolaudit/keyword_stats.hpp"
#include "poolaudit/knn.hpp"
#include "poolaudit/patterns.hpp"
#include "poolaudit/record.hpp"
#include "poolaudit/report.hpp"
#include "poolaudit/shards.hpp"
#include "poolaudit/source_tables.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace poolaudit {

// Everything the annotators read, loaded once and shared by all workers.
struct Resources {
    AuditConfig cfg;

    std::optional<EmbeddingMatrix> embeddings;
    std::optional<EmbeddingMatrix> face_embeddings;

    PatternSet identity;
    PatternSet identity_gender;
    PatternSet identity_race;
    PatternSet identity_religion;
    PatternSet woman;
    PatternSet man;
    std::unordered_set<std::string> stopwords;

    PublicSuffixList psl;
    RegionTable regions;
    CategoryMap categories;
    NewsSiteTable news;
    std::optional<IpRangeDb> ip_db;
    std::optional<OccupationTable> occupations;
    std::optional<KnnIndex> knn;

    std::shared_ptr<ServiceClient> client;

    // Global record ordinals drawn for each subsampled annotator, sorted.
    std::map<std::string, std::vector<std::uint64_t>> subsample;

    // `transport` replaces the live transport (tests inject a failing one).
    static std::unique_ptr<Resources> load(const AuditConfig& cfg, std::shared_ptr<Transport> transport = nullptr);

    // Reservoir draws over ordinals [0, total) for every configured subsample.
    void draw_subsamples(std::uint64_t total);
    bool in_scope(const std::string& annotator, std::uint64_t ordinal) const;
};

struct ServiceLookup {
    std::string service;
    std::string key;
    bool answered = false;
};

struct KnnVote {
    std::string label;
    bool unanimous = false;
};

// Per-record annotations, serializable so stages can run as separate commands.
struct AnnotatedRecord {
    std::string uid;
    std::uint64_t ordinal = 0;
    double score = 0;
    bool passed = false;
    std::map<std::string, std::vector<GroupKey>> groups;  // annotator -> group keys
    bool woman = false;
    bool man = false;
    std::vector<std::string> gap_words;  // set only when woman or man
    std::optional<KnnVote> knn_gender;
    std::optional<KnnVote> knn_race;
    bool multi_face = false;
    std::optional<std::size_t> detected_faces;
    std::optional<std::string> detected_gender;  // single detected face only
    std::optional<bool> categorized;
    std::vector<ServiceLookup> lookups;
};

nlohmann::json to_json(const AnnotatedRecord& a);
// Throws RecordError on a malformed line.
AnnotatedRecord annotated_from_json(std::string_view line);

// Per-worker memo of service answers.
struct LookupCache {
    std::unordered_map<std::string, std::set<std::string>> categories;
    std::unordered_map<std::string, std::optional<std::string>> wayback;
    std::unordered_map<std::string, std::optional<std::uint32_t>> host_ip;
};

AnnotatedRecord annotate_record(const ScoredRecord& scored, std::uint64_t ordinal, const Resources& res,
                                LookupCache& cache);

struct UnanimityCount {
    std::uint64_t kept = 0;
    std::uint64_t total = 0;
};

// Mergeable aggregate of annotated records.
class AuditState {
public:
    explicit AuditState(const Resources& res);

    void add(const AnnotatedRecord& a);
    void merge(const AuditState& other);

    const GroupCount& overall() const noexcept { return overall_; }
    const GroupTally& tally(const std::string& annotator) const;

    AuditReport build_report(const nlohmann::ordered_json& run_info) const;

private:
    const Resources* res_;
    GroupCount overall_;
    std::map<std::string, GroupTally> tallies_;
    IntersectionAccumulator gender_race_;
    IntersectionAccumulator religion_race_;
    WordGapAccumulator words_;
    std::map<std::string, UnanimityCount> unanimity_;
    std::uint64_t multi_face_ = 0;
    std::uint64_t face_requests_ = 0;
    std::uint64_t with_faces_ = 0;
    std::uint64_t single_face_ = 0;
    std::uint64_t categorized_ = 0;
    std::uint64_t category_requests_ = 0;
    std::map<std::string, std::map<std::string, bool>> keyed_lookups_;  // service -> key -> answered
    std::map<std::string, Coverage> per_record_lookups_;
    std::map<std::string, std::string> knn_gender_by_uid_;
    std::map<std::string, std::string> detected_gender_by_uid_;
};

struct FilterPassResult {
    double threshold = 0;
    StreamTally tally;
    std::uint64_t discrepancies = 0;
    std::vector<std::uint64_t> records_per_shard;
};

// Scores every record and resolves the threshold (two-pass histogram for top-fraction).
FilterPassResult filter_pass(const std::vector<std::filesystem::path>& shards, const FilterSpec& spec,
                             const EmbeddingMatrix* embeddings, unsigned workers);

struct AuditRun {
    AuditReport report;
    FilterPassResult filter;
};

// Full pipeline: filter, annotate, aggregate, build the report. Logs stage counts
// to stderr unless cfg.quiet.
AuditRun run_audit(const AuditConfig& cfg, std::shared_ptr<Transport> transport = nullptr);

// Runs the pipeline and writes the report directory.
AuditRun run_audit_to_dir(const AuditConfig& cfg, std::shared_ptr<Transport> transport = nullptr);

// Bundled data versions, for --version and the manifest.
nlohmann::ordered_json data_versions();

// Calls `fn(i)` for i in [0, n) on up to `workers` threads. The first exception is
// rethrown after all threads finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

} // namespace poolaudit
