#include "poolaudit/knn.hpp"

#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/reservoir.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

namespace poolaudit {
namespace {

double power_sum(std::span<const float> a, const float* b, double p) {
    double sum = 0;
    if (p == 1.0) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            sum += std::fabs(static_cast<double>(a[i]) - b[i]);
        }
    } else if (p == 2.0) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            sum += d * d;
        }
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) {
            sum += std::pow(std::fabs(static_cast<double>(a[i]) - b[i]), p);
        }
    }
    return sum;
}

} // namespace

std::string to_string(Attribute attribute) {
    return attribute == Attribute::gender ? "gender" : "race";
}

Attribute parse_attribute(const std::string& name) {
    if (name == "gender") {
        return Attribute::gender;
    }
    if (name == "race") {
        return Attribute::race;
    }
    throw ConfigError("face_knn", "unknown attribute '" + name + "' (expected gender or race)");
}

ReferenceDb::ReferenceDb(EmbeddingMatrix embeddings, std::vector<ReferenceEntry> entries)
    : embeddings_(std::move(embeddings)), entries_(std::move(entries)) {
    std::set<std::string> ids;
    for (const auto& e : entries_) {
        if (!ids.insert(e.person_id).second) {
            throw InvariantError("face_knn", "duplicate person_id '" + e.person_id + "'");
        }
        if (e.row >= embeddings_.rows()) {
            throw InvariantError("face_knn", "reference row " + std::to_string(e.row) + " out of range");
        }
        if (e.gender.empty() || e.race.empty()) {
            throw InvariantError("face_knn", "empty label for person_id '" + e.person_id + "'");
        }
        gender_vocab_.insert(e.gender);
        race_vocab_.insert(e.race);
    }
}

ReferenceDb ReferenceDb::load(const std::filesystem::path& path) {
    EmbeddingMatrix matrix = load_embeddings(path);
    std::filesystem::path sidecar = path;
    sidecar += ".csv";
    std::vector<ReferenceEntry> entries;
    csv::for_each_row(sidecar, [&](const csv::Row& row, std::size_t line_no) {
        if (line_no == 1 && !row.empty() && row[0] == "person_id") {
            return;
        }
        if (row.size() != 4) {
            throw IoError("face_knn", sidecar.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
        }
        ReferenceEntry e;
        e.person_id = row[0];
        const auto [ptr, ec] = std::from_chars(row[1].data(), row[1].data() + row[1].size(), e.row);
        if (ec != std::errc{} || ptr != row[1].data() + row[1].size()) {
            throw IoError("face_knn", sidecar.string() + ":" + std::to_string(line_no) + ": bad row index");
        }
        e.gender = row[2];
        e.race = row[3];
        entries.push_back(std::move(e));
    });
    return ReferenceDb(std::move(matrix), std::move(entries));
}

const std::set<std::string>& ReferenceDb::vocabulary(Attribute attribute) const {
    return attribute == Attribute::gender ? gender_vocab_ : race_vocab_;
}

const std::string& ReferenceDb::label(std::size_t entry, Attribute attribute) const {
    const auto& e = entries_.at(entry);
    return attribute == Attribute::gender ? e.gender : e.race;
}

ReferenceDb ReferenceDb::select(std::span<const std::size_t> indices) const {
    std::vector<ReferenceEntry> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) {
        picked.push_back(entries_.at(i));
    }
    return ReferenceDb(embeddings_, std::move(picked));
}

void KnnConfig::validate(std::size_t reference_size) const {
    if (k < 1 || k > reference_size) {
        throw ConfigError("face_knn", "k must lie in [1, reference size]");
    }
    if (!(p >= 1.0) || !std::isfinite(p)) {
        throw ConfigError("face_knn", "Minkowski order p must be >= 1");
    }
}

KnnIndex::KnnIndex(ReferenceDb db) : db_(std::move(db)) {
    if (db_.size() == 0) {
        throw InvariantError("face_knn", "cannot build an index over an empty reference database");
    }
    dims_ = db_.embeddings().dims();
    points_.reserve(db_.size() * dims_);
    for (const auto& e : db_.entries()) {
        const auto row = db_.embeddings().row(e.row);
        points_.insert(points_.end(), row.begin(), row.end());
    }
}

std::vector<Neighbor> KnnIndex::nearest(std::span<const float> query, std::size_t k, double p) const {
    if (query.size() != dims_) {
        throw InvariantError("face_knn", "query has " + std::to_string(query.size()) + " dims, reference has " +
                                             std::to_string(dims_));
    }
    k = std::min(k, db_.size());
    struct Candidate {
        double sum;
        std::size_t entry;
    };
    std::vector<Candidate> all(db_.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = Candidate{power_sum(query, points_.data() + i * dims_, p), i};
    }
    const auto& entries = db_.entries();
    const auto before = [&](const Candidate& a, const Candidate& b) {
        if (a.sum != b.sum) {
            return a.sum < b.sum;
        }
        return entries[a.entry].person_id < entries[b.entry].person_id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
    std::vector<Neighbor> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double d = p == 1.0 ? all[i].sum : p == 2.0 ? std::sqrt(all[i].sum) : std::pow(all[i].sum, 1.0 / p);
        out.push_back(Neighbor{all[i].entry, d});
    }
    return out;
}

KnnIndex build_index(ReferenceDb db) {
    return KnnIndex(std::move(db));
}

GroupScore knn_annotate(std::span<const float> query, const KnnIndex& index, const KnnConfig& cfg) {
    cfg.validate(index.size());
    const auto neighbors = index.nearest(query, cfg.k, cfg.p);
    GroupScore out;
    out.k = cfg.k;
    std::vector<std::string> first_seen;
    for (const auto& n : neighbors) {
        const auto& label = index.db().label(n.entry, cfg.attribute);
        if (out.votes[label]++ == 0) {
            first_seen.push_back(label);
        }
    }
    std::size_t best = 0;
    for (const auto& label : first_seen) {
        if (out.votes[label] > best) {
            best = out.votes[label];
            out.argmax = label;
        }
    }
    for (const auto& [label, v] : out.votes) {
        out.distribution[label] = static_cast<double>(v) / static_cast<double>(cfg.k);
    }
    out.unanimous = out.votes.size() == 1;
    return out;
}

UnanimityReport unanimity_filter(std::span<const GroupScore> scores) {
    UnanimityReport out;
    out.total = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].unanimous) {
            out.kept.push_back(i);
        }
    }
    return out;
}

ValidationTable holdout_validate(const ReferenceDb& db, const HoldoutSpec& holdout, std::uint64_t seed,
                                 const KnnConfig& cfg) {
    const std::size_t n = db.size();
    const std::size_t count = holdout.count
                                  ? *holdout.count
                                  : static_cast<std::size_t>(std::llround(holdout.fraction * static_cast<double>(n)));
    if (count == 0 || count >= n) {
        throw InvariantError("face_knn", "holdout must be nonempty and smaller than the reference database");
    }
    if (n - count < cfg.k) {
        throw InvariantError("face_knn", "holdout leaves fewer than k reference entries");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    portable_shuffle(order, rng);

    std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
    std::sort(held.begin(), held.end());
    std::sort(train.begin(), train.end());

    const KnnIndex index(db.select(train));
    ValidationTable table;
    table.holdout = count;
    for (std::size_t i : held) {
        const auto& e = db.entries()[i];
        const GroupScore score = knn_annotate(db.embeddings().row(e.row), index, cfg);
        const bool ok = score.argmax == db.label(i, cfg.attribute);
        auto& g = table.by_group[{e.gender, e.race}];
        ++g.n;
        ++table.overall.n;
        if (ok) {
            ++g.correct;
            ++table.overall.correct;
        }
    }
    return table;
}

AgreementStats agreement_stats(const std::map<std::string, std::string>& a,
                               const std::map<std::string, std::string>& b) {
    AgreementStats out;
    for (const auto& [uid, la] : a) {
        const auto it = b.find(uid);
        if (it == b.end()) {
            continue;
        }
        ++out.compared;
        if (la == it->second) {
            ++out.matches;
        }
        ++out.confusion[{la, it->second}];
    }
    if (out.compared == 0) {
        throw InvariantError("face_knn", "nothing to compare: annotation key sets are disjoint");
    }
    out.rate = static_cast<double>(out.matches) / static_cast<double>(out.compared);
    return out;
}

} // namespace poolaudit
