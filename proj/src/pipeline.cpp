#include "poolaudit/pipeline.hpp"

#include "poolaudit/error.hpp"
#include "poolaudit/filter.hpp"
#include "poolaudit/reservoir.hpp"
#include "poolaudit/url.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

namespace poolaudit {
namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

void log_stage(const AuditConfig& cfg, const std::string& line) {
    if (!cfg.quiet) {
        std::clog << "poolaudit: " << line << '\n';
    }
}

EmbeddingMatrix load_all(const std::vector<std::filesystem::path>& paths) {
    std::vector<EmbeddingMatrix> parts;
    for (const auto& p : paths) {
        parts.push_back(load_embeddings(p));
    }
    return parts.size() == 1 ? std::move(parts.front()) : concatenate(parts);
}

const PatternSet& named_set(const std::vector<PatternSet>& sets, const std::string& name,
                            const std::filesystem::path& path) {
    for (const auto& s : sets) {
        if (s.name() == name) {
            return s;
        }
    }
    throw ConfigError("text_annot", path.string() + ": no pattern set named '" + name + "'");
}

std::string region_label(bool western) {
    return western ? "western" : "non_western";
}

std::string to_upper_ascii(std::string s) {
    for (auto& c : s) {
        if (c >= 'a' && c <= 'z') {
            c = static_cast<char>(c - 'a' + 'A');
        }
    }
    return s;
}

ojson coverage_json(const Coverage& c) {
    return ojson{{"requests", c.requests}, {"answered", c.answered}, {"rate", c.rate()}};
}

} // namespace

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                    next.store(n);
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

ojson data_versions() {
    std::ifstream in(bundled_data_dir() / "data_versions.json");
    if (!in) {
        return ojson::object();
    }
    try {
        return ojson::parse(in);
    } catch (const json::exception&) {
        return ojson::object();
    }
}

std::unique_ptr<Resources> Resources::load(const AuditConfig& cfg, std::shared_ptr<Transport> transport) {
    auto r = std::make_unique<Resources>();
    r->cfg = cfg;
    if (!cfg.embeddings.empty()) {
        r->embeddings = load_all(cfg.embeddings);
    }
    if (!cfg.face_embeddings.empty()) {
        r->face_embeddings = load_all(cfg.face_embeddings);
    }

    r->identity = load_pattern_set(cfg.identity_patterns);
    r->identity_gender = r->identity.subset("gender");
    r->identity_race = r->identity.subset("race");
    r->identity_religion = r->identity.subset("religion");
    const auto gender_sets = load_pattern_sets(cfg.gender_patterns);
    r->woman = named_set(gender_sets, "woman", cfg.gender_patterns);
    r->man = named_set(gender_sets, "man", cfg.gender_patterns);
    r->stopwords = load_stopwords(cfg.stopwords);

    r->psl = cfg.naive_suffixes ? PublicSuffixList::naive() : PublicSuffixList::load(cfg.public_suffix_list);
    r->regions = RegionTable::load(cfg.regions);
    r->categories = CategoryMap::load(cfg.category_map);
    r->news = NewsSiteTable::load(cfg.news_sites);

    if (cfg.enabled(annotator::ip_country)) {
        r->ip_db = IpRangeDb::load(*cfg.ip_db);
    }
    if (cfg.enabled(annotator::occupations)) {
        r->occupations = OccupationTable::load(*cfg.occupations);
    }
    if (cfg.enabled(annotator::face_knn_race)) {
        auto db = ReferenceDb::load(*cfg.reference_db);
        KnnConfig{cfg.knn.k_gender, cfg.knn.p, Attribute::gender}.validate(db.size());
        KnnConfig{cfg.knn.k_race, cfg.knn.p, Attribute::race}.validate(db.size());
        r->knn.emplace(build_index(std::move(db)));
    }
    if (cfg.fixture_dir || cfg.fetch_mode == FetchMode::live) {
        auto store = cfg.fixture_dir ? std::make_shared<FixtureStore>(*cfg.fixture_dir) : nullptr;
        r->client = std::make_shared<ServiceClient>(cfg.fetch_mode, std::move(store), std::move(transport));
    }
    return r;
}

void Resources::draw_subsamples(std::uint64_t total) {
    subsample.clear();
    for (const auto& [name, k] : cfg.subsample) {
        std::uint64_t next = 0;
        auto drawn = reservoir_sample(
            [&]() -> std::optional<std::uint64_t> {
                if (next == total) {
                    return std::nullopt;
                }
                return next++;
            },
            static_cast<std::size_t>(k), cfg.seed);
        std::sort(drawn.begin(), drawn.end());
        subsample[name] = std::move(drawn);
    }
}

bool Resources::in_scope(const std::string& annotator, std::uint64_t ordinal) const {
    if (!cfg.enabled(annotator)) {
        return false;
    }
    const auto it = subsample.find(annotator);
    if (it == subsample.end()) {
        return true;
    }
    return std::binary_search(it->second.begin(), it->second.end(), ordinal);
}

json to_json(const AnnotatedRecord& a) {
    json groups = json::object();
    for (const auto& [name, keys] : a.groups) {
        json arr = json::array();
        for (const auto& k : keys) {
            arr.push_back({k.dimension, k.label});
        }
        groups[name] = std::move(arr);
    }
    json j{{"uid", a.uid}, {"ordinal", a.ordinal}, {"score", a.score}, {"passed", a.passed}, {"groups", groups}};
    if (a.woman || a.man) {
        j["woman"] = a.woman;
        j["man"] = a.man;
        j["gap_words"] = a.gap_words;
    }
    const auto vote = [](const KnnVote& v) { return json{{"label", v.label}, {"unanimous", v.unanimous}}; };
    if (a.knn_gender) {
        j["knn_gender"] = vote(*a.knn_gender);
    }
    if (a.knn_race) {
        j["knn_race"] = vote(*a.knn_race);
    }
    if (a.multi_face) {
        j["multi_face"] = true;
    }
    if (a.detected_faces) {
        j["detected_faces"] = *a.detected_faces;
    }
    if (a.detected_gender) {
        j["detected_gender"] = *a.detected_gender;
    }
    if (a.categorized) {
        j["categorized"] = *a.categorized;
    }
    if (!a.lookups.empty()) {
        json arr = json::array();
        for (const auto& l : a.lookups) {
            arr.push_back({l.service, l.key, l.answered});
        }
        j["lookups"] = std::move(arr);
    }
    return j;
}

AnnotatedRecord annotated_from_json(std::string_view line) {
    try {
        const json j = json::parse(line);
        AnnotatedRecord a;
        a.uid = j.at("uid").get<std::string>();
        a.ordinal = j.at("ordinal").get<std::uint64_t>();
        a.score = j.at("score").get<double>();
        a.passed = j.at("passed").get<bool>();
        for (const auto& [name, arr] : j.at("groups").items()) {
            auto& keys = a.groups[name];
            for (const auto& k : arr) {
                keys.push_back({k.at(0).get<std::string>(), k.at(1).get<std::string>()});
            }
        }
        a.woman = j.value("woman", false);
        a.man = j.value("man", false);
        if (j.contains("gap_words")) {
            a.gap_words = j["gap_words"].get<std::vector<std::string>>();
        }
        const auto vote = [](const json& v) {
            return KnnVote{v.at("label").get<std::string>(), v.at("unanimous").get<bool>()};
        };
        if (j.contains("knn_gender")) {
            a.knn_gender = vote(j["knn_gender"]);
        }
        if (j.contains("knn_race")) {
            a.knn_race = vote(j["knn_race"]);
        }
        a.multi_face = j.value("multi_face", false);
        if (j.contains("detected_faces")) {
            a.detected_faces = j["detected_faces"].get<std::size_t>();
        }
        if (j.contains("detected_gender")) {
            a.detected_gender = j["detected_gender"].get<std::string>();
        }
        if (j.contains("categorized")) {
            a.categorized = j["categorized"].get<bool>();
        }
        if (j.contains("lookups")) {
            for (const auto& l : j["lookups"]) {
                a.lookups.push_back({l.at(0).get<std::string>(), l.at(1).get<std::string>(), l.at(2).get<bool>()});
            }
        }
        return a;
    } catch (const json::exception& e) {
        throw RecordError(std::string("malformed annotated record: ") + e.what());
    }
}

AnnotatedRecord annotate_record(const ScoredRecord& scored, std::uint64_t ordinal, const Resources& res,
                                LookupCache& cache) {
    const auto& rec = scored.record;
    const auto& cfg = res.cfg;
    AnnotatedRecord a;
    a.uid = rec.uid;
    a.ordinal = ordinal;
    a.score = scored.score;
    a.passed = scored.passed;

    const std::string lowered = lowercase_text(rec.text);

    if (res.in_scope(annotator::identity_keywords, ordinal) || res.in_scope(annotator::intersections, ordinal)) {
        auto& keys = a.groups[annotator::identity_keywords];
        for (std::size_t i : match_indices(lowered, res.identity)) {
            const auto& p = res.identity.patterns()[i];
            keys.push_back({p.dimension, p.label});
        }
    }
    if (res.in_scope(annotator::gender_word_gap, ordinal)) {
        a.woman = !match_indices(lowered, res.woman).empty();
        a.man = !match_indices(lowered, res.man).empty();
        if (a.woman || a.man) {
            auto tokens = unique_tokens(lowered);
            std::erase_if(tokens, [&](const std::string& t) { return res.stopwords.count(t) != 0; });
            a.gap_words = std::move(tokens);
        }
    }
    if (res.in_scope(annotator::languages, ordinal) && rec.language && !rec.language->empty()) {
        a.groups[annotator::languages].push_back({"language", to_lower_ascii(*rec.language)});
    }
    if (res.in_scope(annotator::occupations, ordinal)) {
        auto& keys = a.groups[annotator::occupations];
        for (std::size_t i : match_indices(lowered, res.occupations->patterns())) {
            keys.push_back({"occupation", res.occupations->patterns().patterns()[i].label});
        }
    }

    const bool wants_domain = res.in_scope(annotator::cctld, ordinal) || res.in_scope(annotator::websites, ordinal) ||
                              res.in_scope(annotator::news_sites, ordinal) ||
                              res.in_scope(annotator::categories, ordinal) ||
                              res.in_scope(annotator::ip_country, ordinal);
    if (wants_domain) {
        const DomainInfo dom = extract_base_domain(rec.url, res.psl, &res.regions);
        if (res.in_scope(annotator::cctld, ordinal) && dom.cctld) {
            auto& keys = a.groups[annotator::cctld];
            keys.push_back({"cctld", to_upper_ascii(*dom.cctld)});
            if (dom.western) {
                keys.push_back({"region", region_label(*dom.western)});
            }
        }
        if (res.in_scope(annotator::websites, ordinal)) {
            a.groups[annotator::websites].push_back({"website", dom.registered});
        }
        if (res.in_scope(annotator::news_sites, ordinal)) {
            if (auto site = match_news_site(dom, res.news)) {
                a.groups[annotator::news_sites].push_back({site->country, site->name});
            }
        }
        if (res.in_scope(annotator::categories, ordinal)) {
            auto it = cache.categories.find(dom.registered);
            if (it == cache.categories.end()) {
                it = cache.categories.emplace(dom.registered, fetch_domain_categories(*res.client, dom.registered)).first;
            }
            a.lookups.push_back({service::categories, dom.registered, !it->second.empty()});
            a.categorized = !it->second.empty();
            auto& keys = a.groups[annotator::categories];
            for (const auto& name : map_categories(it->second, res.categories)) {
                keys.push_back({"category", name});
            }
        }
        if (res.in_scope(annotator::ip_country, ordinal)) {
            std::optional<std::uint32_t> ip = parse_ipv4(dom.host);
            if (!ip) {
                auto it = cache.host_ip.find(dom.host);
                if (it == cache.host_ip.end()) {
                    const auto ips = resolve_host(*res.client, dom.host);
                    std::optional<std::uint32_t> first;
                    if (!ips.empty()) {
                        first = *std::min_element(ips.begin(), ips.end());
                    }
                    it = cache.host_ip.emplace(dom.host, first).first;
                }
                a.lookups.push_back({service::dns, RequestKey::dns(dom.host).canonical, it->second.has_value()});
                ip = it->second;
            }
            if (ip) {
                if (auto cc = res.ip_db->country(*ip)) {
                    auto& keys = a.groups[annotator::ip_country];
                    const std::string code = to_upper_ascii(*cc);
                    keys.push_back({"ip_country", code});
                    if (auto western = res.regions.western(code)) {
                        keys.push_back({"region", region_label(*western)});
                    }
                }
            }
        }
    }

    if (res.in_scope(annotator::years, ordinal)) {
        const std::string key = RequestKey::wayback(rec.url).canonical;
        auto it = cache.wayback.find(key);
        if (it == cache.wayback.end()) {
            it = cache.wayback.emplace(key, fetch_wayback_first(*res.client, rec.url)).first;
        }
        a.lookups.push_back({service::wayback, key, it->second.has_value()});
        if (it->second) {
            a.groups[annotator::years].push_back({"year", std::to_string(earliest_index_year(*it->second))});
        }
    }

    if (rec.face_boxes && res.in_scope(annotator::face_gender_age, ordinal)) {
        const auto faces = fetch_face_attributes(*res.client, rec.uid);
        a.lookups.push_back({service::faces, rec.uid, !faces.empty()});
        a.detected_faces = faces.size();
        if (faces.size() == 1) {
            const auto& f = faces.front();
            const std::string bucket = age_decade_bucket(f.age_low, f.age_high);
            auto& keys = a.groups[annotator::face_gender_age];
            keys.push_back({"gender", f.gender});
            keys.push_back({"age", bucket});
            keys.push_back({"gender_age", f.gender + " " + bucket});
            a.detected_gender = f.gender;
        }
    }

    if (rec.face_boxes && res.in_scope(annotator::face_knn_race, ordinal)) {
        if (rec.face_boxes->size() > 1) {
            a.multi_face = true;
        } else if (rec.face_boxes->size() == 1 && rec.face_boxes->front().embedding) {
            const auto query = res.face_embeddings->row(*rec.face_boxes->front().embedding);
            const auto g = knn_annotate(query, *res.knn, KnnConfig{cfg.knn.k_gender, cfg.knn.p, Attribute::gender});
            const auto r = knn_annotate(query, *res.knn, KnnConfig{cfg.knn.k_race, cfg.knn.p, Attribute::race});
            a.knn_gender = KnnVote{g.argmax, g.unanimous};
            a.knn_race = KnnVote{r.argmax, r.unanimous};
            const bool keep_g = g.unanimous || !cfg.knn.unanimous_only;
            const bool keep_r = r.unanimous || !cfg.knn.unanimous_only;
            auto& keys = a.groups[annotator::face_knn_race];
            if (keep_g) {
                keys.push_back({"knn_gender", g.argmax});
            }
            if (keep_r) {
                keys.push_back({"knn_race", r.argmax});
            }
            if (keep_g && keep_r) {
                keys.push_back({"knn_gender_race", g.argmax + " " + r.argmax});
            }
        }
    }
    return a;
}

AuditState::AuditState(const Resources& res)
    : res_(&res),
      gender_race_(res.identity_gender, res.identity_race),
      religion_race_(res.identity_religion, res.identity_race),
      words_(res.woman, res.man, res.stopwords) {}

const GroupTally& AuditState::tally(const std::string& annotator) const {
    static const GroupTally empty;
    const auto it = tallies_.find(annotator);
    return it == tallies_.end() ? empty : it->second;
}

void AuditState::add(const AnnotatedRecord& a) {
    overall_.add(a.passed);
    for (const auto& [name, keys] : a.groups) {
        auto& t = tallies_[name];
        for (const auto& k : keys) {
            t.add(k.dimension, k.label, a.passed);
        }
    }
    if (res_->cfg.enabled(annotator::intersections)) {
        static const std::vector<GroupKey> none;
        const auto it = a.groups.find(annotator::identity_keywords);
        const auto& keys = it == a.groups.end() ? none : it->second;
        const auto hits = [&](const PatternSet& set) {
            std::vector<std::size_t> out;
            for (const auto& k : keys) {
                for (std::size_t i = 0; i < set.size(); ++i) {
                    if (set.patterns()[i].label == k.label && set.patterns()[i].dimension == k.dimension) {
                        out.push_back(i);
                    }
                }
            }
            return out;
        };
        const auto race = hits(res_->identity_race);
        gender_race_.add(hits(res_->identity_gender), race, a.passed);
        religion_race_.add(hits(res_->identity_religion), race, a.passed);
    }
    if (a.woman || a.man) {
        words_.add_tokens(a.gap_words, a.woman, a.man, a.passed);
    }
    const auto count_vote = [&](const char* attr, const std::optional<KnnVote>& v) {
        if (v) {
            auto& u = unanimity_[attr];
            ++u.total;
            u.kept += v->unanimous ? 1 : 0;
        }
    };
    count_vote("gender", a.knn_gender);
    count_vote("race", a.knn_race);
    if (a.knn_gender && a.knn_gender->unanimous) {
        knn_gender_by_uid_[a.uid] = a.knn_gender->label;
    }
    multi_face_ += a.multi_face ? 1 : 0;
    if (a.detected_faces) {
        ++face_requests_;
        with_faces_ += *a.detected_faces > 0 ? 1 : 0;
        single_face_ += *a.detected_faces == 1 ? 1 : 0;
    }
    if (a.detected_gender) {
        detected_gender_by_uid_[a.uid] = *a.detected_gender;
    }
    if (a.categorized) {
        ++category_requests_;
        categorized_ += *a.categorized ? 1 : 0;
    }
    for (const auto& l : a.lookups) {
        if (l.service == service::categories || l.service == service::dns) {
            bool& answered = keyed_lookups_[l.service][l.key];
            answered = answered || l.answered;
        } else {
            auto& c = per_record_lookups_[l.service];
            ++c.requests;
            c.answered += l.answered ? 1 : 0;
        }
    }
}

void AuditState::merge(const AuditState& other) {
    overall_.merge(other.overall_);
    for (const auto& [name, t] : other.tallies_) {
        tallies_[name].merge(t);
    }
    gender_race_.merge(other.gender_race_);
    religion_race_.merge(other.religion_race_);
    words_.merge(other.words_);
    for (const auto& [attr, u] : other.unanimity_) {
        unanimity_[attr].kept += u.kept;
        unanimity_[attr].total += u.total;
    }
    multi_face_ += other.multi_face_;
    face_requests_ += other.face_requests_;
    with_faces_ += other.with_faces_;
    single_face_ += other.single_face_;
    categorized_ += other.categorized_;
    category_requests_ += other.category_requests_;
    for (const auto& [svc, keys] : other.keyed_lookups_) {
        for (const auto& [key, answered] : keys) {
            bool& mine = keyed_lookups_[svc][key];
            mine = mine || answered;
        }
    }
    for (const auto& [svc, c] : other.per_record_lookups_) {
        per_record_lookups_[svc].merge(c);
    }
    knn_gender_by_uid_.insert(other.knn_gender_by_uid_.begin(), other.knn_gender_by_uid_.end());
    detected_gender_by_uid_.insert(other.detected_gender_by_uid_.begin(), other.detected_gender_by_uid_.end());
}

AuditReport AuditState::build_report(const ojson& run_info) const {
    const auto& cfg = res_->cfg;
    const auto& ms = cfg.min_support;
    AuditReport report;
    const auto stats_table = [&](const std::string& name, const GroupTally& t, std::uint64_t min_support) {
        report.tables[name] = group_stats_table(name, t, overall_, min_support, cfg.interval);
    };
    const auto rate_points = [&](const GroupTally& t, const std::string& dimension, std::uint64_t min_support,
                                 const std::function<std::optional<double>(const std::string&, const GroupCount&)>& x) {
        std::vector<std::pair<double, double>> points;
        for (const auto& [key, count] : t.groups()) {
            if (key.dimension != dimension || count.raw < min_support || count.raw == 0) {
                continue;
            }
            if (auto xv = x(key.label, count)) {
                points.emplace_back(*xv, *pass_rate(count));
            }
        }
        return points;
    };

    if (cfg.enabled(annotator::identity_keywords)) {
        GroupTally shown;
        for (const auto& [key, count] : tally(annotator::identity_keywords).groups()) {
            const auto& pats = res_->identity.patterns();
            const auto it = std::find_if(pats.begin(), pats.end(), [&](const KeywordPattern& p) {
                return p.label == key.label && p.dimension == key.dimension;
            });
            if (cfg.include_excluded_labels || it == pats.end() || !it->excluded_from_reports) {
                shown.add(key, count);
            }
        }
        stats_table(annotator::identity_keywords, shown, ms.identity_keywords);
    }
    if (cfg.enabled(annotator::intersections)) {
        const std::vector<IntersectionMatrix> matrices{
            gender_race_.matrix(ms.intersections, cfg.include_excluded_labels),
            religion_race_.matrix(ms.intersections, cfg.include_excluded_labels)};
        report.tables[annotator::intersections] = intersections_table(matrices, ms.intersections);
    }
    if (cfg.enabled(annotator::gender_word_gap)) {
        report.tables[annotator::gender_word_gap] =
            word_gap_table(words_.result(ms.common_words, cfg.top_k_words), ms.common_words);
    }
    if (cfg.enabled(annotator::face_gender_age)) {
        stats_table(annotator::face_gender_age, tally(annotator::face_gender_age), ms.face);
    }
    if (cfg.enabled(annotator::face_knn_race)) {
        stats_table(annotator::face_knn_race, tally(annotator::face_knn_race), ms.face);
        if (cfg.knn.holdout_count || cfg.knn.holdout_fraction > 0.0) {
            Table t;
            t.name = "knn_validation";
            t.columns = {"attribute", "gender", "race", "n", "correct", "accuracy"};
            t.min_support = 1;
            const HoldoutSpec spec{cfg.knn.holdout_count, cfg.knn.holdout_fraction};
            for (const auto& [attr, k] : {std::pair{Attribute::gender, cfg.knn.k_gender},
                                          std::pair{Attribute::race, cfg.knn.k_race}}) {
                const auto v = holdout_validate(res_->knn->db(), spec, cfg.seed, KnnConfig{k, cfg.knn.p, attr});
                t.rows.push_back({to_string(attr), "all", "all", std::to_string(v.overall.n),
                                  std::to_string(v.overall.correct), format_real(v.overall.accuracy())});
                for (const auto& [group, acc] : v.by_group) {
                    t.rows.push_back({to_string(attr), group.first, group.second, std::to_string(acc.n),
                                      std::to_string(acc.correct), format_real(acc.accuracy())});
                }
            }
            report.tables[t.name] = t;
        }
    }
    if (cfg.enabled(annotator::languages)) {
        const auto& t = tally(annotator::languages);
        stats_table(annotator::languages, t, ms.languages);
        const std::vector<TrendSeries> series{
            {"log10_raw_vs_pass_rate",
             rate_points(t, "language", ms.language_trend,
                         [](const std::string&, const GroupCount& c) { return std::log10(static_cast<double>(c.raw)); })}};
        report.tables["language_trend"] = trend_table("language_trend", series, ms.language_trend);
    }
    if (cfg.enabled(annotator::cctld)) {
        stats_table(annotator::cctld, tally(annotator::cctld), ms.cctld);
    }
    if (cfg.enabled(annotator::ip_country)) {
        stats_table(annotator::ip_country, tally(annotator::ip_country), ms.ip_country);
    }
    if (cfg.enabled(annotator::websites)) {
        stats_table(annotator::websites, tally(annotator::websites), ms.websites);
    }
    if (cfg.enabled(annotator::news_sites)) {
        stats_table(annotator::news_sites, tally(annotator::news_sites), ms.news_sites);
    }
    if (cfg.enabled(annotator::categories)) {
        const auto& t = tally(annotator::categories);
        stats_table(annotator::categories, t, ms.categories);
        const GroupCount nsfw = t.get("category", cfg.nsfw_category);
        const std::vector<ExtrapolationInput> inputs{{"in_category", nsfw.raw, categorized_},
                                                     {"in_category_and_passed", nsfw.passed, categorized_}};
        auto table = extrapolation_table(inputs, cfg.pool_size);
        report.tables[table.name] = std::move(table);
    }
    if (cfg.enabled(annotator::years)) {
        const auto& t = tally(annotator::years);
        stats_table(annotator::years, t, ms.years);
        const std::vector<TrendSeries> series{
            {"year_vs_pass_rate", rate_points(t, "year", ms.years, [](const std::string& label, const GroupCount&) {
                 return std::optional<double>(std::stod(label));
             })}};
        report.tables["year_trend"] = trend_table("year_trend", series, ms.years);
    }
    if (cfg.enabled(annotator::occupations)) {
        const auto& t = tally(annotator::occupations);
        stats_table(annotator::occupations, t, ms.occupations);
        std::map<std::string, const Occupation*> by_title;
        for (const auto& o : res_->occupations->occupations()) {
            by_title[o.title] = &o;
        }
        const auto attr = [&](double Occupation::*member) {
            return [&, member](const std::string& label, const GroupCount&) -> std::optional<double> {
                const auto it = by_title.find(label);
                return it == by_title.end() ? std::nullopt : std::optional<double>(it->second->*member);
            };
        };
        const std::vector<TrendSeries> series{
            {"salary_vs_pass_rate", rate_points(t, "occupation", ms.occupations, attr(&Occupation::salary))},
            {"prestige_vs_pass_rate", rate_points(t, "occupation", ms.occupations, attr(&Occupation::prestige))}};
        report.tables["occupation_trend"] = trend_table("occupation_trend", series, ms.occupations);
    }

    // Manifest.
    const auto full = config_to_json(cfg);
    ojson m;
    m["tool"] = {{"name", "poolaudit"}, {"version", POOLAUDIT_VERSION}};
    m["data_versions"] = data_versions();
    m["config_hash"] = config_hash(cfg);
    for (const auto& [k, v] : run_info.items()) {
        m[k] = v;
    }
    m["overall"] = {{"raw", overall_.raw},
                    {"passed", overall_.passed},
                    {"pass_rate", pass_rate(overall_) ? ojson(*pass_rate(overall_)) : ojson(nullptr)}};
    m["annotators"] = full["annotators"];
    m["min_support"] = full["min_support"];
    ojson sub = ojson::object();
    for (const auto& [name, k] : cfg.subsample) {
        const auto it = res_->subsample.find(name);
        sub[name] = {{"requested", k}, {"drawn", it == res_->subsample.end() ? 0 : it->second.size()}};
    }
    m["seeds"] = {{"subsample", cfg.seed}, {"holdout", cfg.seed}};
    m["subsample"] = sub;
    m["interval_method"] = to_string(cfg.interval);
    const bool offline = cfg.fetch_mode == FetchMode::replay;
    m["network"] = offline ? "offline" : "online";
    m["fetch_mode"] = to_string(cfg.fetch_mode);
    m["fixture_store_hash"] =
        res_->client && res_->client->store() ? ojson(res_->client->store()->content_hash()) : ojson(nullptr);
    if (cfg.enabled(annotator::ip_country)) {
        m["resolver_origin"] = offline ? "recorded fixtures" : "local system resolver";
        m["ip_db_skipped_ipv6_rows"] = res_->ip_db->skipped_ipv6();
    }
    m["public_suffix_list"] = res_->psl.is_naive() ? "naive last-label" : res_->psl.version();

    ojson coverage = ojson::object();
    for (const auto& [svc, keys] : keyed_lookups_) {
        Coverage c;
        for (const auto& [key, answered] : keys) {
            ++c.requests;
            c.answered += answered ? 1 : 0;
        }
        coverage[svc] = coverage_json(c);
        coverage[svc]["unit"] = svc == service::dns ? "host" : "domain";
    }
    for (const auto& [svc, c] : per_record_lookups_) {
        coverage[svc] = coverage_json(c);
        coverage[svc]["unit"] = "record";
    }
    m["coverage"] = coverage;
    if (cfg.enabled(annotator::categories)) {
        m["categorized_samples"] = {{"requests", category_requests_}, {"categorized", categorized_}};
    }
    if (cfg.enabled(annotator::face_gender_age)) {
        m["faces"] = {{"records_queried", face_requests_}, {"with_faces", with_faces_}, {"single_face", single_face_}};
    }
    if (cfg.enabled(annotator::face_knn_race)) {
        ojson un = ojson::object();
        for (const auto& [attr, u] : unanimity_) {
            un[attr] = {{"kept", u.kept},
                        {"total", u.total},
                        {"ratio", u.total ? static_cast<double>(u.kept) / static_cast<double>(u.total) : 0.0}};
        }
        ojson knn{{"k_gender", cfg.knn.k_gender},
                  {"k_race", cfg.knn.k_race},
                  {"p", cfg.knn.p},
                  {"reference_size", res_->knn->size()},
                  {"multi_face_skipped", multi_face_},
                  {"unanimity", un}};
        std::map<std::string, std::string> a;
        std::map<std::string, std::string> b;
        for (const auto& [uid, label] : knn_gender_by_uid_) {
            if (detected_gender_by_uid_.count(uid)) {
                a[uid] = to_lower_ascii(label);
                b[uid] = to_lower_ascii(detected_gender_by_uid_.at(uid));
            }
        }
        if (!a.empty()) {
            const auto ag = agreement_stats(a, b);
            ojson confusion = ojson::array();
            for (const auto& [pair, n] : ag.confusion) {
                confusion.push_back({{"knn", pair.first}, {"detected", pair.second}, {"count", n}});
            }
            knn["agreement_with_detected_gender"] = {
                {"compared", ag.compared}, {"matches", ag.matches}, {"rate", ag.rate}, {"confusion", confusion}};
        } else {
            knn["agreement_with_detected_gender"] = nullptr;
        }
        m["knn"] = knn;
    }
    report.manifest = std::move(m);
    return report;
}

FilterPassResult filter_pass(const std::vector<std::filesystem::path>& shards, const FilterSpec& spec,
                             const EmbeddingMatrix* embeddings, unsigned workers) {
    spec.validate();
    FilterPassResult out;
    out.records_per_shard.assign(shards.size(), 0);
    std::vector<StreamTally> tallies(shards.size());
    std::atomic<std::uint64_t> discrepancies{0};
    const bool top = spec.mode == FilterSpec::Mode::top_fraction;

    ScoreHistogram histogram;
    std::mutex merge_mutex;
    parallel_for(shards.size(), workers, [&](std::size_t i) {
        std::optional<ScoreHistogram> local;
        if (top) {
            local.emplace();
        }
        std::uint64_t disc = 0;
        tallies[i] = for_each_record(shards[i], [&](SampleRecord&& rec, std::uint64_t) {
            const auto s = score_record(rec, embeddings);
            disc += s.discrepancy ? 1 : 0;
            if (local) {
                local->add(s.score);
            }
        });
        out.records_per_shard[i] = tallies[i].records;
        discrepancies += disc;
        if (local) {
            std::lock_guard lock(merge_mutex);
            histogram.merge(*local);
        }
    });
    for (const auto& t : tallies) {
        out.tally.merge(t);
    }
    out.discrepancies = discrepancies.load();

    if (!top) {
        out.threshold = spec.value;
        return out;
    }
    const BoundaryBucket boundary = locate_boundary(histogram, spec.value);
    BoundaryCollector collector(boundary);
    parallel_for(shards.size(), workers, [&](std::size_t i) {
        BoundaryCollector local(boundary);
        for_each_record(shards[i], [&](SampleRecord&& rec, std::uint64_t) {
            local.add(score_record(rec, embeddings).score);
        });
        std::lock_guard lock(merge_mutex);
        collector.merge(local);
    });
    out.threshold = collector.threshold();
    return out;
}

AuditRun run_audit(const AuditConfig& cfg, std::shared_ptr<Transport> transport) {
    auto res = Resources::load(cfg, std::move(transport));
    const auto shards = expand_globs(cfg.shards);
    const unsigned workers = cfg.worker_count();
    const EmbeddingMatrix* emb = res->embeddings ? &*res->embeddings : nullptr;

    AuditRun run;
    run.filter = filter_pass(shards, cfg.filter, emb, workers);
    const auto& fp = run.filter;
    log_stage(cfg, "ingest: " + std::to_string(shards.size()) + " shards, " + std::to_string(fp.tally.records) +
                       " records, " + std::to_string(fp.tally.skipped) + " lines skipped");
    log_stage(cfg, "filter: threshold " + format_real(fp.threshold) + ", " + std::to_string(fp.discrepancies) +
                       " score discrepancies");

    std::vector<std::uint64_t> offsets(shards.size(), 0);
    std::partial_sum(fp.records_per_shard.begin(), fp.records_per_shard.end() - (shards.empty() ? 0 : 1),
                     offsets.begin() + (shards.empty() ? 0 : 1));
    res->draw_subsamples(fp.tally.records);

    AuditState total(*res);
    std::mutex merge_mutex;
    parallel_for(shards.size(), workers, [&](std::size_t i) {
        AuditState local(*res);
        LookupCache cache;
        for_each_record(shards[i], [&](SampleRecord&& rec, std::uint64_t ordinal) {
            const double score = score_record(rec, emb).score;
            const bool passed = passes(score, fp.threshold, cfg.filter.ties);
            const ScoredRecord scored{std::move(rec), score, passed};
            local.add(annotate_record(scored, offsets[i] + ordinal, *res, cache));
        });
        std::lock_guard lock(merge_mutex);
        total.merge(local);
    });
    log_stage(cfg, "annotate: " + std::to_string(total.overall().raw) + " records, " +
                       std::to_string(total.overall().passed) + " passed");

    ojson info;
    const bool top = cfg.filter.mode == FilterSpec::Mode::top_fraction;
    info["filter"] = {{"mode", top ? "top_frac" : "threshold"},
                      {"top_frac", top ? ojson(cfg.filter.value) : ojson(nullptr)},
                      {"threshold", top ? ojson(nullptr) : ojson(cfg.filter.value)},
                      {"ties", cfg.filter.ties == TiePolicy::include_ties ? "include" : "exclude"},
                      {"resolved_threshold", fp.threshold}};
    ojson errors = ojson::array();
    for (const auto& e : fp.tally.first_errors) {
        std::string msg = e;
        for (const auto& s : shards) {
            const std::string dir = s.parent_path().string() + "/";
            if (msg.rfind(dir, 0) == 0) {
                msg = msg.substr(dir.size());
                break;
            }
        }
        errors.push_back(msg);
    }
    info["stages"] = {{"shards", shards.size()},
                      {"lines", fp.tally.lines},
                      {"records", fp.tally.records},
                      {"skipped_lines", fp.tally.skipped},
                      {"first_skip_reasons", errors},
                      {"score_discrepancies", fp.discrepancies}};
    run.report = total.build_report(info);
    log_stage(cfg, "report: " + std::to_string(run.report.tables.size()) + " tables");
    return run;
}

AuditRun run_audit_to_dir(const AuditConfig& cfg, std::shared_ptr<Transport> transport) {
    auto run = run_audit(cfg, std::move(transport));
    emit_tables(run.report, cfg.output_dir);
    log_stage(cfg, "wrote " + cfg.output_dir.string());
    return run;
}

} // namespace poolaudit
