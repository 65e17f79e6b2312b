#include "poolaudit/config.hpp"
#include "poolaudit/csv.hpp"
#include "poolaudit/error.hpp"
#include "poolaudit/knn.hpp"
#include "poolaudit/pca.hpp"
#include "poolaudit/pipeline.hpp"
#include "poolaudit/reservoir.hpp"
#include "poolaudit/shards.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

namespace pa = poolaudit;
namespace fs = std::filesystem;

namespace {

// stdout unless a path is given.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) {
                throw pa::IoError("cli", "cannot write " + path);
            }
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
    void close() {
        stream().flush();
        if (!stream()) {
            throw pa::IoError("cli", "write failed");
        }
    }

private:
    std::ofstream file_;
};

void report_tally(const pa::StreamTally& t, const std::string& stage) {
    std::clog << "poolaudit: " << stage << ": " << t.records << " records, " << t.skipped << " lines skipped\n";
    for (const auto& e : t.first_errors) {
        std::clog << "  skipped " << e << '\n';
    }
}

pa::AuditConfig load_config(const std::string& path, const pa::ConfigOverrides& ov) {
    if (path.empty()) {
        return pa::resolve_config(nlohmann::json::object(), fs::current_path(), ov);
    }
    return pa::validate_config(path, ov);
}

std::string version_text() {
    std::string out = std::string("poolaudit ") + POOLAUDIT_VERSION + "\nbundled data:";
    const auto versions = pa::data_versions();
    for (const auto& [name, v] : versions.items()) {
        out += "\n  " + name + " " + v.get<std::string>();
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audit image-text similarity filtering by group"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_text());

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate record shards and optionally draw a seeded sample");
    std::vector<std::string> in_shards;
    std::vector<std::string> in_embeddings;
    std::optional<std::size_t> sample;
    std::uint64_t seed = 0;
    std::string out_path;
    ingest->add_option("--shards", in_shards, "Shard globs")->required();
    ingest->add_option("--embeddings", in_embeddings, "Embedding files to validate");
    ingest->add_option("--sample", sample, "Reservoir sample size");
    ingest->add_option("--seed", seed, "Sample seed");
    ingest->add_option("--out", out_path, "Output file (default stdout)");

    // filter
    auto* filter = app.add_subcommand("filter", "Score records and apply the similarity filter");
    std::optional<double> threshold;
    std::optional<double> top_frac;
    bool strict_ties = false;
    unsigned workers = 0;
    filter->add_option("--shards", in_shards, "Record shard globs")->required();
    filter->add_option("--embeddings", in_embeddings, "Embedding files");
    auto* th_opt = filter->add_option("--threshold", threshold, "Fixed similarity threshold");
    filter->add_option("--top-frac", top_frac, "Keep this top fraction of scores")->excludes(th_opt);
    filter->add_flag("--strict-ties", strict_ties, "Require score > threshold");
    filter->add_option("--workers", workers, "Worker threads (default: all cores)");
    filter->add_option("--out", out_path, "Output file (default stdout)");

    // annotate / stats / report share --config and --in
    std::string config_path;
    std::vector<std::string> inputs;
    std::string table_name;
    std::string out_dir;
    auto* annotate = app.add_subcommand("annotate", "Annotate scored records");
    annotate->add_option("--config", config_path, "Audit config JSON");
    annotate->add_option("--in", inputs, "Scored record files")->required();
    annotate->add_option("--out", out_path, "Output file (default stdout)");

    auto* stats = app.add_subcommand("stats", "Print one group-statistics table from annotated records");
    stats->add_option("--config", config_path, "Audit config JSON");
    stats->add_option("--in", inputs, "Annotated record files")->required();
    stats->add_option("--table", table_name, "Table name")->required();

    auto* report = app.add_subcommand("report", "Write all tables and the manifest from annotated records");
    report->add_option("--config", config_path, "Audit config JSON");
    report->add_option("--in", inputs, "Annotated record files")->required();
    report->add_option("--out", out_dir, "Report directory");

    // run
    auto* run = app.add_subcommand("run", "Run the whole audit from a config file");
    std::vector<std::string> annotators;
    std::string fixtures;
    std::string mode;
    std::optional<std::uint64_t> run_seed;
    bool quiet = false;
    run->add_option("--config", config_path, "Audit config JSON")->required();
    run->add_option("--shards", in_shards, "Shard globs (replace the config's)");
    auto* run_th = run->add_option("--threshold", threshold, "Fixed similarity threshold");
    run->add_option("--top-frac", top_frac, "Keep this top fraction of scores")->excludes(run_th);
    run->add_flag("--strict-ties", strict_ties, "Require score > threshold");
    run->add_option("--annotators", annotators, "Annotators to enable");
    run->add_option("--fixtures", fixtures, "Fixture directory");
    run->add_option("--mode", mode, "replay, record or live");
    run->add_option("--seed", run_seed, "Subsample and holdout seed");
    run->add_option("--workers", workers, "Worker threads (default: all cores)");
    run->add_option("--out", out_dir, "Report directory");
    run->add_flag("--quiet", quiet, "No progress lines");

    // knn
    auto* knn = app.add_subcommand("knn", "Annotate query embeddings against a labeled reference database");
    std::string reference;
    std::string queries;
    std::string attribute = "gender";
    std::size_t k = 7;
    double p = 2.0;
    bool unanimous_only = false;
    std::optional<double> holdout_fraction;
    std::string pca_out;
    knn->add_option("--reference", reference, "Reference embedding file (labels in <file>.csv)")->required();
    knn->add_option("--queries", queries, "Query embedding file");
    knn->add_option("--attribute", attribute, "gender or race");
    knn->add_option("--k", k, "Neighbors");
    knn->add_option("--p", p, "Minkowski order");
    knn->add_flag("--unanimous-only", unanimous_only, "Only print unanimous annotations");
    knn->add_option("--holdout-fraction", holdout_fraction, "Validate on a seeded holdout instead of querying");
    knn->add_option("--seed", seed, "Holdout seed");
    knn->add_option("--pca", pca_out, "Write a 2-D PCA projection of the reference embeddings to this CSV");
    knn->add_option("--out", out_path, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(pa::ErrorKind::config);
    }

    try {
        if (*ingest) {
            auto manifest = pa::open_manifest(in_shards, in_embeddings);
            for (const auto& p : manifest.embedding_paths) {
                pa::load_embeddings(p);
            }
            pa::ShardStream stream(manifest);
            Output out(out_path);
            if (sample) {
                auto picked = pa::reservoir_sample([&] { return stream.next(); }, *sample, seed);
                for (const auto& r : picked) {
                    out.stream() << pa::format_record(r) << '\n';
                }
            } else {
                while (auto r = stream.next()) {
                    out.stream() << pa::format_record(*r) << '\n';
                }
            }
            out.close();
            report_tally(stream.tally(), "ingest");
            return 0;
        }

        if (*filter) {
            const pa::TiePolicy ties = strict_ties ? pa::TiePolicy::exclude_ties : pa::TiePolicy::include_ties;
            const pa::FilterSpec spec = threshold ? pa::FilterSpec::fixed(*threshold, ties)
                                                  : pa::FilterSpec::top_fraction(top_frac.value_or(0.30), ties);
            spec.validate();
            const auto shards = pa::expand_globs(in_shards);
            std::optional<pa::EmbeddingMatrix> emb;
            if (!in_embeddings.empty()) {
                std::vector<pa::EmbeddingMatrix> parts;
                for (const auto& e : in_embeddings) {
                    parts.push_back(pa::load_embeddings(e));
                }
                emb = parts.size() == 1 ? std::move(parts.front()) : pa::concatenate(parts);
            }
            const pa::EmbeddingMatrix* e = emb ? &*emb : nullptr;
            const unsigned w = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
            const auto fp = pa::filter_pass(shards, spec, e, w);
            Output out(out_path);
            std::uint64_t passed = 0;
            for (const auto& shard : shards) {
                pa::for_each_record(shard, [&](pa::SampleRecord&& rec, std::uint64_t) {
                    const double score = pa::score_record(rec, e).score;
                    const bool ok = pa::passes(score, fp.threshold, spec.ties);
                    passed += ok ? 1 : 0;
                    out.stream() << pa::format_scored_record({std::move(rec), score, ok}) << '\n';
                });
            }
            out.close();
            report_tally(fp.tally, "filter");
            std::clog << "poolaudit: filter: threshold " << pa::format_real(fp.threshold) << ", " << passed
                      << " passed, " << fp.discrepancies << " score discrepancies\n";
            return 0;
        }

        if (*annotate) {
            pa::ConfigOverrides ov;
            ov.shards = inputs;
            const auto cfg = load_config(config_path, ov);
            auto res = pa::Resources::load(cfg);
            const auto files = pa::expand_globs(inputs);
            std::uint64_t total = 0;
            for (const auto& f : files) {
                total += pa::for_each_scored_record(f, [](pa::ScoredRecord&&, std::uint64_t) {}).records;
            }
            res->draw_subsamples(total);
            Output out(out_path);
            pa::LookupCache cache;
            std::uint64_t ordinal = 0;
            pa::StreamTally tally;
            for (const auto& f : files) {
                tally.merge(pa::for_each_scored_record(f, [&](pa::ScoredRecord&& s, std::uint64_t) {
                    out.stream() << pa::to_json(pa::annotate_record(s, ordinal++, *res, cache)).dump() << '\n';
                }));
            }
            out.close();
            report_tally(tally, "annotate");
            return 0;
        }

        if (*stats || *report) {
            pa::ConfigOverrides ov;
            ov.shards = inputs;
            if (!out_dir.empty()) {
                ov.output_dir = out_dir;
            }
            const auto cfg = load_config(config_path, ov);
            auto res = pa::Resources::load(cfg);
            pa::AuditState state(*res);
            std::uint64_t lines = 0;
            std::uint64_t skipped = 0;
            for (const auto& f : pa::expand_globs(inputs)) {
                std::ifstream in(f);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) {
                        continue;
                    }
                    ++lines;
                    try {
                        state.add(pa::annotated_from_json(line));
                    } catch (const pa::RecordError& e) {
                        ++skipped;
                    }
                }
            }
            nlohmann::ordered_json info;
            info["filter"] = nullptr;
            info["stages"] = {{"lines", lines}, {"records", lines - skipped}, {"skipped_lines", skipped}};
            const auto rep = state.build_report(info);
            if (*stats) {
                const auto it = rep.tables.find(table_name);
                if (it == rep.tables.end()) {
                    throw pa::ConfigError("cli", "no table '" + table_name + "' (is its annotator enabled?)");
                }
                pa::write_table_csv(it->second, std::cout);
            } else {
                pa::emit_tables(rep, cfg.output_dir);
                std::clog << "poolaudit: wrote " << cfg.output_dir.string() << '\n';
            }
            return 0;
        }

        if (*run) {
            pa::ConfigOverrides ov;
            ov.shards = in_shards;
            ov.threshold = threshold;
            ov.top_frac = top_frac;
            ov.strict_ties = strict_ties;
            if (!annotators.empty()) {
                ov.annotators = annotators;
            }
            if (!fixtures.empty()) {
                ov.fixture_dir = fixtures;
            }
            if (!mode.empty()) {
                ov.fetch_mode = mode;
            }
            ov.seed = run_seed;
            if (!out_dir.empty()) {
                ov.output_dir = out_dir;
            }
            if (workers) {
                ov.workers = workers;
            }
            ov.quiet = quiet;
            pa::run_audit_to_dir(pa::validate_config(config_path, ov));
            return 0;
        }

        if (*knn) {
            const auto attr = pa::parse_attribute(attribute);
            auto db = pa::ReferenceDb::load(reference);
            const pa::KnnConfig cfg{k, p, attr};
            cfg.validate(db.size());
            Output out(out_path);
            if (!pca_out.empty()) {
                const auto proj = pa::pca_project(db.embeddings(), 2);
                Output pca(pca_out);
                pca.stream() << "person_id,pc1,pc2,gender,race\n";
                for (std::size_t i = 0; i < db.size(); ++i) {
                    const auto& e = db.entries()[i];
                    pca.stream() << pa::csv::escape_field(e.person_id) << ',' << pa::format_real(proj.at(e.row, 0))
                                 << ',' << pa::format_real(proj.at(e.row, 1)) << ',' << pa::csv::escape_field(e.gender)
                                 << ',' << pa::csv::escape_field(e.race) << '\n';
                }
                pca.stream() << "# explained_ratio," << pa::format_real(proj.explained_ratio[0]) << ','
                             << pa::format_real(proj.explained_ratio[1]) << '\n';
                pca.close();
            }
            if (holdout_fraction) {
                const auto v = pa::holdout_validate(db, pa::HoldoutSpec{std::nullopt, *holdout_fraction}, seed, cfg);
                out.stream() << "gender,race,n,correct,accuracy\n";
                out.stream() << "all,all," << v.overall.n << ',' << v.overall.correct << ','
                             << pa::format_real(v.overall.accuracy()) << '\n';
                for (const auto& [g, acc] : v.by_group) {
                    out.stream() << pa::csv::escape_field(g.first) << ',' << pa::csv::escape_field(g.second) << ','
                                 << acc.n << ',' << acc.correct << ',' << pa::format_real(acc.accuracy()) << '\n';
                }
            } else if (!queries.empty()) {
                const auto q = pa::load_embeddings(queries);
                const auto index = pa::build_index(std::move(db));
                std::vector<std::string> keys(q.rows());
                for (const auto& [key, row] : q.id_map()) {
                    keys[row] = key;
                }
                out.stream() << "row,key,label,unanimous,distribution\n";
                for (std::uint32_t r = 0; r < q.rows(); ++r) {
                    const auto g = pa::knn_annotate(q.row(r), index, cfg);
                    if (unanimous_only && !g.unanimous) {
                        continue;
                    }
                    std::string dist;
                    for (const auto& [label, prob] : g.distribution) {
                        dist += (dist.empty() ? "" : ";") + label + "=" + pa::format_real(prob);
                    }
                    out.stream() << r << ',' << pa::csv::escape_field(keys[r]) << ',' << pa::csv::escape_field(g.argmax)
                                 << ',' << (g.unanimous ? 1 : 0) << ',' << pa::csv::escape_field(dist) << '\n';
                }
            } else if (pca_out.empty()) {
                throw pa::ConfigError("cli", "knn needs --queries, --holdout-fraction or --pca");
            }
            out.close();
            return 0;
        }
    } catch (const pa::Error& e) {
        std::cerr << "poolaudit: error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "poolaudit: internal error: " << e.what() << '\n';
        return static_cast<int>(pa::ErrorKind::invariant);
    }
    return 0;
}
