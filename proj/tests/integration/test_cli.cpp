#include "test_support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <array>
#include <cstdio>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Result run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + POOLAUDIT_CLI + "\" " + args + " 2>&1";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path demo_dir() { return testing::data_dir() / "demo"; }

} // namespace

TEST_CASE("version and help") {
    const auto v = run_cli("--version");
    CHECK(v.code == 0);
    CHECK(v.out.find("identity-v1") != std::string::npos);
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("frobnicate").code != 0);
}

TEST_CASE("config errors exit 2") {
    testing::TempDir dir;
    testing::write_file(dir / "empty.json", "");
    const auto a = run_cli("run --config " + q(dir / "empty.json"));
    CHECK(a.code == 2);
    CHECK(a.out.find("no config") != std::string::npos);
    testing::write_file(dir / "bad.json", R"({"shards":["nothing-*.jsonl"],"filter":{"top_frac":2}})");
    const auto b = run_cli("run --config " + q(dir / "bad.json"));
    CHECK(b.code == 2);
    CHECK(b.out.find("shards") != std::string::npos);
    CHECK(b.out.find("filter") != std::string::npos);
    const auto c = run_cli("filter --shards x --threshold 0.3 --top-frac 0.3");
    CHECK(c.code != 0);
}

TEST_CASE("missing fixtures exit 3 naming service and key") {
    testing::TempDir dir;
    fs::copy(demo_dir(), dir / "demo", fs::copy_options::recursive);
    fs::path victim;
    for (const auto& e : fs::directory_iterator(dir / "demo" / "fixtures" / "dns")) {
        if (e.path().extension() == ".bin") {
            victim = e.path();
            break;
        }
    }
    REQUIRE_FALSE(victim.empty());
    auto meta_path = victim;
    meta_path.replace_extension(".meta.json");
    const auto meta = nlohmann::json::parse(testing::read_file(meta_path));
    fs::remove(victim);
    const auto r = run_cli("run --quiet --workers 1 --config " + q(dir / "demo" / "config.json") + " --out " +
                           q(dir / "out"));
    CHECK(r.code == 3);
    CHECK(r.out.find("dns") != std::string::npos);
    CHECK(r.out.find(meta["key"].get<std::string>()) != std::string::npos);
}

TEST_CASE("run writes the report") {
    testing::TempDir dir;
    const auto r = run_cli("run --quiet --workers 2 --config " + q(demo_dir() / "config.json") + " --out " +
                           q(dir / "out"));
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "out" / "manifest.json"));
    CHECK(fs::exists(dir / "out" / "intersections.csv"));
}

TEST_CASE("subcommands compose into the same tables as run") {
    testing::TempDir dir;
    const auto cfg = q(demo_dir() / "config.json");
    const auto shards = q(demo_dir() / "shards" / "part-*.jsonl");
    REQUIRE(run_cli("ingest --shards " + shards + " --sample 5 --seed 1 --out " + q(dir / "sample.jsonl")).code == 0);
    CHECK(testing::read_file(dir / "sample.jsonl").find("\"uid\"") != std::string::npos);

    REQUIRE(run_cli("filter --workers 1 --top-frac 0.3 --shards " + shards + " --embeddings " +
                    q(demo_dir() / "embeddings.paem") + " --out " + q(dir / "scored.jsonl"))
                .code == 0);
    REQUIRE(run_cli("annotate --config " + cfg + " --in " + q(dir / "scored.jsonl") + " --out " +
                    q(dir / "annotated.jsonl"))
                .code == 0);
    REQUIRE(run_cli("report --config " + cfg + " --in " + q(dir / "annotated.jsonl") + " --out " + q(dir / "staged"))
                .code == 0);
    REQUIRE(run_cli("run --quiet --workers 1 --config " + cfg + " --out " + q(dir / "direct")).code == 0);

    for (const auto& e : fs::directory_iterator(dir / "direct")) {
        if (e.path().extension() == ".csv") {
            INFO(e.path().filename().string());
            REQUIRE(fs::exists(dir / "staged" / e.path().filename()));
            CHECK(testing::read_file(e.path()) == testing::read_file(dir / "staged" / e.path().filename()));
        }
    }

    const auto s = run_cli("stats --config " + cfg + " --in " + q(dir / "annotated.jsonl") + " --table languages");
    CHECK(s.code == 0);
    CHECK(s.out.find("dimension,label,raw,passed") != std::string::npos);
}

TEST_CASE("knn subcommand") {
    testing::TempDir dir;
    const auto r = run_cli("knn --reference " + q(demo_dir() / "reference.paem") + " --attribute race --k 5 " +
                           "--holdout-fraction 0.25 --seed 3 --pca " + q(dir / "pca.csv"));
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "pca.csv"));
}
