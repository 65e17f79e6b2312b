#include "poolaudit/error.hpp"
#include "poolaudit/keyword_stats.hpp"
#include "poolaudit/patterns.hpp"
#include "poolaudit/reservoir.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <regex>

using namespace poolaudit;

namespace {

const PatternSet& identity() {
    static const PatternSet set = load_pattern_set(testing::data_dir() / "identity_keywords.json");
    return set;
}

std::vector<PatternSet> gender_sets() {
    return load_pattern_sets(testing::data_dir() / "gender_keywords.json");
}

const PatternSet& named(const std::vector<PatternSet>& sets, const std::string& name) {
    for (const auto& s : sets) {
        if (s.name() == name) {
            return s;
        }
    }
    throw std::runtime_error("no set " + name);
}

// Reference matcher: std::regex (a different engine) on space-padded text with the
// word boundary spelled out as a non-word character on each side.
std::set<std::string> oracle_matches(const std::string& text, const PatternSet& set) {
    std::string lowered = text;
    for (auto& c : lowered) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    std::set<std::string> out;
    for (const auto& p : set.patterns()) {
        const std::regex re("[^a-z0-9_](" + p.source + ")(?=[^a-z0-9_])");
        if (std::regex_search(" " + lowered + " ", re)) {
            out.insert(p.label);
        }
    }
    return out;
}

} // namespace

TEST_CASE("keyword matching on whole words") {
    CHECK(match_patterns("Women in tech", identity()) == std::set<std::string>{"wom[ae]n"});
    CHECK(match_patterns("a humane policy", identity()).empty());
    CHECK(match_patterns("", identity()).empty());
    CHECK(match_patterns("MEN and WOMEN", identity()) == std::set<std::string>{"m[ae]n", "wom[ae]n"});
    CHECK(match_patterns("an Asian-American family", identity()) == std::set<std::string>{"asian([ -]american)?s?"});
    CHECK(match_patterns("womanly mankind germans", identity()).empty());
}

TEST_CASE("keyword matching agrees with an independent regex engine") {
    const std::vector<std::string> vocab{
        "woman", "women", "womanly", "man", "men", "humane", "manager", "german", "female", "females", "male",
        "males", "asian", "asians", "asian-american", "asiana", "latina", "latinx", "latinos", "latin", "jew",
        "jews", "jewish", "jewel", "trans", "transgender", "transit", "gay", "gays", "non-binary", "nonbinary",
        "bi-sexual", "bisexual", "straight", "straightforward", "black", "blackboard", "white", "muslim",
        "christian", "christians", "african", "american", "caucasian", "european", "lesbian", "-", ",", "the",
        "a", "MEN", "Women", "x_men", "men2", "2women"};
    std::mt19937_64 rng(9);
    for (int i = 0; i < 2000; ++i) {
        std::string text;
        const auto words = 1 + uniform_below(rng, 6);
        for (std::uint64_t w = 0; w < words; ++w) {
            if (w > 0) {
                text += uniform_below(rng, 4) == 0 ? "-" : " ";
            }
            text += vocab[uniform_below(rng, vocab.size())];
        }
        INFO(text);
        CHECK(match_patterns(text, identity()) == oracle_matches(text, identity()));
    }
}

TEST_CASE("pattern sets") {
    CHECK(identity().name() == "identity");
    CHECK(identity().subset("gender").size() == 6);
    CHECK(identity().subset("religion").size() == 3);
    CHECK_THROWS_AS(PatternSet::make_pattern("bad", "("), ConfigError);
    CHECK_THROWS_AS(PatternSet("dup", {PatternSet::make_pattern("a", "a"), PatternSet::make_pattern("a", "b")}),
                    ConfigError);
}

TEST_CASE("annotate_keywords keys hits by set name") {
    const auto sets = gender_sets();
    const auto a = annotate_keywords("u", "She met his men", sets);
    CHECK(a.hits.at("woman") == std::set<std::string>{"(she|her|hers)"});
    CHECK(a.hits.at("man") == std::set<std::string>{"(he|him|his)", "m[ae]n"});
}

TEST_CASE("intersections count pairs and suppress thin cells") {
    const PatternSet g("gender", {PatternSet::make_pattern("woman", "women?", "gender")});
    const PatternSet r("race", {PatternSet::make_pattern("asian", "asian", "race"),
                                PatternSet::make_pattern("latina", "latina", "race")});
    std::vector<KeywordAnnotation> anns;
    std::unordered_map<std::string, bool> passed;
    for (int i = 0; i < 10; ++i) {
        const std::string uid = "a" + std::to_string(i);
        anns.push_back({uid, {{"gender", {"woman"}}, {"race", {"asian"}}}});
        passed[uid] = i < 6;
    }
    for (int i = 0; i < 9; ++i) {
        const std::string uid = "l" + std::to_string(i);
        anns.push_back({uid, {{"gender", {"woman"}}, {"race", {"latina"}}}});
        passed[uid] = true;
    }
    const auto m = intersect_groups(anns, passed, g, r, 10);
    const auto* wa = m.find("woman", "asian");
    REQUIRE(wa);
    CHECK(wa->count == GroupCount{10, 6});
    CHECK(*pass_rate(wa->count) == doctest::Approx(0.6));
    CHECK_FALSE(wa->suppressed);
    const auto* wl = m.find("woman", "latina");
    REQUIRE(wl);
    CHECK(wl->count.raw == 9);
    CHECK(wl->suppressed);
    CHECK(m.find("woman", kTotalLabel)->count == GroupCount{19, 15});
    CHECK(m.find(kTotalLabel, "latina")->count == GroupCount{9, 9});
    CHECK_THROWS_AS(intersect_groups(anns, passed, g, r, 0), InvariantError);
}

TEST_CASE("intersection accumulator merges to the same matrix") {
    const PatternSet g("gender", {PatternSet::make_pattern("w", "w", "gender"), PatternSet::make_pattern("m", "m", "gender")});
    const PatternSet r("race", {PatternSet::make_pattern("x", "x", "race"),
                                PatternSet::make_pattern("y", "y", "race", true)});
    IntersectionAccumulator all(g, r), left(g, r), right(g, r);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
        std::vector<std::size_t> ha, hb;
        for (std::size_t k = 0; k < 2; ++k) {
            if (uniform_below(rng, 2)) {
                ha.push_back(k);
            }
            if (uniform_below(rng, 2)) {
                hb.push_back(k);
            }
        }
        const bool p = uniform_below(rng, 3) == 0;
        all.add(ha, hb, p);
        (i % 2 ? left : right).add(ha, hb, p);
    }
    left.merge(right);
    const auto a = all.matrix(10);
    const auto b = left.matrix(10);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        CHECK(a.cells[i].count == b.cells[i].count);
    }
    // the excluded label y is dropped unless asked for
    CHECK(a.find("w", "y") == nullptr);
    CHECK(all.matrix(10, true).find("w", "y") != nullptr);
}

TEST_CASE("tokens and stopwords") {
    CHECK(unique_tokens("The cat, the HAT!") == std::vector<std::string>{"cat", "hat", "the"});
    CHECK(unique_tokens("caf\xc3\xa9 au lait") == std::vector<std::string>{"au", "caf\xc3\xa9", "lait"});
    const auto stop = load_stopwords(testing::data_dir() / "stopwords.txt");
    CHECK(stop.count("the") == 1);
    CHECK(stop.count("queen") == 0);
}

TEST_CASE("common word gap") {
    const auto sets = gender_sets();
    const auto& woman = named(sets, "woman");
    const auto& man = named(sets, "man");
    const auto stop = load_stopwords(testing::data_dir() / "stopwords.txt");

    // queen: 10 woman samples (5 pass), 10 man samples (3 pass) -> gap +0.2
    // tiara: woman samples only -> man rate undefined, left out
    // the: stopword
    std::vector<std::string> texts;
    std::vector<bool> pass;
    for (int i = 0; i < 10; ++i) {
        texts.push_back("the queen and a woman");
        pass.push_back(i < 5);
        texts.push_back("the queen and a man");
        pass.push_back(i < 3);
        texts.push_back("her tiara");
        pass.push_back(true);
    }
    texts.push_back("queen of cards");  // no gendered keyword: not counted
    pass.push_back(true);
    std::vector<TextSample> samples;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        samples.push_back({texts[i], pass[i]});
    }
    const auto res = common_word_gap(samples, woman, man, stop, 10, 20);
    CHECK(res.qualifying_samples == 30);
    const auto find = [](const std::vector<WordGapRow>& rows, const std::string& w) -> const WordGapRow* {
        for (const auto& r : rows) {
            if (r.stats.word == w) {
                return &r;
            }
        }
        return nullptr;
    };
    const auto* q = find(res.woman_associated, "queen");
    REQUIRE(q);
    CHECK(q->rate_woman == doctest::Approx(0.5));
    CHECK(q->rate_man == doctest::Approx(0.3));
    CHECK(q->gap == doctest::Approx(0.2));
    CHECK(q->stats.n_any == 20);
    CHECK(find(res.woman_associated, "tiara") == nullptr);
    CHECK(find(res.man_associated, "tiara") == nullptr);
    CHECK(find(res.woman_associated, "the") == nullptr);
    CHECK(find(res.man_associated, "the") == nullptr);
    // min_count above every word's support leaves nothing
    const auto none = common_word_gap(samples, woman, man, stop, 1000, 20);
    CHECK(none.woman_associated.empty());
    CHECK(none.man_associated.empty());
}
