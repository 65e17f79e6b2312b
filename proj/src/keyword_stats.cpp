#include "poolaudit/keyword_stats.hpp"

#include "poolaudit/error.hpp"

#include <algorithm>
#include <fstream>

namespace poolaudit {
namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
}

} // namespace

KeywordAnnotation annotate_keywords(const std::string& uid, std::string_view text, std::span<const PatternSet> sets) {
    KeywordAnnotation out;
    out.uid = uid;
    for (const auto& set : sets) {
        out.hits[set.name()] = match_patterns(text, set);
    }
    return out;
}

const IntersectionCell* IntersectionMatrix::find(const std::string& a, const std::string& b) const {
    for (const auto& cell : cells) {
        if (cell.label_a == a && cell.label_b == b) {
            return &cell;
        }
    }
    return nullptr;
}

IntersectionAccumulator::IntersectionAccumulator(const PatternSet& a, const PatternSet& b)
    : a_(&a), b_(&b), cells_(a.size() * b.size()), margin_a_(a.size()), margin_b_(b.size()) {}

void IntersectionAccumulator::add(std::span<const std::size_t> hits_a, std::span<const std::size_t> hits_b,
                                  bool passed) {
    for (std::size_t i : hits_a) {
        margin_a_[i].add(passed);
        for (std::size_t j : hits_b) {
            cells_[i * b_->size() + j].add(passed);
        }
    }
    for (std::size_t j : hits_b) {
        margin_b_[j].add(passed);
    }
}

void IntersectionAccumulator::merge(const IntersectionAccumulator& other) {
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        cells_[i].merge(other.cells_[i]);
    }
    for (std::size_t i = 0; i < margin_a_.size(); ++i) {
        margin_a_[i].merge(other.margin_a_[i]);
    }
    for (std::size_t j = 0; j < margin_b_.size(); ++j) {
        margin_b_[j].merge(other.margin_b_[j]);
    }
}

IntersectionMatrix IntersectionAccumulator::matrix(std::uint64_t min_support, bool include_excluded) const {
    if (min_support == 0) {
        throw InvariantError("text_annot", "min_support must be at least 1");
    }
    IntersectionMatrix out;
    out.dimension_a = a_->name();
    out.dimension_b = b_->name();
    const auto& pa = a_->patterns();
    const auto& pb = b_->patterns();
    const auto push = [&](const std::string& la, const std::string& lb, const GroupCount& c) {
        out.cells.push_back(IntersectionCell{la, lb, c, c.raw < min_support});
    };
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].excluded_from_reports && !include_excluded) {
            continue;
        }
        for (std::size_t j = 0; j < pb.size(); ++j) {
            if (pb[j].excluded_from_reports && !include_excluded) {
                continue;
            }
            push(pa[i].label, pb[j].label, cells_[i * pb.size() + j]);
        }
        push(pa[i].label, kTotalLabel, margin_a_[i]);
    }
    for (std::size_t j = 0; j < pb.size(); ++j) {
        if (pb[j].excluded_from_reports && !include_excluded) {
            continue;
        }
        push(kTotalLabel, pb[j].label, margin_b_[j]);
    }
    return out;
}

IntersectionMatrix intersect_groups(std::span<const KeywordAnnotation> annotations,
                                    const std::unordered_map<std::string, bool>& passed_by_uid,
                                    const PatternSet& a, const PatternSet& b, std::uint64_t min_support) {
    if (min_support == 0) {
        throw InvariantError("text_annot", "min_support must be at least 1");
    }
    const auto indices_of = [](const PatternSet& set, const std::set<std::string>& labels) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (labels.count(set.patterns()[i].label)) {
                idx.push_back(i);
            }
        }
        return idx;
    };
    static const std::set<std::string> kNone;
    IntersectionAccumulator acc(a, b);
    for (const auto& ann : annotations) {
        const auto outcome = passed_by_uid.find(ann.uid);
        if (outcome == passed_by_uid.end()) {
            continue;
        }
        const auto ha = ann.hits.find(a.name());
        const auto hb = ann.hits.find(b.name());
        acc.add(indices_of(a, ha == ann.hits.end() ? kNone : ha->second),
                indices_of(b, hb == ann.hits.end() ? kNone : hb->second), outcome->second);
    }
    return acc.matrix(min_support, true);
}

std::vector<std::string> unique_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<unsigned char>(c - 'A' + 'a');
        }
        if (is_word_byte(c)) {
            current.push_back(static_cast<char>(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return tokens;
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("text_annot", "cannot open stopword list " + path.string());
    }
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (!line.empty()) {
            words.insert(lowercase_text(line));
        }
    }
    return words;
}

WordGapAccumulator::WordGapAccumulator(const PatternSet& woman, const PatternSet& man,
                                       const std::unordered_set<std::string>& stopwords)
    : woman_(&woman), man_(&man), stopwords_(&stopwords) {}

void WordGapAccumulator::add(std::string_view text, bool passed) {
    const std::string lowered = lowercase_text(text);
    add_matched(lowered, !match_indices(lowered, *woman_).empty(), !match_indices(lowered, *man_).empty(), passed);
}

void WordGapAccumulator::add_matched(std::string_view lowered, bool hits_woman, bool hits_man, bool passed) {
    if (!hits_woman && !hits_man) {
        return;
    }
    add_tokens(content_tokens(lowered), hits_woman, hits_man, passed);
}

std::vector<std::string> WordGapAccumulator::content_tokens(std::string_view lowered) const {
    auto tokens = unique_tokens(lowered);
    std::erase_if(tokens, [&](const std::string& t) { return stopwords_->count(t) != 0; });
    return tokens;
}

void WordGapAccumulator::add_tokens(std::span<const std::string> tokens, bool hits_woman, bool hits_man, bool passed) {
    if (!hits_woman && !hits_man) {
        return;
    }
    ++qualifying_;
    for (const auto& token : tokens) {
        auto& s = words_[token];
        if (s.word.empty()) {
            s.word = token;
        }
        ++s.n_any;
        if (hits_woman) {
            ++s.n_woman;
            s.pass_woman += passed ? 1 : 0;
        }
        if (hits_man) {
            ++s.n_man;
            s.pass_man += passed ? 1 : 0;
        }
    }
}

void WordGapAccumulator::merge(const WordGapAccumulator& other) {
    qualifying_ += other.qualifying_;
    for (const auto& [word, o] : other.words_) {
        auto& s = words_[word];
        s.word = word;
        s.n_any += o.n_any;
        s.n_woman += o.n_woman;
        s.pass_woman += o.pass_woman;
        s.n_man += o.n_man;
        s.pass_man += o.pass_man;
    }
}

WordGapResult WordGapAccumulator::result(std::uint64_t min_count, std::size_t top_k) const {
    if (min_count == 0) {
        throw InvariantError("text_annot", "min_count must be at least 1");
    }
    WordGapResult out;
    out.qualifying_samples = qualifying_;
    std::vector<WordGapRow> rows;
    for (const auto& [word, s] : words_) {
        if (s.n_any < min_count) {
            ++out.below_min_count;
            continue;
        }
        if (s.n_woman == 0 || s.n_man == 0) {
            continue;
        }
        WordGapRow row;
        row.stats = s;
        row.rate_woman = static_cast<double>(s.pass_woman) / static_cast<double>(s.n_woman);
        row.rate_man = static_cast<double>(s.pass_man) / static_cast<double>(s.n_man);
        row.gap = row.rate_woman - row.rate_man;
        rows.push_back(std::move(row));
    }
    for (const auto& r : rows) {
        if (r.gap > 0) {
            out.woman_associated.push_back(r);
        } else if (r.gap < 0) {
            out.man_associated.push_back(r);
        }
    }
    std::sort(out.woman_associated.begin(), out.woman_associated.end(), [](const auto& x, const auto& y) {
        return x.gap != y.gap ? x.gap > y.gap : x.stats.word < y.stats.word;
    });
    std::sort(out.man_associated.begin(), out.man_associated.end(), [](const auto& x, const auto& y) {
        return x.gap != y.gap ? x.gap < y.gap : x.stats.word < y.stats.word;
    });
    if (out.woman_associated.size() > top_k) {
        out.woman_associated.resize(top_k);
    }
    if (out.man_associated.size() > top_k) {
        out.man_associated.resize(top_k);
    }
    return out;
}

WordGapResult common_word_gap(std::span<const TextSample> samples, const PatternSet& woman, const PatternSet& man,
                              const std::unordered_set<std::string>& stopwords, std::uint64_t min_count,
                              std::size_t top_k) {
    WordGapAccumulator acc(woman, man, stopwords);
    for (const auto& s : samples) {
        acc.add(s.text, s.passed);
    }
    return acc.result(min_count, top_k);
}

} // namespace poolaudit
