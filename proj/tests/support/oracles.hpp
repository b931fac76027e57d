#pragma once

// Test-only reference implementations, kept deliberately independent of the
// library code paths they check: the span scorer works on label-name strings
// with a conlleval-style start/end state machine, and every attribute is
// recomputed with naive quadratic scans.

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "conner/corpus.hpp"
#include "conner/eval.hpp"

namespace oracle {

struct Span {
    std::size_t doc = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string type;

    auto key() const { return std::tie(doc, start, end, type); }
    bool operator<(const Span& o) const { return key() < o.key(); }
    bool operator==(const Span& o) const { return key() == o.key(); }
};

inline bool chunk_start(const std::string& prev, const std::string& cur) {
    if (cur == "O") return false;
    if (cur[0] == 'B') return true;
    // I-X starts a chunk unless the previous label was B-X or I-X of the same type
    if (prev == "O") return true;
    return prev.substr(2) != cur.substr(2);
}

inline std::vector<Span> decode_names(const std::vector<std::string>& labels, std::size_t doc) {
    std::vector<Span> spans;
    std::string prev = "O";
    for (std::size_t t = 0; t < labels.size(); ++t) {
        const std::string& cur = labels[t];
        if (chunk_start(prev, cur)) {
            spans.push_back({doc, t, t + 1, cur.substr(2)});
        } else if (cur != "O") {
            spans.back().end = t + 1;
        }
        prev = cur;
    }
    return spans;
}

inline std::vector<std::string> names_of(const std::vector<conner::LabelId>& ids,
                                         const conner::LabelScheme& scheme) {
    std::vector<std::string> names;
    names.reserve(ids.size());
    for (auto id : ids) names.push_back(scheme.label_name(id));
    return names;
}

struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    long gold = 0, predicted = 0, correct = 0;
};

inline Prf score(const std::vector<Span>& gold, const std::vector<Span>& predicted) {
    Prf out;
    out.gold = static_cast<long>(gold.size());
    out.predicted = static_cast<long>(predicted.size());
    for (const auto& p : predicted)
        for (const auto& g : gold)
            if (p == g) {
                out.correct += 1;
                break;
            }
    out.precision = out.predicted == 0 ? (out.gold == 0 ? 1.0 : 0.0)
                                       : static_cast<double>(out.correct) / out.predicted;
    out.recall = out.gold == 0 ? (out.predicted == 0 ? 1.0 : 0.0)
                               : static_cast<double>(out.correct) / out.gold;
    out.f1 = out.precision + out.recall > 0
                 ? 2 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

// micro scoring of a whole corpus against per-document label ids
inline Prf score_corpus(const conner::Corpus& corpus,
                        const std::vector<std::vector<conner::LabelId>>& predictions) {
    std::vector<Span> gold, pred;
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
        auto g = decode_names(names_of(corpus.documents[d].gold_labels, corpus.scheme), d);
        auto p = decode_names(names_of(predictions[d], corpus.scheme), d);
        gold.insert(gold.end(), g.begin(), g.end());
        pred.insert(pred.end(), p.begin(), p.end());
    }
    return score(gold, pred);
}

// ---------------------------------------------------------------------------
// Naive attribute recomputation
// ---------------------------------------------------------------------------

inline std::vector<Span> corpus_gold_spans(const conner::Corpus& corpus) {
    std::vector<Span> spans;
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
        auto s = decode_names(names_of(corpus.documents[d].gold_labels, corpus.scheme), d);
        spans.insert(spans.end(), s.begin(), s.end());
    }
    return spans;
}

inline long count_token(const conner::Corpus& corpus, const std::string& token) {
    long n = 0;
    for (const auto& doc : corpus.documents)
        for (const auto& tok : doc.tokens)
            if (tok == token) ++n;
    return n;
}

inline long count_token_in_entities(const conner::Corpus& corpus, const std::string& token) {
    long n = 0;
    const auto spans = corpus_gold_spans(corpus);
    for (const auto& span : spans)
        for (std::size_t t = span.start; t < span.end; ++t)
            if (corpus.documents[span.doc].tokens[t] == token) ++n;
    return n;
}

inline long count_sequence(const conner::Corpus& corpus, const std::vector<std::string>& seq) {
    long n = 0;
    for (const auto& doc : corpus.documents) {
        if (doc.tokens.size() < seq.size()) continue;
        for (std::size_t start = 0; start + seq.size() <= doc.tokens.size(); ++start) {
            bool match = true;
            for (std::size_t i = 0; i < seq.size(); ++i)
                if (doc.tokens[start + i] != seq[i]) {
                    match = false;
                    break;
                }
            if (match) ++n;
        }
    }
    return n;
}

inline long count_sequence_as_entity(const conner::Corpus& corpus,
                                     const std::vector<std::string>& seq) {
    long n = 0;
    for (const auto& span : corpus_gold_spans(corpus)) {
        if (span.end - span.start != seq.size()) continue;
        bool match = true;
        for (std::size_t i = 0; i < seq.size(); ++i)
            if (corpus.documents[span.doc].tokens[span.start + i] != seq[i]) {
                match = false;
                break;
            }
        if (match) ++n;
    }
    return n;
}

inline long total_tokens(const conner::Corpus& corpus) {
    long n = 0;
    for (const auto& doc : corpus.documents) n += static_cast<long>(doc.tokens.size());
    return n;
}

inline long total_entities(const conner::Corpus& corpus) {
    return static_cast<long>(corpus_gold_spans(corpus).size());
}

inline double ratio(long a, long b) { return b == 0 ? 0.0 : static_cast<double>(a) / b; }

inline double naive_tcon(const conner::Corpus& train, const std::string& token) {
    return ratio(count_token_in_entities(train, token), count_token(train, token));
}

inline double naive_econ(const conner::Corpus& train, const std::vector<std::string>& seq) {
    return ratio(count_sequence_as_entity(train, seq), count_sequence(train, seq));
}

inline double naive_tfre(const conner::Corpus& train, const std::string& token) {
    return ratio(count_token(train, token), total_tokens(train));
}

inline double naive_efre(const conner::Corpus& train, const std::vector<std::string>& seq) {
    return ratio(count_sequence_as_entity(train, seq), total_entities(train));
}

inline double naive_eden(const conner::Corpus& corpus, std::size_t doc) {
    const auto& d = corpus.documents[doc];
    if (d.tokens.empty()) return 0.0;
    std::vector<bool> covered(d.tokens.size(), false);
    for (const auto& span : corpus_gold_spans(corpus)) {
        if (span.doc != doc) continue;
        for (std::size_t t = span.start; t < span.end; ++t) covered[t] = true;
    }
    long n = 0;
    for (bool c : covered)
        if (c) ++n;
    return static_cast<double>(n) / static_cast<double>(d.tokens.size());
}

inline double naive_oden(const conner::Corpus& train, const conner::Corpus& corpus,
                         std::size_t doc) {
    const auto& d = corpus.documents[doc];
    if (d.tokens.empty()) return 0.0;
    long oov = 0;
    for (const auto& tok : d.tokens)
        if (count_token(train, tok) == 0) ++oov;
    return static_cast<double>(oov) / static_cast<double>(d.tokens.size());
}

// ---------------------------------------------------------------------------
// Random corpora for property tests
// ---------------------------------------------------------------------------

// labels drawn uniformly over the whole tag set, so ill-formed BIO sequences
// are common
inline conner::Corpus random_corpus(std::mt19937_64& rng, std::size_t max_docs = 10,
                                    std::size_t max_tokens = 30, int n_types = 2,
                                    int vocab = 12) {
    std::vector<std::string> types;
    for (int t = 0; t < n_types; ++t) types.push_back("T" + std::to_string(t));
    conner::Corpus corpus;
    corpus.scheme = conner::LabelScheme(types);
    std::uniform_int_distribution<std::size_t> n_docs(0, max_docs);
    std::uniform_int_distribution<std::size_t> n_tokens(1, max_tokens);
    std::uniform_int_distribution<int> token_pick(0, vocab - 1);
    std::uniform_int_distribution<int> label_pick(0, corpus.scheme.label_count() - 1);
    const std::size_t docs = n_docs(rng);
    for (std::size_t d = 0; d < docs; ++d) {
        conner::Document doc;
        doc.doc_id = "doc_" + std::to_string(d);
        const std::size_t len = n_tokens(rng);
        std::uniform_int_distribution<std::size_t> sent_len(1, 8);
        std::size_t pos = 0;
        while (pos < len) {
            pos = std::min(len, pos + sent_len(rng));
            doc.sentence_ends.push_back(pos);
        }
        for (std::size_t t = 0; t < len; ++t) {
            doc.tokens.push_back("w" + std::to_string(token_pick(rng)));
            doc.gold_labels.push_back(label_pick(rng));
        }
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

// uniformly random ill-formed-capable label sequences for an existing corpus
inline std::vector<std::vector<conner::LabelId>> random_predictions(const conner::Corpus& corpus,
                                                                    std::mt19937_64& rng) {
    std::uniform_int_distribution<int> label_pick(0, corpus.scheme.label_count() - 1);
    std::vector<std::vector<conner::LabelId>> out;
    for (const auto& doc : corpus.documents) {
        std::vector<conner::LabelId> labels(doc.size());
        for (auto& l : labels) l = label_pick(rng);
        out.push_back(std::move(labels));
    }
    return out;
}

}  // namespace oracle
