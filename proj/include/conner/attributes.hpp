#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "conner/corpus.hpp"
#include "conner/eval.hpp"

namespace conner {

// Surface strings are token sequences joined with a single space; tokens are
// whitespace-free so the join is unambiguous.
inline std::string surface_of(const Document& doc, std::size_t start, std::size_t end) {
    std::string s;
    for (std::size_t t = start; t < end; ++t) {
        if (t > start) s += ' ';
        s += doc.tokens[t];
    }
    return s;
}

// Counting tables over a training corpus. All training-set-dependent
// attributes are pure lookups against these tables.
struct TrainStats {
    std::unordered_map<std::string, std::int64_t> token_occurrences;
    std::unordered_map<std::string, std::int64_t> token_entity_occurrences;
    // keyed by gold-entity surface string; counts occurrences of that exact
    // contiguous token sequence anywhere in the corpus / as a full gold entity
    std::unordered_map<std::string, std::int64_t> entity_string_occurrences;
    std::unordered_map<std::string, std::int64_t> entity_string_as_entity;
    std::unordered_set<std::string> vocabulary;
    std::int64_t total_tokens = 0;
    std::int64_t total_entities = 0;

    void merge(const TrainStats& o) {
        for (const auto& [k, v] : o.token_occurrences) token_occurrences[k] += v;
        for (const auto& [k, v] : o.token_entity_occurrences) token_entity_occurrences[k] += v;
        for (const auto& [k, v] : o.entity_string_occurrences) entity_string_occurrences[k] += v;
        for (const auto& [k, v] : o.entity_string_as_entity) entity_string_as_entity[k] += v;
        vocabulary.insert(o.vocabulary.begin(), o.vocabulary.end());
        total_tokens += o.total_tokens;
        total_entities += o.total_entities;
    }
};

namespace detail {

// Tables for one document, given the corpus-wide set of entity surfaces
// grouped by token length. Associative merge over documents yields the
// corpus tables.
inline TrainStats doc_stats(const Document& doc, const LabelScheme& scheme,
                            const std::map<std::size_t, std::unordered_set<std::string>>&
                                surfaces_by_len) {
    TrainStats s;
    s.total_tokens = static_cast<std::int64_t>(doc.size());
    for (const auto& tok : doc.tokens) {
        s.token_occurrences[tok] += 1;
        s.vocabulary.insert(tok);
    }
    const auto spans = gold_spans(doc, scheme);
    s.total_entities = static_cast<std::int64_t>(spans.size());
    for (const auto& span : spans) {
        for (std::size_t t = span.start; t < span.end; ++t)
            s.token_entity_occurrences[doc.tokens[t]] += 1;
        s.entity_string_as_entity[surface_of(doc, span.start, span.end)] += 1;
    }
    for (const auto& [len, surfaces] : surfaces_by_len) {
        if (len > doc.size()) continue;
        for (std::size_t start = 0; start + len <= doc.size(); ++start) {
            const std::string ngram = surface_of(doc, start, start + len);
            if (surfaces.count(ngram)) s.entity_string_occurrences[ngram] += 1;
        }
    }
    return s;
}

}  // namespace detail

inline TrainStats build_train_stats(const Corpus& corpus) {
    // first pass: the corpus-wide surface inventory
    std::map<std::size_t, std::unordered_set<std::string>> surfaces_by_len;
    for (const auto& doc : corpus.documents)
        for (const auto& span : gold_spans(doc, corpus.scheme))
            surfaces_by_len[span.end - span.start].insert(
                surface_of(doc, span.start, span.end));
    // second pass: per-document counting, merged associatively
    TrainStats stats;
    for (const auto& doc : corpus.documents)
        stats.merge(detail::doc_stats(doc, corpus.scheme, surfaces_by_len));
    return stats;
}

// ---------------------------------------------------------------------------
// Attribute functions
// ---------------------------------------------------------------------------

enum class AttributeKind { tLen, eLen, dLen, eDen, oDen, tFre, eFre, tCon, eCon };

inline const char* attribute_name(AttributeKind k) {
    switch (k) {
        case AttributeKind::tLen: return "tLen";
        case AttributeKind::eLen: return "eLen";
        case AttributeKind::dLen: return "dLen";
        case AttributeKind::eDen: return "eDen";
        case AttributeKind::oDen: return "oDen";
        case AttributeKind::tFre: return "tFre";
        case AttributeKind::eFre: return "eFre";
        case AttributeKind::tCon: return "tCon";
        case AttributeKind::eCon: return "eCon";
    }
    return "?";
}

inline AttributeKind attribute_from_name(std::string_view name) {
    for (AttributeKind k :
         {AttributeKind::tLen, AttributeKind::eLen, AttributeKind::dLen, AttributeKind::eDen,
          AttributeKind::oDen, AttributeKind::tFre, AttributeKind::eFre, AttributeKind::tCon,
          AttributeKind::eCon}) {
        if (name == attribute_name(k)) return k;
    }
    throw std::invalid_argument("unknown attribute '" + std::string(name) + "'");
}

inline bool is_entity_attribute(AttributeKind k) {
    return k == AttributeKind::eLen || k == AttributeKind::eFre || k == AttributeKind::eCon;
}
inline bool is_token_attribute(AttributeKind k) {
    return k == AttributeKind::tLen || k == AttributeKind::tFre || k == AttributeKind::tCon;
}

// Consistency denominators: the default divides by the string's own
// occurrence count (the semantics behind the reported per-token numbers);
// literal_eq1 divides by the size of the whole counting pool instead, which
// is what the aggregate feature-function definition spells out.
enum class Eq1Mode { narrative, literal };

namespace detail {

inline std::int64_t lookup(const std::unordered_map<std::string, std::int64_t>& m,
                           const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
}

// token span length counted in UTF-8 code points
inline double utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return static_cast<double>(n);
}

inline double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double entity_density(const Document& doc, const LabelScheme& scheme) {
    if (doc.size() == 0) return 0.0;
    std::int64_t covered = 0;
    for (const auto& span : gold_spans(doc, scheme))
        covered += static_cast<std::int64_t>(span.end - span.start);
    return static_cast<double>(covered) / static_cast<double>(doc.size());
}

inline double oov_density(const Document& doc, const TrainStats& stats) {
    if (doc.size() == 0) return 0.0;
    std::int64_t oov = 0;
    for (const auto& tok : doc.tokens)
        if (!stats.vocabulary.count(tok)) ++oov;
    return static_cast<double>(oov) / static_cast<double>(doc.size());
}

}  // namespace detail

inline double token_consistency(const std::string& token, const TrainStats& stats,
                                Eq1Mode mode = Eq1Mode::narrative) {
    const std::int64_t inside = detail::lookup(stats.token_entity_occurrences, token);
    if (mode == Eq1Mode::literal) return detail::ratio(inside, stats.total_tokens);
    return detail::ratio(inside, detail::lookup(stats.token_occurrences, token));
}

inline double entity_consistency(const std::string& surface, const TrainStats& stats,
                                 Eq1Mode mode = Eq1Mode::narrative) {
    const std::int64_t as_entity = detail::lookup(stats.entity_string_as_entity, surface);
    if (mode == Eq1Mode::literal) return detail::ratio(as_entity, stats.total_entities);
    return detail::ratio(as_entity, detail::lookup(stats.entity_string_occurrences, surface));
}

// Attribute of one token occurrence (token/document-level kinds only).
inline double token_attribute(AttributeKind kind, const Document& doc, std::size_t token_index,
                              const LabelScheme& scheme, const TrainStats& stats,
                              Eq1Mode mode = Eq1Mode::narrative) {
    if (token_index >= doc.size())
        throw std::out_of_range("token_attribute: token index out of range");
    const std::string& tok = doc.tokens[token_index];
    switch (kind) {
        case AttributeKind::tLen: return detail::utf8_length(tok);
        case AttributeKind::dLen: return static_cast<double>(doc.size());
        case AttributeKind::eDen: return detail::entity_density(doc, scheme);
        case AttributeKind::oDen: return detail::oov_density(doc, stats);
        case AttributeKind::tFre:
            return detail::ratio(detail::lookup(stats.token_occurrences, tok),
                                 stats.total_tokens);
        case AttributeKind::tCon: return token_consistency(tok, stats, mode);
        default:
            throw std::invalid_argument(std::string("token_attribute: ") + attribute_name(kind) +
                                        " is an entity attribute");
    }
}

// Attribute of one entity span (entity/document-level kinds only).
inline double span_attribute(AttributeKind kind, const Document& doc, const EntitySpan& span,
                             const LabelScheme& scheme, const TrainStats& stats,
                             Eq1Mode mode = Eq1Mode::narrative) {
    if (span.start >= span.end || span.end > doc.size())
        throw std::out_of_range("span_attribute: span out of range");
    switch (kind) {
        case AttributeKind::eLen: return static_cast<double>(span.end - span.start);
        case AttributeKind::dLen: return static_cast<double>(doc.size());
        case AttributeKind::eDen: return detail::entity_density(doc, scheme);
        case AttributeKind::oDen: return detail::oov_density(doc, stats);
        case AttributeKind::eFre:
            return detail::ratio(
                detail::lookup(stats.entity_string_as_entity, surface_of(doc, span.start, span.end)),
                stats.total_entities);
        case AttributeKind::eCon:
            return entity_consistency(surface_of(doc, span.start, span.end), stats, mode);
        default:
            throw std::invalid_argument(std::string("span_attribute: ") + attribute_name(kind) +
                                        " is a token attribute");
    }
}

// Mean entity consistency of test gold spans grouped by span length (the
// consistency-per-entity-length curve).
inline std::map<std::size_t, double> consistency_by_length(const Corpus& test,
                                                           const TrainStats& stats,
                                                           Eq1Mode mode = Eq1Mode::narrative) {
    std::map<std::size_t, std::pair<double, std::int64_t>> acc;
    for (const auto& doc : test.documents)
        for (const auto& span : gold_spans(doc, test.scheme)) {
            auto& [sum, count] = acc[span.end - span.start];
            sum += entity_consistency(surface_of(doc, span.start, span.end), stats, mode);
            count += 1;
        }
    std::map<std::size_t, double> out;
    for (const auto& [len, sc] : acc) out[len] = sc.first / static_cast<double>(sc.second);
    return out;
}

// ---------------------------------------------------------------------------
// Bucketed performance
// ---------------------------------------------------------------------------

struct Bucket {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;  // member items (spans or tokens)
    EvalCounts eval;
};

struct BucketReport {
    AttributeKind attribute = AttributeKind::eLen;
    std::size_t requested_buckets = 0;
    std::vector<Bucket> buckets;
};

namespace detail {

// Equal-frequency cut points over sorted values; ties never straddle an edge.
inline std::vector<std::pair<double, double>> equal_frequency_edges(std::vector<double> values,
                                                                    std::size_t n_buckets) {
    std::sort(values.begin(), values.end());
    std::vector<double> distinct(values);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    n_buckets = std::min(n_buckets, distinct.size());
    std::vector<std::pair<double, double>> edges;
    if (values.empty() || n_buckets == 0) return edges;

    const std::size_t n = values.size();
    std::size_t begin = 0;
    for (std::size_t b = 0; b < n_buckets && begin < n; ++b) {
        std::size_t target = begin + (n - begin + (n_buckets - b) - 1) / (n_buckets - b);
        // extend past ties so equal values stay together
        while (target < n && values[target] == values[target - 1]) ++target;
        edges.emplace_back(values[begin], target < n ? values[target] : values[n - 1]);
        begin = target;
    }
    return edges;
}

// bucket index for a value given edges [lo_i, lo_{i+1}); last bucket closed
inline std::size_t bucket_index(const std::vector<std::pair<double, double>>& edges, double v) {
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        if (v < edges[i + 1].first) return i;
    return edges.empty() ? 0 : edges.size() - 1;
}

}  // namespace detail

// Partitions gold spans (entity attributes) or tokens (token and document
// attributes) into equal-frequency buckets by attribute value; each bucket
// carries span-level eval counts restricted to its members. For token-keyed
// bucketing a span is scored in the bucket of its start token.
inline BucketReport bucket_performance(AttributeKind kind, const Corpus& gold,
                                       const std::vector<std::vector<LabelId>>& predictions,
                                       const TrainStats& stats, std::size_t n_buckets,
                                       Eq1Mode mode = Eq1Mode::narrative) {
    if (n_buckets < 1) throw std::invalid_argument("bucket_performance: n_buckets must be >= 1");
    if (predictions.size() != gold.documents.size())
        throw std::invalid_argument("bucket_performance: prediction/document count mismatch");

    BucketReport report;
    report.attribute = kind;
    report.requested_buckets = n_buckets;
    const bool by_span = is_entity_attribute(kind);

    std::vector<double> member_values;
    for (std::size_t d = 0; d < gold.documents.size(); ++d) {
        const Document& doc = gold.documents[d];
        if (by_span) {
            for (const auto& span : gold_spans(doc, gold.scheme))
                member_values.push_back(span_attribute(kind, doc, span, gold.scheme, stats, mode));
        } else {
            for (std::size_t t = 0; t < doc.size(); ++t)
                member_values.push_back(token_attribute(kind, doc, t, gold.scheme, stats, mode));
        }
    }
    const auto edges = detail::equal_frequency_edges(member_values, n_buckets);
    report.buckets.resize(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        report.buckets[i].lo = edges[i].first;
        report.buckets[i].hi = edges[i].second;
    }
    if (edges.empty()) return report;

    for (double v : member_values) report.buckets[detail::bucket_index(edges, v)].count += 1;

    auto value_of_span = [&](const Document& doc, const EntitySpan& span) {
        return by_span ? span_attribute(kind, doc, span, gold.scheme, stats, mode)
                       : token_attribute(kind, doc, span.start, gold.scheme, stats, mode);
    };
    for (std::size_t d = 0; d < gold.documents.size(); ++d) {
        const Document& doc = gold.documents[d];
        if (predictions[d].size() != doc.size())
            throw std::invalid_argument("bucket_performance: length mismatch in document '" +
                                        doc.doc_id + "'");
        const auto gold_set = gold_spans(doc, gold.scheme);
        const std::set<EntitySpan> gold_sorted(gold_set.begin(), gold_set.end());
        for (const auto& span : gold_set)
            report.buckets[detail::bucket_index(edges, value_of_span(doc, span))].eval.gold += 1;
        for (const auto& span : decode_spans(predictions[d], gold.scheme, doc.doc_id)) {
            auto& bucket = report.buckets[detail::bucket_index(edges, value_of_span(doc, span))];
            bucket.eval.predicted += 1;
            if (gold_sorted.count(span)) bucket.eval.correct += 1;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Per-modifier consistency / prediction-agreement table
// ---------------------------------------------------------------------------

struct ModifierRow {
    std::string token;
    double train_tcon = 0.0;
    double test_tcon = 0.0;
    double agreement = 0.0;  // fraction of test occurrences predicted with the gold label
    bool present = false;    // false when the token occurs in neither split
};

inline std::vector<ModifierRow> modifier_report(const std::vector<std::string>& tokens,
                                                const Corpus& train, const Corpus& test,
                                                const std::vector<std::vector<LabelId>>& predictions,
                                                Eq1Mode mode = Eq1Mode::narrative) {
    if (tokens.empty()) throw std::invalid_argument("modifier_report: token list is empty");
    if (predictions.size() != test.documents.size())
        throw std::invalid_argument("modifier_report: prediction/document count mismatch");
    const TrainStats train_stats = build_train_stats(train);
    const TrainStats test_stats = build_train_stats(test);

    std::unordered_map<std::string, std::pair<std::int64_t, std::int64_t>> agree;  // match, total
    for (std::size_t d = 0; d < test.documents.size(); ++d) {
        const Document& doc = test.documents[d];
        if (predictions[d].size() != doc.size())
            throw std::invalid_argument("modifier_report: length mismatch in document '" +
                                        doc.doc_id + "'");
        for (std::size_t t = 0; t < doc.size(); ++t) {
            auto& [match, total] = agree[doc.tokens[t]];
            total += 1;
            if (predictions[d][t] == doc.gold_labels[t]) match += 1;
        }
    }

    std::vector<ModifierRow> rows;
    rows.reserve(tokens.size());
    for (const auto& tok : tokens) {
        ModifierRow row;
        row.token = tok;
        row.present = train_stats.token_occurrences.count(tok) != 0 ||
                      test_stats.token_occurrences.count(tok) != 0;
        if (row.present) {
            row.train_tcon = token_consistency(tok, train_stats, mode);
            row.test_tcon = token_consistency(tok, test_stats, mode);
            auto it = agree.find(tok);
            if (it != agree.end() && it->second.second > 0)
                row.agreement = static_cast<double>(it->second.first) /
                                static_cast<double>(it->second.second);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace conner
