#pragma once

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace conner {

using LabelId = int;

// BIO tag set over an ordered list of entity types. Label ids are fixed:
// O = 0, B-type_k = 1 + 2k, I-type_k = 2 + 2k, so label_count = 2T + 1.
class LabelScheme {
public:
    static constexpr LabelId kOutside = 0;

    LabelScheme() = default;

    explicit LabelScheme(std::vector<std::string> entity_types)
        : entity_types_(std::move(entity_types)) {
        if (entity_types_.empty())
            throw std::invalid_argument("LabelScheme: at least one entity type required");
        for (std::size_t i = 0; i < entity_types_.size(); ++i) {
            if (!type_index_.emplace(entity_types_[i], static_cast<int>(i)).second)
                throw std::invalid_argument("LabelScheme: duplicate type '" + entity_types_[i] +
                                            "'");
        }
    }

    int type_count() const { return static_cast<int>(entity_types_.size()); }
    int label_count() const { return 2 * type_count() + 1; }
    const std::vector<std::string>& entity_types() const { return entity_types_; }

    LabelId begin_label(int type_index) const { return 1 + 2 * type_index; }
    LabelId inside_label(int type_index) const { return 2 + 2 * type_index; }

    bool valid(LabelId id) const { return id >= 0 && id < label_count(); }
    bool is_outside(LabelId id) const { return id == kOutside; }
    bool is_begin(LabelId id) const { return id > 0 && id % 2 == 1; }
    bool is_inside(LabelId id) const { return id > 0 && id % 2 == 0; }

    // type index of a B-/I- label; -1 for O
    int type_of(LabelId id) const { return id == kOutside ? -1 : (id - 1) / 2; }

    std::string label_name(LabelId id) const {
        if (!valid(id)) throw std::out_of_range("LabelScheme: bad label id");
        if (id == kOutside) return "O";
        return (is_begin(id) ? "B-" : "I-") + entity_types_[static_cast<std::size_t>(type_of(id))];
    }

    std::optional<LabelId> label_id(std::string_view name) const {
        if (name == "O") return kOutside;
        if (name.size() < 3 || name[1] != '-') return std::nullopt;
        auto it = type_index_.find(std::string(name.substr(2)));
        if (it == type_index_.end()) return std::nullopt;
        if (name[0] == 'B') return begin_label(it->second);
        if (name[0] == 'I') return inside_label(it->second);
        return std::nullopt;
    }

    std::optional<int> type_index_of(std::string_view type_name) const {
        auto it = type_index_.find(std::string(type_name));
        if (it == type_index_.end()) return std::nullopt;
        return it->second;
    }

    friend bool operator==(const LabelScheme& a, const LabelScheme& b) {
        return a.entity_types_ == b.entity_types_;
    }

private:
    std::vector<std::string> entity_types_;
    std::unordered_map<std::string, int> type_index_;
};

struct Document {
    std::string doc_id;
    std::vector<std::string> tokens;
    // exclusive end offset of each sentence; strictly increasing, last == tokens.size()
    std::vector<std::size_t> sentence_ends;
    std::vector<LabelId> gold_labels;

    std::size_t size() const { return tokens.size(); }
    std::size_t n_sentences() const { return sentence_ends.size(); }

    std::pair<std::size_t, std::size_t> sentence_range(std::size_t s) const {
        if (s >= sentence_ends.size()) throw std::out_of_range("Document: bad sentence index");
        return {s == 0 ? 0 : sentence_ends[s - 1], sentence_ends[s]};
    }
};

struct Corpus {
    LabelScheme scheme;
    std::vector<Document> documents;

    std::size_t total_tokens() const {
        std::size_t n = 0;
        for (const auto& d : documents) n += d.size();
        return n;
    }
};

// Typed, character-free token-index span; end is exclusive.
struct EntitySpan {
    std::string doc_id;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string entity_type;

    friend bool operator==(const EntitySpan& a, const EntitySpan& b) {
        return a.doc_id == b.doc_id && a.start == b.start && a.end == b.end &&
               a.entity_type == b.entity_type;
    }
    friend bool operator<(const EntitySpan& a, const EntitySpan& b) {
        return std::tie(a.doc_id, a.start, a.end, a.entity_type) <
               std::tie(b.doc_id, b.start, b.end, b.entity_type);
    }
};

struct ParseError : std::runtime_error {
    std::size_t line_number;
    ParseError(std::size_t line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message),
          line_number(line) {}
};

// ---------------------------------------------------------------------------
// CoNLL-style parsing: one "token<TAB>label" per line, blank line = sentence
// boundary, a line whose token column is exactly -DOCSTART- opens a new
// document (its optional label column is ignored). UTF-8 throughout.
// ---------------------------------------------------------------------------

inline Corpus parse_conll(std::istream& in, const LabelScheme& scheme) {
    Corpus corpus;
    corpus.scheme = scheme;

    Document current;
    bool have_doc = false;
    std::size_t line_no = 0;

    auto flush_sentence = [&] {
        if (!current.tokens.empty() &&
            (current.sentence_ends.empty() || current.sentence_ends.back() < current.tokens.size()))
            current.sentence_ends.push_back(current.tokens.size());
    };
    auto flush_document = [&] {
        flush_sentence();
        if (have_doc) {
            current.doc_id = "doc_" + std::to_string(corpus.documents.size());
            corpus.documents.push_back(std::move(current));
            current = Document{};
        }
    };

    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush_sentence();
            continue;
        }
        const auto tab = line.find('\t');
        const std::string token = tab == std::string::npos ? line : line.substr(0, tab);
        if (token == "-DOCSTART-") {
            flush_document();
            have_doc = true;
            continue;
        }
        if (tab == std::string::npos)
            throw ParseError(line_no, "expected token<TAB>label, got '" + line + "'");
        const std::string label = line.substr(tab + 1);
        if (label.find('\t') != std::string::npos)
            throw ParseError(line_no, "more than two columns");
        if (token.empty()) throw ParseError(line_no, "empty token column");
        const auto id = scheme.label_id(label);
        if (!id) throw ParseError(line_no, "unknown label '" + label + "'");
        have_doc = true;  // tokens before any -DOCSTART- open an implicit document
        current.tokens.push_back(token);
        current.gold_labels.push_back(*id);
    }
    flush_document();
    return corpus;
}

inline Corpus parse_conll(const std::string& text, const LabelScheme& scheme) {
    std::istringstream in(text);
    return parse_conll(in, scheme);
}

// Pre-pass that recovers the tag set of a CoNLL file: entity type names are
// collected from B-/I- labels and sorted for a deterministic scheme.
inline LabelScheme infer_label_scheme(std::istream& in) {
    std::set<std::string> types;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        const std::string_view label = std::string_view(line).substr(tab + 1);
        if (label.size() >= 3 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-')
            types.insert(std::string(label.substr(2)));
    }
    if (types.empty()) throw std::runtime_error("no B-/I- labels found; cannot infer a tag set");
    return LabelScheme(std::vector<std::string>(types.begin(), types.end()));
}

inline LabelScheme infer_label_scheme(const std::string& text) {
    std::istringstream in(text);
    return infer_label_scheme(in);
}

inline void write_conll(std::ostream& out, const Corpus& corpus) {
    for (const auto& doc : corpus.documents) {
        out << "-DOCSTART-\n\n";
        for (std::size_t s = 0; s < doc.n_sentences(); ++s) {
            const auto [begin, end] = doc.sentence_range(s);
            for (std::size_t t = begin; t < end; ++t)
                out << doc.tokens[t] << '\t' << corpus.scheme.label_name(doc.gold_labels[t])
                    << '\n';
            out << '\n';
        }
    }
}

inline std::string write_conll(const Corpus& corpus) {
    std::ostringstream out;
    write_conll(out, corpus);
    return out.str();
}

// ---------------------------------------------------------------------------
// Span <-> label codecs
// ---------------------------------------------------------------------------

enum class BioMode {
    lenient,  // I-X after O, document start, or a different type opens a new chunk
    strict,   // such sequences are rejected
};

inline std::vector<EntitySpan> decode_spans(std::span<const LabelId> labels,
                                            const LabelScheme& scheme,
                                            const std::string& doc_id = "",
                                            BioMode mode = BioMode::lenient) {
    std::vector<EntitySpan> spans;
    int open_type = -1;
    std::size_t open_start = 0;
    auto close = [&](std::size_t end) {
        if (open_type >= 0) {
            spans.push_back({doc_id, open_start, end,
                             scheme.entity_types()[static_cast<std::size_t>(open_type)]});
            open_type = -1;
        }
    };
    for (std::size_t t = 0; t < labels.size(); ++t) {
        const LabelId id = labels[t];
        if (!scheme.valid(id)) throw std::invalid_argument("decode_spans: invalid label id");
        if (scheme.is_outside(id)) {
            close(t);
        } else if (scheme.is_begin(id)) {
            close(t);
            open_type = scheme.type_of(id);
            open_start = t;
        } else {  // I-X
            const int type = scheme.type_of(id);
            if (open_type == type) continue;  // extends the open chunk
            if (mode == BioMode::strict)
                throw std::invalid_argument("decode_spans: ill-formed I-" +
                                            scheme.entity_types()[static_cast<std::size_t>(type)] +
                                            " at position " + std::to_string(t));
            close(t);
            open_type = type;
            open_start = t;
        }
    }
    close(labels.size());
    return spans;
}

inline std::vector<LabelId> encode_spans(std::vector<EntitySpan> spans, std::size_t length,
                                         const LabelScheme& scheme) {
    std::sort(spans.begin(), spans.end());
    std::vector<LabelId> labels(length, LabelScheme::kOutside);
    std::size_t prev_end = 0;
    bool first = true;
    for (const auto& span : spans) {
        if (span.start >= span.end || span.end > length)
            throw std::invalid_argument("encode_spans: span out of range");
        if (!first && span.start < prev_end)
            throw std::invalid_argument("encode_spans: overlapping spans");
        const auto type = scheme.type_index_of(span.entity_type);
        if (!type) throw std::invalid_argument("encode_spans: unknown type '" + span.entity_type +
                                               "'");
        labels[span.start] = scheme.begin_label(*type);
        for (std::size_t t = span.start + 1; t < span.end; ++t)
            labels[t] = scheme.inside_label(*type);
        prev_end = span.end;
        first = false;
    }
    return labels;
}

inline std::vector<EntitySpan> gold_spans(const Document& doc, const LabelScheme& scheme) {
    return decode_spans(doc.gold_labels, scheme, doc.doc_id);
}

}  // namespace conner
