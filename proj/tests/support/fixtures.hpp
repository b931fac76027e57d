#pragma once

#include <string>
#include <utility>
#include <vector>

#include "conner/corpus.hpp"

namespace fixtures {

using TokenLine = std::pair<std::string, std::string>;  // token, label name
using Sentence = std::vector<TokenLine>;

inline conner::Document build_document(const conner::LabelScheme& scheme, std::string doc_id,
                                       const std::vector<Sentence>& sentences) {
    conner::Document doc;
    doc.doc_id = std::move(doc_id);
    for (const auto& sentence : sentences) {
        for (const auto& [token, label] : sentence) {
            doc.tokens.push_back(token);
            doc.gold_labels.push_back(*scheme.label_id(label));
        }
        doc.sentence_ends.push_back(doc.tokens.size());
    }
    return doc;
}

inline conner::Corpus build_corpus(const conner::LabelScheme& scheme,
                                   const std::vector<std::vector<Sentence>>& docs) {
    conner::Corpus corpus;
    corpus.scheme = scheme;
    for (std::size_t d = 0; d < docs.size(); ++d)
        corpus.documents.push_back(build_document(scheme, "doc_" + std::to_string(d), docs[d]));
    return corpus;
}

// Train split of the modifier case-study fixture:
//   "primary"  occurs 100 times, 11 of them inside entities  -> tCon 0.11
//   "abnormal" occurs 100 times, 94 of them inside entities  -> tCon 0.94
inline conner::Corpus modifier_case_train() {
    const conner::LabelScheme scheme({"Disease"});
    std::vector<Sentence> sentences;
    for (int i = 0; i < 11; ++i)
        sentences.push_back({{"primary", "B-Disease"}, {"cancer", "I-Disease"}});
    for (int i = 0; i < 89; ++i) sentences.push_back({{"primary", "O"}, {"care", "O"}});
    for (int i = 0; i < 94; ++i)
        sentences.push_back({{"abnormal", "B-Disease"}, {"growth", "I-Disease"}});
    for (int i = 0; i < 6; ++i) sentences.push_back({{"abnormal", "O"}, {"readings", "O"}});
    return build_corpus(scheme, {sentences});
}

// Test split: "primary" never labeled as entity material, "abnormal" always.
inline conner::Corpus modifier_case_test() {
    const conner::LabelScheme scheme({"Disease"});
    std::vector<Sentence> sentences;
    for (int i = 0; i < 5; ++i) sentences.push_back({{"primary", "O"}, {"school", "O"}});
    for (int i = 0; i < 4; ++i)
        sentences.push_back({{"abnormal", "B-Disease"}, {"growth", "I-Disease"}});
    return build_corpus(scheme, {sentences});
}

}  // namespace fixtures
