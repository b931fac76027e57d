#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "conner/corpus.hpp"

namespace conner {

// Exact-match span counts with the usual scorer conventions: precision is 0
// when nothing is predicted against a non-empty gold set, and all three
// metrics are 1 when both sides are empty.
struct EvalCounts {
    std::int64_t gold = 0;
    std::int64_t predicted = 0;
    std::int64_t correct = 0;

    double precision() const {
        if (predicted == 0) return gold == 0 ? 1.0 : 0.0;
        return static_cast<double>(correct) / static_cast<double>(predicted);
    }
    double recall() const {
        if (gold == 0) return predicted == 0 ? 1.0 : 0.0;
        return static_cast<double>(correct) / static_cast<double>(gold);
    }
    double f1() const {
        const double p = precision();
        const double r = recall();
        return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }

    EvalCounts& operator+=(const EvalCounts& o) {
        gold += o.gold;
        predicted += o.predicted;
        correct += o.correct;
        return *this;
    }
};

struct EvalReport {
    EvalCounts micro;
    std::map<std::string, EvalCounts> per_type;
};

// A predicted span is correct iff (doc_id, start, end, type) all match a gold
// span; micro counts sum over documents and types.
inline EvalReport evaluate(const Corpus& gold, const std::vector<std::vector<LabelId>>& predictions) {
    if (predictions.size() != gold.documents.size())
        throw std::invalid_argument("evaluate: prediction count " +
                                    std::to_string(predictions.size()) + " != document count " +
                                    std::to_string(gold.documents.size()));
    EvalReport report;
    for (const auto& type : gold.scheme.entity_types()) report.per_type[type];  // stable key set

    for (std::size_t d = 0; d < gold.documents.size(); ++d) {
        const Document& doc = gold.documents[d];
        if (predictions[d].size() != doc.size())
            throw std::invalid_argument("evaluate: length mismatch in document '" + doc.doc_id +
                                        "' (" + std::to_string(predictions[d].size()) + " vs " +
                                        std::to_string(doc.size()) + ")");
        auto gold_set = decode_spans(doc.gold_labels, gold.scheme, doc.doc_id);
        auto pred_set = decode_spans(predictions[d], gold.scheme, doc.doc_id);
        std::set<EntitySpan> gold_sorted(gold_set.begin(), gold_set.end());
        for (const auto& s : gold_set) report.per_type[s.entity_type].gold += 1;
        for (const auto& s : pred_set) {
            auto& counts = report.per_type[s.entity_type];
            counts.predicted += 1;
            if (gold_sorted.count(s)) counts.correct += 1;
        }
    }
    for (const auto& [type, counts] : report.per_type) report.micro += counts;
    return report;
}

}  // namespace conner
