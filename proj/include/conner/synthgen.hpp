#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "conner/attributes.hpp"
#include "conner/corpus.hpp"
#include "conner/rng.hpp"

namespace conner {

// Controls for synthetic BIO corpora. Entities are [modifier]* + head
// templates drawn from a fixed per-type inventory; modifiers double as plain
// filler tokens so that their realized in-entity ratio converges to
// modifier_consistency.
struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t n_docs = 100;
    std::pair<std::size_t, std::size_t> sentences_per_doc{3, 6};
    int entity_types = 2;
    std::size_t head_vocab = 20;
    std::size_t modifier_vocab = 10;
    std::size_t filler_vocab = 30;
    double modifier_consistency = 0.3;  // q
    std::map<std::size_t, double> entity_length_dist{{1, 0.3}, {2, 0.3}, {3, 0.2}, {4, 0.15},
                                                     {5, 0.05}};
    double repeat_entity_rate = 0.2;
    // surface strings per type that entity mentions are drawn from; shared
    // surfaces across splits are what make consistency lookups meaningful
    std::size_t entity_inventory_per_type = 12;
    std::array<double, 3> split{0.8, 0.1, 0.1};

    double expected_entity_length() const {
        double total = 0.0, weighted = 0.0;
        for (const auto& [len, w] : entity_length_dist) {
            total += w;
            weighted += w * static_cast<double>(len);
        }
        return weighted / total;
    }

    void validate() const {
        if (n_docs < 1) throw std::invalid_argument("SynthSpec: n_docs must be >= 1");
        if (entity_types < 1) throw std::invalid_argument("SynthSpec: entity_types must be >= 1");
        if (head_vocab < 1 || modifier_vocab < 1 || filler_vocab < 1)
            throw std::invalid_argument("SynthSpec: empty vocabulary");
        if (modifier_consistency < 0.0 || modifier_consistency > 1.0)
            throw std::invalid_argument("SynthSpec: modifier_consistency outside [0,1]");
        if (repeat_entity_rate < 0.0 || repeat_entity_rate > 1.0)
            throw std::invalid_argument("SynthSpec: repeat_entity_rate outside [0,1]");
        if (sentences_per_doc.first < 1 || sentences_per_doc.first > sentences_per_doc.second)
            throw std::invalid_argument("SynthSpec: bad sentences_per_doc range");
        if (entity_length_dist.empty())
            throw std::invalid_argument("SynthSpec: entity_length_dist is empty");
        for (const auto& [len, w] : entity_length_dist)
            if (len < 1 || w <= 0.0)
                throw std::invalid_argument("SynthSpec: entity_length_dist entries must have "
                                            "length >= 1 and positive weight");
        if (entity_inventory_per_type < 1)
            throw std::invalid_argument("SynthSpec: entity_inventory_per_type must be >= 1");
        const double total = split[0] + split[1] + split[2];
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("SynthSpec: split fractions must sum to 1");
        if (modifier_consistency > 0.0 && expected_entity_length() <= 1.0 + 1e-12)
            throw std::invalid_argument(
                "SynthSpec: modifier_consistency > 0 needs entities longer than 1 token");
    }
};

struct GeneratedDoc {
    Document doc;
    std::vector<EntitySpan> spans;  // generator's own span list, for verification
};

struct SynthCorpora {
    Corpus train, dev, test;
};

namespace synth_detail {

inline std::string head_token(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "head_%03zu", i);
    return buf;
}
inline std::string mod_token(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mod_%03zu", i);
    return buf;
}
inline std::string fill_token(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fill_%03zu", i);
    return buf;
}

struct InventoryEntry {
    std::vector<std::string> tokens;
    int type_index = 0;
};

inline std::size_t sample_length(const SynthSpec& spec, std::mt19937_64& rng) {
    double total = 0.0;
    for (const auto& [len, w] : spec.entity_length_dist) total += w;
    std::uniform_real_distribution<double> dist(0.0, total);
    double u = dist(rng);
    for (const auto& [len, w] : spec.entity_length_dist) {
        u -= w;
        if (u <= 0.0) return len;
    }
    return spec.entity_length_dist.rbegin()->first;
}

// Per-type entity surface inventory with modifier and head usage balanced
// round-robin, so every modifier's in-entity rate is (nearly) equal.
inline std::vector<InventoryEntry> build_inventory(const SynthSpec& spec) {
    auto rng = make_rng(derive_seed(spec.seed, "inventory"));
    const int t_count = spec.entity_types;

    std::vector<std::vector<std::size_t>> heads_by_type(t_count);
    for (std::size_t h = 0; h < spec.head_vocab; ++h)
        heads_by_type[h % static_cast<std::size_t>(t_count)].push_back(h);

    std::vector<std::size_t> mod_queue;
    auto next_modifier = [&]() {
        if (mod_queue.empty()) {
            mod_queue.resize(spec.modifier_vocab);
            std::iota(mod_queue.begin(), mod_queue.end(), 0);
            std::shuffle(mod_queue.begin(), mod_queue.end(), rng);
        }
        const std::size_t m = mod_queue.back();
        mod_queue.pop_back();
        return m;
    };

    std::uniform_int_distribution<std::size_t> filler_pick(0, spec.filler_vocab - 1);
    std::vector<InventoryEntry> inventory;
    for (int type = 0; type < t_count; ++type) {
        const auto& heads = heads_by_type[static_cast<std::size_t>(type)];
        for (std::size_t k = 0; k < spec.entity_inventory_per_type; ++k) {
            InventoryEntry entry;
            entry.type_index = type;
            const std::size_t len = sample_length(spec, rng);
            for (std::size_t i = 0; i + 1 < len; ++i) {
                // q = 0 means modifiers never appear inside entities
                entry.tokens.push_back(spec.modifier_consistency > 0.0
                                           ? mod_token(next_modifier())
                                           : fill_token(filler_pick(rng)));
            }
            entry.tokens.push_back(head_token(heads[k % heads.size()]));
            inventory.push_back(std::move(entry));
        }
    }
    return inventory;
}

struct ChunkRates {
    double entity = 0.0;
    double bare_modifier = 0.0;
};

inline ChunkRates chunk_rates(const SynthSpec& spec) {
    constexpr double kBudget = 0.45;  // combined share of entity + bare-modifier chunks
    const double q = spec.modifier_consistency;
    if (q >= 1.0) return {kBudget, 0.0};
    if (q <= 0.0) return {kBudget / 2.0, kBudget / 2.0};
    const double mods_per_entity = spec.expected_entity_length() - 1.0;
    const double k = mods_per_entity * (1.0 - q) / q;
    const double entity = kBudget / (1.0 + k);
    return {entity, entity * k};
}

}  // namespace synth_detail

inline std::vector<std::string> synth_entity_types(int count) {
    std::vector<std::string> types;
    for (int t = 0; t < count; ++t) types.push_back("type_" + std::to_string(t));
    return types;
}

// All documents, in order; deterministic per document given (seed, index).
inline std::vector<GeneratedDoc> generate_documents(const SynthSpec& spec) {
    spec.validate();
    const auto inventory = synth_detail::build_inventory(spec);
    const auto rates = synth_detail::chunk_rates(spec);
    const auto types = synth_entity_types(spec.entity_types);

    std::vector<GeneratedDoc> docs;
    docs.reserve(spec.n_docs);
    for (std::size_t d = 0; d < spec.n_docs; ++d) {
        auto rng = make_rng(derive_seed(spec.seed, d));
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> sent_count(spec.sentences_per_doc.first,
                                                              spec.sentences_per_doc.second);
        std::uniform_int_distribution<std::size_t> chunk_count(4, 8);
        std::uniform_int_distribution<std::size_t> mod_pick(0, spec.modifier_vocab - 1);
        std::uniform_int_distribution<std::size_t> fill_pick(0, spec.filler_vocab - 1);
        std::uniform_int_distribution<std::size_t> entry_pick(0, inventory.size() - 1);

        GeneratedDoc gen;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "synth_%06zu", d);
        gen.doc.doc_id = idbuf;
        std::vector<const synth_detail::InventoryEntry*> seen;  // for in-doc repetition

        const std::size_t n_sent = sent_count(rng);
        for (std::size_t s = 0; s < n_sent; ++s) {
            const std::size_t n_chunks = chunk_count(rng);
            for (std::size_t c = 0; c < n_chunks; ++c) {
                const double u = coin(rng);
                if (u < rates.entity) {
                    const synth_detail::InventoryEntry* entry = nullptr;
                    if (!seen.empty() && coin(rng) < spec.repeat_entity_rate) {
                        std::uniform_int_distribution<std::size_t> pick(0, seen.size() - 1);
                        entry = seen[pick(rng)];
                    } else {
                        entry = &inventory[entry_pick(rng)];
                    }
                    const std::size_t start = gen.doc.tokens.size();
                    const auto type_idx = static_cast<std::size_t>(entry->type_index);
                    for (std::size_t i = 0; i < entry->tokens.size(); ++i) {
                        gen.doc.tokens.push_back(entry->tokens[i]);
                        gen.doc.gold_labels.push_back(i == 0 ? 1 + 2 * entry->type_index
                                                             : 2 + 2 * entry->type_index);
                    }
                    gen.spans.push_back({gen.doc.doc_id, start, gen.doc.tokens.size(),
                                         types[type_idx]});
                    seen.push_back(entry);
                } else if (u < rates.entity + rates.bare_modifier) {
                    gen.doc.tokens.push_back(synth_detail::mod_token(mod_pick(rng)));
                    gen.doc.gold_labels.push_back(LabelScheme::kOutside);
                } else {
                    gen.doc.tokens.push_back(synth_detail::fill_token(fill_pick(rng)));
                    gen.doc.gold_labels.push_back(LabelScheme::kOutside);
                }
            }
            gen.doc.sentence_ends.push_back(gen.doc.tokens.size());
        }
        docs.push_back(std::move(gen));
    }
    return docs;
}

inline SynthCorpora generate(const SynthSpec& spec) {
    auto docs = generate_documents(spec);
    const LabelScheme scheme(synth_entity_types(spec.entity_types));
    SynthCorpora out;
    out.train.scheme = out.dev.scheme = out.test.scheme = scheme;

    const std::size_t n = docs.size();
    const auto n_train = static_cast<std::size_t>(spec.split[0] * static_cast<double>(n) + 0.5);
    auto n_dev = static_cast<std::size_t>(spec.split[1] * static_cast<double>(n) + 0.5);
    n_dev = std::min(n_dev, n - std::min(n, n_train));
    for (std::size_t d = 0; d < n; ++d) {
        Corpus& target = d < n_train ? out.train : (d < n_train + n_dev ? out.dev : out.test);
        target.documents.push_back(std::move(docs[d].doc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Realized-attribute summary, closing the loop against the attribute tables.
// ---------------------------------------------------------------------------

struct MeasureReport {
    std::map<std::string, double> modifier_tcon;  // realized, per modifier in this corpus
    double mean_modifier_tcon = 0.0;
    std::map<std::size_t, std::int64_t> entity_length_histogram;
    double mean_eden = 0.0;
    double mean_oden = 0.0;  // against the supplied (typically training) stats
};

inline MeasureReport measure(const Corpus& corpus, const TrainStats& stats,
                             const std::string& modifier_prefix = "mod_") {
    MeasureReport report;
    const TrainStats own = build_train_stats(corpus);
    double tcon_sum = 0.0;
    for (const auto& [tok, occ] : own.token_occurrences) {
        if (tok.rfind(modifier_prefix, 0) != 0) continue;
        const double tcon = token_consistency(tok, own);
        report.modifier_tcon[tok] = tcon;
        tcon_sum += tcon;
        (void)occ;
    }
    if (!report.modifier_tcon.empty())
        report.mean_modifier_tcon = tcon_sum / static_cast<double>(report.modifier_tcon.size());

    for (const auto& doc : corpus.documents)
        for (const auto& span : gold_spans(doc, corpus.scheme))
            report.entity_length_histogram[span.end - span.start] += 1;

    if (!corpus.documents.empty()) {
        double eden = 0.0, oden = 0.0;
        for (const auto& doc : corpus.documents) {
            eden += detail::entity_density(doc, corpus.scheme);
            oden += detail::oov_density(doc, stats);
        }
        report.mean_eden = eden / static_cast<double>(corpus.documents.size());
        report.mean_oden = oden / static_cast<double>(corpus.documents.size());
    }
    return report;
}

}  // namespace conner
