#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conner/corpus.hpp"
#include "conner/kernels.hpp"
#include "conner/lstm.hpp"
#include "conner/matrix.hpp"
#include "conner/param_store.hpp"

namespace conner {

enum class ContextMode { sentence, document };
enum class InferenceRefine { off, two_pass };

inline const char* to_string(ContextMode m) {
    return m == ContextMode::sentence ? "sentence" : "document";
}
inline const char* to_string(InferenceRefine m) {
    return m == InferenceRefine::off ? "off" : "two_pass";
}
inline ContextMode context_mode_from(std::string_view s) {
    if (s == "sentence") return ContextMode::sentence;
    if (s == "document") return ContextMode::document;
    throw std::invalid_argument("unknown context mode '" + std::string(s) + "'");
}
inline InferenceRefine inference_refine_from(std::string_view s) {
    if (s == "off") return InferenceRefine::off;
    if (s == "two_pass") return InferenceRefine::two_pass;
    throw std::invalid_argument("unknown inference refine mode '" + std::string(s) + "'");
}

struct ModelConfig {
    std::map<std::string, int> vocab;  // token -> embedding row; row 0 is UNK
    int embed_dim = 16;
    int encoder_hidden = 16;
    int refine_hidden = 8;
    int label_count = 0;
    ContextMode context_mode = ContextMode::document;
    double gamma = 0.3;
    double lambda1 = 1.0;
    double lambda2 = 1e-1;
    double lambda3 = 1e-3;
    InferenceRefine inference_refine = InferenceRefine::off;

    void validate() const {
        if (embed_dim < 1 || encoder_hidden < 1 || refine_hidden < 1)
            throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
        if (label_count < 3 || label_count % 2 == 0)
            throw std::invalid_argument("ModelConfig: label_count must be odd and >= 3");
        if (!std::isfinite(gamma)) throw std::invalid_argument("ModelConfig: gamma must be finite");
        if (!(lambda1 > 0.0)) throw std::invalid_argument("ModelConfig: lambda1 must be > 0");
        if (lambda2 < 0.0 || lambda3 < 0.0)
            throw std::invalid_argument("ModelConfig: lambdas must be >= 0");
    }

    friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
        return a.vocab == b.vocab && a.embed_dim == b.embed_dim &&
               a.encoder_hidden == b.encoder_hidden && a.refine_hidden == b.refine_hidden &&
               a.label_count == b.label_count && a.context_mode == b.context_mode &&
               a.gamma == b.gamma && a.lambda1 == b.lambda1 && a.lambda2 == b.lambda2 &&
               a.lambda3 == b.lambda3 && a.inference_refine == b.inference_refine;
    }
};

// Vocabulary over the training corpus, sorted for determinism; id 0 is UNK.
inline std::map<std::string, int> build_vocab(const Corpus& train) {
    std::set<std::string> tokens;
    for (const auto& doc : train.documents) tokens.insert(doc.tokens.begin(), doc.tokens.end());
    std::map<std::string, int> vocab;
    int next = 1;
    for (const auto& tok : tokens) vocab.emplace(tok, next++);
    return vocab;
}

struct LossBreakdown {
    double class_loss = 0.0;
    double label_loss = 0.0;
    double distill_loss = 0.0;
    double total = 0.0;
};

// Per-window trace of the full forward pass. Off-mask rows of `l` are
// all-zero sentinels; p_final equals p_raw wherever refined_mask is false.
struct ForwardTrace {
    RealMatrix reps;     // [N x rep_dim]
    RealMatrix p_raw;    // [N x L]
    RealMatrix l;        // [N x L]
    RealMatrix p_final;  // [N x L]
    std::vector<double> uncertainty;
    std::vector<std::uint8_t> entity_mask;
    std::vector<std::uint8_t> refined_mask;
};

// Span relative to a window, used for refinement masks.
struct MaskSpan {
    std::size_t start = 0;
    std::size_t end = 0;
};

class ConnerModel {
public:
    ModelConfig config;
    ParamStore params;

    static constexpr int kSchemaVersion = 1;

    static ConnerModel init(ModelConfig cfg, std::uint64_t seed) {
        cfg.validate();
        ConnerModel model;
        model.config = std::move(cfg);
        model.build_specs();
        const auto& c = model.config;
        auto re = make_rng(derive_seed(seed, "embedding"));
        model.params.add("embedding",
                         RealMatrix::uniform(static_cast<std::size_t>(c.vocab.size()) + 1,
                                             static_cast<std::size_t>(c.embed_dim), -0.1, 0.1, re));
        add_birnn_params(model.params, model.encoder_, seed);
        const std::size_t rep = model.rep_dim();
        const std::size_t mh = static_cast<std::size_t>(c.encoder_hidden);
        const std::size_t labels = static_cast<std::size_t>(c.label_count);
        auto add_affine = [&](const std::string& w, const std::string& b, std::size_t in,
                              std::size_t out) {
            auto rw = make_rng(derive_seed(seed, w));
            const double s = 1.0 / std::sqrt(static_cast<double>(in));
            model.params.add(w, RealMatrix::uniform(in, out, -s, s, rw));
            model.params.add(b, RealMatrix::zeros(1, out));
        };
        add_affine("mlp.W1", "mlp.b1", rep, mh);
        add_affine("mlp.W2", "mlp.b2", mh, labels);
        add_birnn_params(model.params, model.refiner_, seed);
        add_affine("refine.proj.W", "refine.proj.b", 2 * static_cast<std::size_t>(c.refine_hidden),
                   labels);
        return model;
    }

    // A model around an existing parameter set (checkpoint loading).
    static ConnerModel from_params(ModelConfig cfg, ParamStore params) {
        cfg.validate();
        ConnerModel model;
        model.config = std::move(cfg);
        model.params = std::move(params);
        model.build_specs();
        model.check_shapes();
        return model;
    }

    std::size_t rep_dim() const { return 2 * static_cast<std::size_t>(config.encoder_hidden); }

    int token_id(const std::string& token) const {
        auto it = config.vocab.find(token);
        return it == config.vocab.end() ? 0 : it->second;
    }

    const BiRnnSpec& encoder_spec() const { return encoder_; }
    const BiRnnSpec& refiner_spec() const { return refiner_; }

private:
    void build_specs() {
        encoder_ = make_birnn_spec("encoder", static_cast<std::size_t>(config.embed_dim),
                                   static_cast<std::size_t>(config.encoder_hidden));
        refiner_ = make_birnn_spec("refine.rnn", rep_dim(),
                                   static_cast<std::size_t>(config.refine_hidden));
    }

    void check_shapes() const {
        require_shape(params.value("embedding"), config.vocab.size() + 1,
                      static_cast<std::size_t>(config.embed_dim), "embedding");
        require_shape(params.value("mlp.W1"), rep_dim(),
                      static_cast<std::size_t>(config.encoder_hidden), "mlp.W1");
        require_shape(params.value("mlp.W2"), static_cast<std::size_t>(config.encoder_hidden),
                      static_cast<std::size_t>(config.label_count), "mlp.W2");
        require_shape(params.value("refine.proj.W"),
                      2 * static_cast<std::size_t>(config.refine_hidden),
                      static_cast<std::size_t>(config.label_count), "refine.proj.W");
    }

    BiRnnSpec encoder_;
    BiRnnSpec refiner_;
};

// ---------------------------------------------------------------------------
// Forward pieces
// ---------------------------------------------------------------------------

struct EncodeCache {
    std::vector<int> ids;
    RealMatrix x;  // embedded inputs
    BiRnnCache rnn;
};

// Contextual representations for doc tokens in [begin, end).
inline RealMatrix encode(const ConnerModel& model, const Document& doc, std::size_t begin,
                         std::size_t end, EncodeCache* cache = nullptr) {
    if (begin >= end || end > doc.size())
        throw std::invalid_argument("encode: empty or out-of-range window");
    const std::size_t n = end - begin;
    const RealMatrix& emb = model.params.value("embedding");
    RealMatrix x(n, emb.cols());
    std::vector<int> ids(n);
    for (std::size_t t = 0; t < n; ++t) {
        ids[t] = model.token_id(doc.tokens[begin + t]);
        const auto row = emb.row(static_cast<std::size_t>(ids[t]));
        std::copy(row.begin(), row.end(), x.row(t).begin());
    }
    RealMatrix reps = birnn_forward(model.params, model.encoder_spec(), x,
                                    cache ? &cache->rnn : nullptr);
    if (cache) {
        cache->ids = std::move(ids);
        cache->x = std::move(x);
    }
    return reps;
}

// Contiguous slice reps[start:end) of an entity span.
inline RealMatrix entity_representation(const RealMatrix& reps, std::size_t start,
                                        std::size_t end) {
    if (start >= end || end > reps.rows())
        throw std::out_of_range("entity_representation: span out of range");
    RealMatrix out(end - start, reps.cols());
    for (std::size_t i = start; i < end; ++i) {
        const auto src = reps.row(i);
        std::copy(src.begin(), src.end(), out.row(i - start).begin());
    }
    return out;
}

struct ClassifyCache {
    RealMatrix hidden;  // post-tanh
};

// Two-layer MLP head with per-token softmax.
inline RealMatrix classify(const ConnerModel& model, const RealMatrix& reps,
                           ClassifyCache* cache = nullptr) {
    RealMatrix hidden = tanh_map(
        affine(reps, model.params.value("mlp.W1"), model.params.value("mlp.b1")));
    RealMatrix p_raw =
        softmax(affine(hidden, model.params.value("mlp.W2"), model.params.value("mlp.b2")));
    if (cache) cache->hidden = std::move(hidden);
    return p_raw;
}

inline std::vector<std::uint8_t> mask_from_spans(const std::vector<MaskSpan>& spans,
                                                 std::size_t n) {
    std::vector<std::uint8_t> mask(n, 0);
    for (const auto& span : spans) {
        if (span.start >= span.end || span.end > n)
            throw std::invalid_argument("mask_from_spans: span out of range");
        for (std::size_t t = span.start; t < span.end; ++t) {
            if (mask[t]) throw std::invalid_argument("mask_from_spans: overlapping spans");
            mask[t] = 1;
        }
    }
    return mask;
}

struct RefineCache {
    RealMatrix masked;  // entity-masked reps fed to the refinement recurrence
    BiRnnCache rnn;
    RealMatrix rnn_out;
    RealMatrix l_probs;  // softmax over all rows; only entity rows are exposed
};

// Entity-masked refinement head: non-entity representations are zeroed, the
// masked sequence runs through the refinement BiLSTM, and a linear projection
// plus softmax yields label distributions at entity positions. Off-mask rows
// of the result are all-zero sentinels.
inline RealMatrix refine(const ConnerModel& model, const RealMatrix& reps,
                         const std::vector<std::uint8_t>& entity_mask,
                         RefineCache* cache = nullptr) {
    if (entity_mask.size() != reps.rows())
        throw std::invalid_argument("refine: mask length mismatch");
    const std::size_t n = reps.rows();
    RealMatrix l(n, static_cast<std::size_t>(model.config.label_count));
    const bool any = std::any_of(entity_mask.begin(), entity_mask.end(),
                                 [](std::uint8_t m) { return m != 0; });
    if (!any) {
        if (cache) *cache = RefineCache{};
        return l;
    }

    RealMatrix masked(n, reps.cols());
    for (std::size_t t = 0; t < n; ++t) {
        if (!entity_mask[t]) continue;
        const auto src = reps.row(t);
        std::copy(src.begin(), src.end(), masked.row(t).begin());
    }
    RefineCache local;
    RefineCache* c = cache ? cache : &local;
    c->masked = std::move(masked);
    c->rnn_out = birnn_forward(model.params, model.refiner_spec(), c->masked, &c->rnn);
    c->l_probs = softmax(
        affine(c->rnn_out, model.params.value("refine.proj.W"), model.params.value("refine.proj.b")));
    for (std::size_t t = 0; t < n; ++t) {
        if (!entity_mask[t]) continue;
        const auto src = c->l_probs.row(t);
        std::copy(src.begin(), src.end(), l.row(t).begin());
    }
    return l;
}

inline RealMatrix refine(const ConnerModel& model, const RealMatrix& reps,
                         const std::vector<MaskSpan>& spans, RefineCache* cache = nullptr) {
    return refine(model, reps, mask_from_spans(spans, reps.rows()), cache);
}

struct CombineResult {
    RealMatrix p_final;
    std::vector<std::uint8_t> refined_mask;
};

// Gated combination: tokens inside the entity mask whose uncertainty exceeds
// gamma take (p_raw + l) / 2; everything else keeps p_raw.
inline CombineResult combine(const RealMatrix& p_raw, const RealMatrix& l,
                             const std::vector<double>& uncertainty, double gamma,
                             const std::vector<std::uint8_t>& entity_mask) {
    if (!p_raw.same_shape(l)) throw std::invalid_argument("combine: shape mismatch");
    if (uncertainty.size() != p_raw.rows() || entity_mask.size() != p_raw.rows())
        throw std::invalid_argument("combine: mask/uncertainty length mismatch");
    CombineResult result;
    result.p_final = p_raw;
    result.refined_mask.assign(p_raw.rows(), 0);
    for (std::size_t t = 0; t < p_raw.rows(); ++t) {
        if (!entity_mask[t] || !(uncertainty[t] > gamma)) continue;
        result.refined_mask[t] = 1;
        for (std::size_t j = 0; j < p_raw.cols(); ++j)
            result.p_final(t, j) = 0.5 * (p_raw(t, j) + l(t, j));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Whole-window forward / losses / backward
// ---------------------------------------------------------------------------

struct WindowCache {
    EncodeCache enc;
    ClassifyCache cls;
    RefineCache ref;
};

inline ForwardTrace conner_forward(const ConnerModel& model, const Document& doc,
                                   std::size_t begin, std::size_t end,
                                   const std::vector<std::uint8_t>& entity_mask,
                                   WindowCache* cache = nullptr) {
    ForwardTrace trace;
    WindowCache local;
    WindowCache* c = cache ? cache : &local;
    trace.reps = encode(model, doc, begin, end, &c->enc);
    trace.p_raw = classify(model, trace.reps, &c->cls);
    trace.uncertainty = row_entropies(trace.p_raw);
    trace.entity_mask = entity_mask;
    trace.l = refine(model, trace.reps, entity_mask, &c->ref);
    auto combined = combine(trace.p_raw, trace.l, trace.uncertainty, model.config.gamma,
                            entity_mask);
    trace.p_final = std::move(combined.p_final);
    trace.refined_mask = std::move(combined.refined_mask);
    return trace;
}

namespace detail {

// rows of `m` selected by mask, packed densely; `rows` receives the indices
inline RealMatrix masked_rows(const RealMatrix& m, const std::vector<std::uint8_t>& mask,
                              std::vector<std::size_t>& rows) {
    rows.clear();
    for (std::size_t t = 0; t < mask.size(); ++t)
        if (mask[t]) rows.push_back(t);
    RealMatrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace detail

// The three-term objective. L_class covers all tokens on the post-combination
// distribution; L_label and L_distill average over entity-masked tokens only,
// and distillation uses the pre-combination p_raw.
inline LossBreakdown losses(const ForwardTrace& trace, std::span<const LabelId> gold,
                            double lambda1, double lambda2, double lambda3) {
    if (gold.size() != trace.p_final.rows())
        throw std::invalid_argument("losses: gold length mismatch");
    LossBreakdown out;
    std::vector<int> gold_ids(gold.begin(), gold.end());
    const RealMatrix y_all = one_hot(gold_ids, trace.p_final.cols());
    out.class_loss = cross_entropy(trace.p_final, y_all);

    std::vector<std::size_t> rows;
    const RealMatrix l_masked = detail::masked_rows(trace.l, trace.entity_mask, rows);
    if (!rows.empty()) {
        std::vector<int> gold_masked(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) gold_masked[i] = gold_ids[rows[i]];
        const RealMatrix y_masked = one_hot(gold_masked, trace.l.cols());
        out.label_loss = cross_entropy(l_masked, y_masked);
        const RealMatrix p_masked = detail::masked_rows(trace.p_raw, trace.entity_mask, rows);
        out.distill_loss = sym_kl(p_masked, l_masked);
    }
    out.total = lambda1 * out.class_loss + lambda2 * out.label_loss + lambda3 * out.distill_loss;
    return out;
}

inline LossBreakdown losses(const ForwardTrace& trace, std::span<const LabelId> gold,
                            const ModelConfig& cfg) {
    return losses(trace, gold, cfg.lambda1, cfg.lambda2, cfg.lambda3);
}

// Backward through the whole window graph; accumulates parameter gradients
// scaled by `scale` (1/batch size for batch means). The refinement gate is
// treated as a constant mask. Returns the same values as losses().
inline LossBreakdown conner_backward(ConnerModel& model, const ForwardTrace& trace,
                                     const WindowCache& cache, std::span<const LabelId> gold,
                                     double scale) {
    const ModelConfig& cfg = model.config;
    const std::size_t n = trace.p_final.rows();
    const std::size_t labels = trace.p_final.cols();
    const LossBreakdown breakdown = losses(trace, gold, cfg);

    std::vector<int> gold_ids(gold.begin(), gold.end());
    const RealMatrix y_all = one_hot(gold_ids, labels);

    // d total / d p_final
    RealMatrix d_p_final(n, labels);
    cross_entropy_backward(trace.p_final, y_all, scale * cfg.lambda1, d_p_final);

    // combination: refined rows split evenly between p_raw and l
    RealMatrix d_p_raw(n, labels), d_l(n, labels);
    for (std::size_t t = 0; t < n; ++t) {
        const double w = trace.refined_mask[t] ? 0.5 : 1.0;
        for (std::size_t j = 0; j < labels; ++j) {
            d_p_raw(t, j) += w * d_p_final(t, j);
            if (trace.refined_mask[t]) d_l(t, j) += 0.5 * d_p_final(t, j);
        }
    }

    // masked label and distillation terms
    std::vector<std::size_t> rows;
    const RealMatrix l_masked = detail::masked_rows(trace.l, trace.entity_mask, rows);
    if (!rows.empty()) {
        std::vector<int> gold_masked(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) gold_masked[i] = gold_ids[rows[i]];
        const RealMatrix y_masked = one_hot(gold_masked, labels);
        RealMatrix d_l_masked(rows.size(), labels), d_p_masked(rows.size(), labels);
        cross_entropy_backward(l_masked, y_masked, scale * cfg.lambda2, d_l_masked);
        const RealMatrix p_masked = detail::masked_rows(trace.p_raw, trace.entity_mask, rows);
        sym_kl_backward(p_masked, l_masked, scale * cfg.lambda3, d_p_masked, d_l_masked);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < labels; ++j) {
                d_l(rows[i], j) += d_l_masked(i, j);
                d_p_raw(rows[i], j) += d_p_masked(i, j);
            }
    }

    RealMatrix d_reps(n, trace.reps.cols());

    // refinement head backward (only when it ran)
    if (!rows.empty()) {
        RealMatrix d_l_probs(n, labels);
        for (std::size_t t = 0; t < n; ++t) {
            if (!trace.entity_mask[t]) continue;  // off-mask rows are sentinels, no gradient
            for (std::size_t j = 0; j < labels; ++j) d_l_probs(t, j) = d_l(t, j);
        }
        RealMatrix d_proj_logits(n, labels);
        softmax_backward(cache.ref.l_probs, d_l_probs, d_proj_logits);
        RealMatrix d_rnn_out(n, cache.ref.rnn_out.cols());
        affine_backward(cache.ref.rnn_out, model.params.value("refine.proj.W"), d_proj_logits,
                        d_rnn_out, model.params.grad("refine.proj.W"),
                        model.params.grad("refine.proj.b"));
        RealMatrix d_masked(n, cache.ref.masked.cols());
        birnn_backward(model.params, model.refiner_spec(), cache.ref.masked, cache.ref.rnn,
                       d_rnn_out, d_masked);
        for (std::size_t t = 0; t < n; ++t) {
            if (!trace.entity_mask[t]) continue;  // mask backward: zeroed rows block gradient
            for (std::size_t j = 0; j < d_masked.cols(); ++j) d_reps(t, j) += d_masked(t, j);
        }
    }

    // main head backward
    RealMatrix d_logits(n, labels);
    softmax_backward(trace.p_raw, d_p_raw, d_logits);
    RealMatrix d_hidden(n, cache.cls.hidden.cols());
    affine_backward(cache.cls.hidden, model.params.value("mlp.W2"), d_logits, d_hidden,
                    model.params.grad("mlp.W2"), model.params.grad("mlp.b2"));
    RealMatrix d_hidden_pre(n, d_hidden.cols());
    tanh_backward(cache.cls.hidden, d_hidden, d_hidden_pre);
    affine_backward(trace.reps, model.params.value("mlp.W1"), d_hidden_pre, d_reps,
                    model.params.grad("mlp.W1"), model.params.grad("mlp.b1"));

    // encoder + embedding backward
    RealMatrix d_x(n, cache.enc.x.cols());
    birnn_backward(model.params, model.encoder_spec(), cache.enc.x, cache.enc.rnn, d_reps, d_x);
    RealMatrix& d_emb = model.params.grad("embedding");
    for (std::size_t t = 0; t < n; ++t) {
        const auto id = static_cast<std::size_t>(cache.enc.ids[t]);
        for (std::size_t j = 0; j < d_x.cols(); ++j) d_emb(id, j) += d_x(t, j);
    }
    return breakdown;
}

}  // namespace conner
