#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "conner/eval.hpp"
#include "conner/model.hpp"

namespace conner {

struct TrainSchedule {
    int epochs = 20;
    int batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    // documents longer than this are split into consecutive windows,
    // preferring sentence boundaries; nothing is ever truncated
    std::size_t max_window = 512;
};

struct TrainItem {
    std::size_t doc = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

// Batch items for one corpus: sentences in sentence mode, whole documents
// (split at max_window) in document mode.
inline std::vector<TrainItem> make_items(const Corpus& corpus, ContextMode mode,
                                         std::size_t max_window) {
    std::vector<TrainItem> items;
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
        const Document& doc = corpus.documents[d];
        if (doc.size() == 0) continue;
        std::vector<std::pair<std::size_t, std::size_t>> pieces;
        if (mode == ContextMode::sentence) {
            for (std::size_t s = 0; s < doc.n_sentences(); ++s) pieces.push_back(doc.sentence_range(s));
        } else {
            // greedy packing of whole sentences up to max_window
            std::size_t begin = 0, end = 0;
            for (std::size_t s = 0; s < doc.n_sentences(); ++s) {
                const auto [sb, se] = doc.sentence_range(s);
                if (se - begin > max_window && end > begin) {
                    pieces.emplace_back(begin, end);
                    begin = sb;
                }
                end = se;
            }
            if (end > begin) pieces.emplace_back(begin, end);
        }
        for (auto [begin, end] : pieces) {
            // hard-split any window that is still too long
            for (std::size_t b = begin; b < end; b += max_window)
                items.push_back({d, b, std::min(b + max_window, end)});
        }
    }
    return items;
}

inline std::vector<std::uint8_t> gold_window_mask(const Document& doc, const LabelScheme& scheme,
                                                  std::size_t begin, std::size_t end) {
    std::vector<std::uint8_t> mask(end - begin, 0);
    for (const auto& span : gold_spans(doc, scheme)) {
        const std::size_t lo = std::max(span.start, begin);
        const std::size_t hi = std::min(span.end, end);
        for (std::size_t t = lo; t < hi; ++t) mask[t - begin] = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline std::vector<LabelId> argmax_labels(const RealMatrix& p) {
    std::vector<LabelId> labels(p.rows());
    for (std::size_t t = 0; t < p.rows(); ++t) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < p.cols(); ++j)
            if (p(t, j) > p(t, best)) best = j;
        labels[t] = static_cast<LabelId>(best);
    }
    return labels;
}

// Argmax over the main head per token. In two_pass mode a second pass builds
// entity masks from first-pass spans, applies refine+combine and re-argmaxes.
inline std::vector<std::vector<LabelId>> predict(const ConnerModel& model, const Corpus& corpus,
                                                 std::size_t max_window = 512) {
    const auto items = make_items(corpus, model.config.context_mode, max_window);
    std::vector<std::vector<LabelId>> out(corpus.documents.size());
    for (std::size_t d = 0; d < corpus.documents.size(); ++d)
        out[d].assign(corpus.documents[d].size(), LabelScheme::kOutside);
    for (const auto& item : items) {
        const Document& doc = corpus.documents[item.doc];
        RealMatrix reps = encode(model, doc, item.begin, item.end);
        RealMatrix p_raw = classify(model, reps);
        std::vector<LabelId> labels = argmax_labels(p_raw);
        if (model.config.inference_refine == InferenceRefine::two_pass) {
            const auto first_pass = decode_spans(labels, corpus.scheme);
            std::vector<std::uint8_t> mask(labels.size(), 0);
            for (const auto& span : first_pass)
                for (std::size_t t = span.start; t < span.end; ++t) mask[t] = 1;
            const RealMatrix l = refine(model, reps, mask);
            const auto combined =
                combine(p_raw, l, row_entropies(p_raw), model.config.gamma, mask);
            labels = argmax_labels(combined.p_final);
        }
        for (std::size_t t = 0; t < labels.size(); ++t) out[item.doc][item.begin + t] = labels[t];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    LossBreakdown loss;  // mean per-item values across the epoch
    EvalReport dev;
};

struct TrainResult {
    ConnerModel model;  // parameters of the best dev-F1 epoch
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

// Mini-batch Adam on the combined objective with gold-span masks.
// Deterministic given schedule.seed.
inline TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, ModelConfig config,
                         const TrainSchedule& schedule) {
    if (train_corpus.documents.empty())
        throw std::invalid_argument("train: empty training corpus");
    if (!(train_corpus.scheme == dev_corpus.scheme))
        throw std::invalid_argument("train: corpora use different label schemes");
    config.label_count = train_corpus.scheme.label_count();
    if (config.vocab.empty()) config.vocab = build_vocab(train_corpus);

    TrainResult result;
    result.model = ConnerModel::init(std::move(config), schedule.seed);
    ConnerModel& model = result.model;

    AdamConfig adam;
    adam.lr = schedule.learning_rate;
    AdamState adam_state;

    auto items = make_items(train_corpus, model.config.context_mode, schedule.max_window);
    if (items.empty()) throw std::invalid_argument("train: training corpus has no tokens");

    ParamStore best_params = model.params;
    double best_f1 = -1.0;

    for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
        auto shuffle_rng =
            make_rng(derive_seed(schedule.seed, "epoch_shuffle") + static_cast<std::uint64_t>(epoch));
        std::shuffle(items.begin(), items.end(), shuffle_rng);

        LossBreakdown epoch_loss;
        const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(schedule.batch_size));
        for (std::size_t pos = 0; pos < items.size(); pos += batch) {
            const std::size_t count = std::min(batch, items.size() - pos);
            const double scale = 1.0 / static_cast<double>(count);
            for (std::size_t k = 0; k < count; ++k) {
                const TrainItem& item = items[pos + k];
                const Document& doc = train_corpus.documents[item.doc];
                const auto mask =
                    gold_window_mask(doc, train_corpus.scheme, item.begin, item.end);
                WindowCache cache;
                const ForwardTrace trace =
                    conner_forward(model, doc, item.begin, item.end, mask, &cache);
                const std::span<const LabelId> gold(doc.gold_labels.data() + item.begin,
                                                    item.end - item.begin);
                const LossBreakdown lb = conner_backward(model, trace, cache, gold, scale);
                epoch_loss.class_loss += lb.class_loss;
                epoch_loss.label_loss += lb.label_loss;
                epoch_loss.distill_loss += lb.distill_loss;
                epoch_loss.total += lb.total;
            }
            adam_step(model.params, adam_state, adam);
        }
        const double inv = 1.0 / static_cast<double>(items.size());
        epoch_loss.class_loss *= inv;
        epoch_loss.label_loss *= inv;
        epoch_loss.distill_loss *= inv;
        epoch_loss.total *= inv;

        EpochRecord record;
        record.epoch = epoch;
        record.loss = epoch_loss;
        record.dev = evaluate(dev_corpus, predict(model, dev_corpus, schedule.max_window));
        const double dev_f1 = record.dev.micro.f1();
        if (dev_f1 > best_f1) {
            best_f1 = dev_f1;
            best_params = model.params;
            result.best_epoch = epoch;
        }
        result.history.push_back(std::move(record));
    }
    model.params = std::move(best_params);
    return result;
}

}  // namespace conner
