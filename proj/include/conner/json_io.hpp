#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "conner/attributes.hpp"
#include "conner/eval.hpp"
#include "conner/model.hpp"
#include "conner/synthgen.hpp"

namespace conner {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form of a 64-bit real.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

// Reports are written via a temp file plus rename so partial outputs never
// appear under the final name.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Domain types <-> JSON
// ---------------------------------------------------------------------------

inline Json eval_counts_json(const EvalCounts& c) {
    return Json{{"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()},
                {"gold", c.gold},             {"predicted", c.predicted}, {"correct", c.correct}};
}

inline Json eval_report_json(const EvalReport& report) {
    Json per_type = Json::object();
    for (const auto& [type, counts] : report.per_type) per_type[type] = eval_counts_json(counts);
    return Json{{"micro", eval_counts_json(report.micro)}, {"per_type", per_type}};
}

inline Json bucket_report_json(const BucketReport& report) {
    Json buckets = Json::array();
    for (const auto& b : report.buckets)
        buckets.push_back(Json{{"lo", b.lo},
                               {"hi", b.hi},
                               {"count", b.count},
                               {"precision", b.eval.precision()},
                               {"recall", b.eval.recall()},
                               {"f1", b.eval.f1()}});
    return Json{{"attribute", attribute_name(report.attribute)}, {"buckets", buckets}};
}

inline Json consistency_by_length_json(const std::map<std::size_t, double>& by_length) {
    Json rows = Json::array();
    for (const auto& [len, mean] : by_length)
        rows.push_back(Json{{"length", len}, {"mean_econ", mean}});
    return Json{{"attribute", "eCon"}, {"by_length", rows}};
}

inline Json modifier_report_json(const std::vector<ModifierRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows)
        out.push_back(Json{{"token", r.token},
                           {"train_tcon", r.train_tcon},
                           {"test_tcon", r.test_tcon},
                           {"agreement", r.agreement},
                           {"present", r.present}});
    return out;
}

inline Json model_config_json(const ModelConfig& cfg) {
    Json vocab = Json::object();
    for (const auto& [tok, id] : cfg.vocab) vocab[tok] = id;
    return Json{{"vocab", vocab},
                {"embed_dim", cfg.embed_dim},
                {"encoder_hidden", cfg.encoder_hidden},
                {"refine_hidden", cfg.refine_hidden},
                {"label_count", cfg.label_count},
                {"context_mode", to_string(cfg.context_mode)},
                {"gamma", cfg.gamma},
                {"lambda1", cfg.lambda1},
                {"lambda2", cfg.lambda2},
                {"lambda3", cfg.lambda3},
                {"inference_refine", to_string(cfg.inference_refine)}};
}

inline Json synth_spec_json(const SynthSpec& spec) {
    Json length_dist = Json::object();
    for (const auto& [len, w] : spec.entity_length_dist)
        length_dist[std::to_string(len)] = w;
    return Json{{"schema_version", 1},
                {"seed", spec.seed},
                {"n_docs", spec.n_docs},
                {"sentences_per_doc", {spec.sentences_per_doc.first, spec.sentences_per_doc.second}},
                {"entity_types", spec.entity_types},
                {"head_vocab", spec.head_vocab},
                {"modifier_vocab", spec.modifier_vocab},
                {"filler_vocab", spec.filler_vocab},
                {"modifier_consistency", spec.modifier_consistency},
                {"entity_length_dist", length_dist},
                {"repeat_entity_rate", spec.repeat_entity_rate},
                {"entity_inventory_per_type", spec.entity_inventory_per_type},
                {"split", {spec.split[0], spec.split[1], spec.split[2]}}};
}

inline SynthSpec synth_spec_from_json(const Json& j) {
    SynthSpec spec;
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
    };
    opt("seed", spec.seed);
    opt("n_docs", spec.n_docs);
    if (j.contains("sentences_per_doc")) {
        const auto& r = j.at("sentences_per_doc");
        spec.sentences_per_doc = {r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()};
    }
    opt("entity_types", spec.entity_types);
    opt("head_vocab", spec.head_vocab);
    opt("modifier_vocab", spec.modifier_vocab);
    opt("filler_vocab", spec.filler_vocab);
    opt("modifier_consistency", spec.modifier_consistency);
    if (j.contains("entity_length_dist")) {
        spec.entity_length_dist.clear();
        for (const auto& [len, w] : j.at("entity_length_dist").items())
            spec.entity_length_dist[static_cast<std::size_t>(std::stoull(len))] = w.get<double>();
    }
    opt("repeat_entity_rate", spec.repeat_entity_rate);
    opt("entity_inventory_per_type", spec.entity_inventory_per_type);
    if (j.contains("split")) {
        const auto& s = j.at("split");
        spec.split = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    }
    spec.validate();
    return spec;
}

inline Json measure_report_json(const MeasureReport& report) {
    Json tcon = Json::object();
    for (const auto& [tok, v] : report.modifier_tcon) tcon[tok] = v;
    Json hist = Json::object();
    for (const auto& [len, count] : report.entity_length_histogram)
        hist[std::to_string(len)] = count;
    return Json{{"mean_modifier_tcon", report.mean_modifier_tcon},
                {"modifier_tcon", tcon},
                {"entity_length_histogram", hist},
                {"mean_eden", report.mean_eden},
                {"mean_oden", report.mean_oden}};
}

inline ModelConfig model_config_from_json(const Json& j) {
    ModelConfig cfg;
    for (const auto& [tok, id] : j.at("vocab").items()) cfg.vocab[tok] = id.get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.encoder_hidden = j.at("encoder_hidden").get<int>();
    cfg.refine_hidden = j.at("refine_hidden").get<int>();
    cfg.label_count = j.at("label_count").get<int>();
    cfg.context_mode = context_mode_from(j.at("context_mode").get<std::string>());
    cfg.gamma = j.at("gamma").get<double>();
    cfg.lambda1 = j.at("lambda1").get<double>();
    cfg.lambda2 = j.at("lambda2").get<double>();
    cfg.lambda3 = j.at("lambda3").get<double>();
    cfg.inference_refine = inference_refine_from(j.at("inference_refine").get<std::string>());
    return cfg;
}

}  // namespace conner
