#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conner/json_io.hpp"
#include "conner/model.hpp"

namespace conner {

struct CheckpointMeta {
    int epoch = 0;
    std::uint64_t seed = 0;
    std::vector<double> dev_f1_history;
};

struct Checkpoint {
    ConnerModel model;
    LabelScheme scheme;
    CheckpointMeta meta;
};

// Versioned JSON checkpoint. Parameter tensors are nested arrays of decimal
// reals in shortest round-trip form, so load(save(m)) is bit-exact.
inline void save_checkpoint(const std::filesystem::path& path, const ConnerModel& model,
                            const LabelScheme& scheme, const CheckpointMeta& meta) {
    Json params = Json::object();
    for (const auto& [name, value] : model.params.values()) {
        Json rows = Json::array();
        for (std::size_t i = 0; i < value.rows(); ++i) {
            Json row = Json::array();
            for (std::size_t j = 0; j < value.cols(); ++j) row.push_back(value(i, j));
            rows.push_back(std::move(row));
        }
        params[name] = std::move(rows);
    }
    Json doc{{"schema_version", ConnerModel::kSchemaVersion},
             {"entity_types", scheme.entity_types()},
             {"config", model_config_json(model.config)},
             {"params", params},
             {"metadata", Json{{"epoch", meta.epoch},
                               {"seed", meta.seed},
                               {"dev_f1_history", meta.dev_f1_history}}}};
    atomic_write_file(path, doc.dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Json doc;
    try {
        doc = Json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint '" + path.string() + "' is not valid JSON: " +
                                 e.what());
    }
    try {
        const int version = doc.at("schema_version").get<int>();
        if (version != ConnerModel::kSchemaVersion)
            throw std::runtime_error("unsupported schema_version " + std::to_string(version));

        Checkpoint ckpt;
        ckpt.scheme = LabelScheme(doc.at("entity_types").get<std::vector<std::string>>());
        ModelConfig cfg = model_config_from_json(doc.at("config"));
        if (cfg.label_count != ckpt.scheme.label_count())
            throw std::runtime_error("config mismatch: label_count " +
                                     std::to_string(cfg.label_count) + " does not fit " +
                                     std::to_string(ckpt.scheme.type_count()) + " entity types");

        ParamStore params;
        for (const auto& [name, rows] : doc.at("params").items()) {
            const std::size_t r = rows.size();
            const std::size_t c = r == 0 ? 0 : rows.at(0).size();
            std::vector<double> data;
            data.reserve(r * c);
            for (const auto& row : rows) {
                if (row.size() != c) throw std::runtime_error("ragged tensor '" + name + "'");
                for (const auto& v : row) data.push_back(v.get<double>());
            }
            params.add(name, RealMatrix::checked(r, c, std::move(data)));
        }
        ckpt.model = ConnerModel::from_params(std::move(cfg), std::move(params));

        const Json& meta = doc.at("metadata");
        ckpt.meta.epoch = meta.at("epoch").get<int>();
        ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
        ckpt.meta.dev_f1_history = meta.at("dev_f1_history").get<std::vector<double>>();
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint '" + path.string() + "' is malformed: " + e.what());
    }
}

}  // namespace conner
