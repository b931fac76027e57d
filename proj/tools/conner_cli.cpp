// Command-line front end: synth -> train -> eval -> bucket pipelines over
// CoNLL corpora, with JSON config files, mandatory seeds, and atomically
// written machine-readable reports.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conner/conner.hpp"

namespace fs = std::filesystem;
using conner::Json;

namespace {

// One flat bag of knobs shared by all subcommands. A JSON config file seeds
// the values, explicitly given flags override, and the merged result is
// echoed into the output directory for provenance.
struct RunConfig {
    std::string train_path, dev_path, test_path;
    std::string out_dir;
    std::string checkpoint_path;
    std::string spec_path;
    std::uint64_t seed = 0;
    int epochs = 20;
    int batch_size = 8;
    double learning_rate = 1e-3;
    std::size_t max_window = 512;
    int embed_dim = 16;
    int encoder_hidden = 16;
    int refine_hidden = 8;
    std::string context = "document";
    double gamma = 0.3;
    double lambda1 = 1.0;
    double lambda2 = 1e-1;
    double lambda3 = 1e-3;
    std::string inference_refine = "off";
    bool no_refine = false;
    bool literal_eq1 = false;
    int buckets = 4;
    std::string attribute = "eCon";
    std::string tokens;  // comma-separated modifier list for `analyze`
    std::string gammas;  // comma-separated grid override for `sweep-gamma`
};

constexpr int kConfigSchemaVersion = 1;

Json run_config_json(const RunConfig& c) {
    return Json{{"schema_version", kConfigSchemaVersion},
                {"train", c.train_path},
                {"dev", c.dev_path},
                {"test", c.test_path},
                {"out", c.out_dir},
                {"checkpoint", c.checkpoint_path},
                {"spec", c.spec_path},
                {"seed", c.seed},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"max_window", c.max_window},
                {"embed_dim", c.embed_dim},
                {"encoder_hidden", c.encoder_hidden},
                {"refine_hidden", c.refine_hidden},
                {"context", c.context},
                {"gamma", c.gamma},
                {"lambda1", c.lambda1},
                {"lambda2", c.lambda2},
                {"lambda3", c.lambda3},
                {"inference_refine", c.inference_refine},
                {"no_refine", c.no_refine},
                {"literal_eq1", c.literal_eq1},
                {"buckets", c.buckets},
                {"attribute", c.attribute},
                {"tokens", c.tokens},
                {"gammas", c.gammas}};
}

void apply_config_file(RunConfig& c, const std::string& path) {
    Json j;
    try {
        j = Json::parse(conner::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kConfigSchemaVersion)
        throw std::runtime_error("config '" + path + "' has an unsupported schema_version");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("train", c.train_path);
    get("dev", c.dev_path);
    get("test", c.test_path);
    get("out", c.out_dir);
    get("checkpoint", c.checkpoint_path);
    get("spec", c.spec_path);
    get("seed", c.seed);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("max_window", c.max_window);
    get("embed_dim", c.embed_dim);
    get("encoder_hidden", c.encoder_hidden);
    get("refine_hidden", c.refine_hidden);
    get("context", c.context);
    get("gamma", c.gamma);
    get("lambda1", c.lambda1);
    get("lambda2", c.lambda2);
    get("lambda3", c.lambda3);
    get("inference_refine", c.inference_refine);
    get("no_refine", c.no_refine);
    get("literal_eq1", c.literal_eq1);
    get("buckets", c.buckets);
    get("attribute", c.attribute);
    get("tokens", c.tokens);
    get("gammas", c.gammas);
}

// Optional-valued mirror so "flag given" is distinguishable from defaults.
struct FlagOverrides {
    std::optional<std::string> config, train, dev, test, out, checkpoint, spec, context,
        inference_refine, attribute, tokens, gammas;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, batch_size, buckets, embed_dim, encoder_hidden, refine_hidden;
    std::optional<double> learning_rate, gamma, lambda1, lambda2, lambda3;
    std::optional<std::size_t> max_window;
    bool no_refine = false;
    bool literal_eq1 = false;
};

void add_common_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--config", f.config, "JSON config file; flags override its values");
    cmd->add_option("--train", f.train, "training corpus (CoNLL)");
    cmd->add_option("--dev", f.dev, "development corpus (CoNLL)");
    cmd->add_option("--test", f.test, "test corpus (CoNLL)");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file");
    cmd->add_option("--seed", f.seed, "RNG seed (runs are pure functions of it)");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--batch", f.batch_size, "batch size (items per optimizer step)");
    cmd->add_option("--lr", f.learning_rate, "Adam learning rate");
    cmd->add_option("--max-window", f.max_window, "window length; longer documents are split");
    cmd->add_option("--embed-dim", f.embed_dim, "token embedding width");
    cmd->add_option("--encoder-hidden", f.encoder_hidden, "context encoder hidden width");
    cmd->add_option("--refine-hidden", f.refine_hidden, "refinement head hidden width");
    cmd->add_option("--context", f.context, "context mode: sentence|document")
        ->check(CLI::IsMember({"sentence", "document"}));
    cmd->add_option("--gamma", f.gamma, "uncertainty threshold for refinement");
    cmd->add_option("--lambda1", f.lambda1, "classification loss weight");
    cmd->add_option("--lambda2", f.lambda2, "label (refinement) loss weight");
    cmd->add_option("--lambda3", f.lambda3, "distillation loss weight");
    cmd->add_option("--inference-refine", f.inference_refine, "inference refinement: off|two_pass")
        ->check(CLI::IsMember({"off", "two_pass"}));
    cmd->add_flag("--no-refine", f.no_refine,
                  "disable the refinement gate entirely (gamma above any entropy)");
    cmd->add_flag("--literal-eq1", f.literal_eq1,
                  "divide consistency by the whole counting pool instead of per-string counts");
}

RunConfig merge(const FlagOverrides& f) {
    RunConfig c;
    if (f.config) apply_config_file(c, *f.config);
    auto take = [](auto& field, const auto& opt) {
        if (opt) field = *opt;
    };
    take(c.train_path, f.train);
    take(c.dev_path, f.dev);
    take(c.test_path, f.test);
    take(c.out_dir, f.out);
    take(c.checkpoint_path, f.checkpoint);
    take(c.spec_path, f.spec);
    take(c.seed, f.seed);
    take(c.epochs, f.epochs);
    take(c.batch_size, f.batch_size);
    take(c.learning_rate, f.learning_rate);
    take(c.max_window, f.max_window);
    take(c.embed_dim, f.embed_dim);
    take(c.encoder_hidden, f.encoder_hidden);
    take(c.refine_hidden, f.refine_hidden);
    take(c.context, f.context);
    take(c.gamma, f.gamma);
    take(c.lambda1, f.lambda1);
    take(c.lambda2, f.lambda2);
    take(c.lambda3, f.lambda3);
    take(c.inference_refine, f.inference_refine);
    take(c.buckets, f.buckets);
    take(c.attribute, f.attribute);
    take(c.tokens, f.tokens);
    take(c.gammas, f.gammas);
    if (f.no_refine) c.no_refine = true;
    if (f.literal_eq1) c.literal_eq1 = true;
    return c;
}

// A gamma the gate can never clear: entropy over L labels is at most ln L.
constexpr double kGateOff = 1e18;

conner::ModelConfig model_config_of(const RunConfig& c) {
    conner::ModelConfig cfg;
    cfg.embed_dim = c.embed_dim;
    cfg.encoder_hidden = c.encoder_hidden;
    cfg.refine_hidden = c.refine_hidden;
    cfg.context_mode = conner::context_mode_from(c.context);
    cfg.gamma = c.no_refine ? kGateOff : c.gamma;
    cfg.lambda1 = c.lambda1;
    cfg.lambda2 = c.lambda2;
    cfg.lambda3 = c.lambda3;
    cfg.inference_refine = conner::inference_refine_from(c.inference_refine);
    return cfg;
}

conner::TrainSchedule schedule_of(const RunConfig& c) {
    conner::TrainSchedule s;
    s.epochs = c.epochs;
    s.batch_size = c.batch_size;
    s.learning_rate = c.learning_rate;
    s.seed = c.seed;
    s.max_window = c.max_window;
    return s;
}

conner::Corpus load_corpus(const std::string& path, const conner::LabelScheme& scheme) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus '" + path + "'");
    try {
        return conner::parse_conll(in, scheme);
    } catch (const conner::ParseError& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

conner::LabelScheme scheme_of_file(const std::string& path) {
    try {
        return conner::infer_label_scheme(conner::read_file(path));
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void write_json(const fs::path& path, const Json& doc) {
    conner::atomic_write_file(path, doc.dump(1) + "\n");
}

void echo_config(const RunConfig& c) {
    write_json(fs::path(c.out_dir) / "config.json", run_config_json(c));
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::runtime_error(message);
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& c, bool seed_given) {
    require(!c.spec_path.empty(), "synth needs --spec <json>");
    require(!c.out_dir.empty(), "synth needs --out <dir>");
    conner::SynthSpec spec;
    try {
        spec = conner::synth_spec_from_json(Json::parse(conner::read_file(c.spec_path)));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("spec '" + c.spec_path + "' is not valid JSON: " + e.what());
    }
    if (seed_given) spec.seed = c.seed;

    const auto corpora = conner::generate(spec);
    const fs::path out(c.out_dir);
    conner::atomic_write_file(out / "train.conll", conner::write_conll(corpora.train));
    conner::atomic_write_file(out / "dev.conll", conner::write_conll(corpora.dev));
    conner::atomic_write_file(out / "test.conll", conner::write_conll(corpora.test));
    write_json(out / "spec.json", conner::synth_spec_json(spec));

    const auto train_stats = conner::build_train_stats(corpora.train);
    Json measures = Json::object();
    measures["train"] = conner::measure_report_json(conner::measure(corpora.train, train_stats));
    measures["dev"] = conner::measure_report_json(conner::measure(corpora.dev, train_stats));
    measures["test"] = conner::measure_report_json(conner::measure(corpora.test, train_stats));
    write_json(out / "measure.json", measures);
    echo_config(c);

    std::cout << "wrote " << corpora.train.documents.size() << "/" << corpora.dev.documents.size()
              << "/" << corpora.test.documents.size() << " train/dev/test documents to "
              << c.out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& c) {
    require(!c.train_path.empty() && !c.dev_path.empty(), "train needs --train and --dev");
    require(!c.out_dir.empty(), "train needs --out <dir>");
    const auto scheme = scheme_of_file(c.train_path);
    const auto train_corpus = load_corpus(c.train_path, scheme);
    const auto dev_corpus = load_corpus(c.dev_path, scheme);

    const auto result =
        conner::train(train_corpus, dev_corpus, model_config_of(c), schedule_of(c));

    conner::CheckpointMeta meta;
    meta.epoch = result.best_epoch;
    meta.seed = c.seed;
    for (const auto& rec : result.history) meta.dev_f1_history.push_back(rec.dev.micro.f1());
    const fs::path out(c.out_dir);
    conner::save_checkpoint(out / "checkpoint.json", result.model, scheme, meta);

    Json epochs = Json::array();
    for (const auto& rec : result.history)
        epochs.push_back(Json{{"epoch", rec.epoch},
                              {"class_loss", rec.loss.class_loss},
                              {"label_loss", rec.loss.label_loss},
                              {"distill_loss", rec.loss.distill_loss},
                              {"total", rec.loss.total},
                              {"dev", conner::eval_report_json(rec.dev)}});
    write_json(out / "history.json",
               Json{{"schema_version", 1}, {"best_epoch", result.best_epoch}, {"epochs", epochs}});
    echo_config(c);

    const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
    std::cout << "best epoch " << result.best_epoch << " dev F1 " << fixed4(best.dev.micro.f1())
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& c) {
    require(!c.checkpoint_path.empty() && !c.test_path.empty(),
            "eval needs --checkpoint and --test");
    require(!c.out_dir.empty(), "eval needs --out <dir>");
    const auto ckpt = conner::load_checkpoint(c.checkpoint_path);
    const auto test_corpus = load_corpus(c.test_path, ckpt.scheme);
    const auto report =
        conner::evaluate(test_corpus, conner::predict(ckpt.model, test_corpus, c.max_window));
    write_json(fs::path(c.out_dir) / "report.json", conner::eval_report_json(report));
    echo_config(c);
    std::cout << "P " << fixed4(report.micro.precision()) << "  R "
              << fixed4(report.micro.recall()) << "  F1 " << fixed4(report.micro.f1()) << "\n";
    return 0;
}

int cmd_sweep_gamma(const RunConfig& c) {
    require(!c.train_path.empty() && !c.dev_path.empty() && !c.test_path.empty(),
            "sweep-gamma needs --train, --dev and --test");
    require(!c.out_dir.empty(), "sweep-gamma needs --out <dir>");
    const auto scheme = scheme_of_file(c.train_path);
    const auto train_corpus = load_corpus(c.train_path, scheme);
    const auto dev_corpus = load_corpus(c.dev_path, scheme);
    const auto test_corpus = load_corpus(c.test_path, scheme);

    std::vector<double> grid;
    if (!c.gammas.empty()) {
        for (const auto& g : split_csv(c.gammas)) grid.push_back(std::stod(g));
    } else {
        for (int i = 0; i <= 9; ++i) grid.push_back(0.1 * i);
        grid.push_back(std::log(static_cast<double>(scheme.label_count())));
    }

    // grid points run sequentially, each re-seeded identically, merged in
    // gamma order
    std::string tsv = "gamma\tprecision\trecall\tf1\n";
    for (double gamma : grid) {
        RunConfig point = c;
        point.gamma = gamma;
        point.no_refine = false;
        const auto result =
            conner::train(train_corpus, dev_corpus, model_config_of(point), schedule_of(point));
        const auto report = conner::evaluate(
            test_corpus, conner::predict(result.model, test_corpus, c.max_window));
        tsv += conner::format_double(gamma) + "\t" +
               conner::format_double(report.micro.precision()) + "\t" +
               conner::format_double(report.micro.recall()) + "\t" +
               conner::format_double(report.micro.f1()) + "\n";
        std::cout << "gamma " << conner::format_double(gamma) << " -> F1 "
                  << fixed4(report.micro.f1()) << "\n";
    }
    conner::atomic_write_file(fs::path(c.out_dir) / "gamma_sweep.tsv", tsv);
    echo_config(c);
    return 0;
}

int cmd_bucket(const RunConfig& c) {
    require(!c.checkpoint_path.empty() && !c.train_path.empty() && !c.test_path.empty(),
            "bucket needs --checkpoint, --train and --test");
    require(!c.out_dir.empty(), "bucket needs --out <dir>");
    require(c.buckets >= 1, "--buckets must be >= 1");
    const auto ckpt = conner::load_checkpoint(c.checkpoint_path);
    const auto train_corpus = load_corpus(c.train_path, ckpt.scheme);
    const auto test_corpus = load_corpus(c.test_path, ckpt.scheme);
    const auto kind = conner::attribute_from_name(c.attribute);
    const auto mode = c.literal_eq1 ? conner::Eq1Mode::literal : conner::Eq1Mode::narrative;

    const auto stats = conner::build_train_stats(train_corpus);
    const auto predictions = conner::predict(ckpt.model, test_corpus, c.max_window);
    const auto report = conner::bucket_performance(kind, test_corpus, predictions, stats,
                                                   static_cast<std::size_t>(c.buckets), mode);

    const fs::path out(c.out_dir);
    write_json(out / ("bucket_" + c.attribute + ".json"), conner::bucket_report_json(report));
    std::string table = "bucket\tlo\thi\tcount\tprecision\trecall\tf1\n";
    for (std::size_t i = 0; i < report.buckets.size(); ++i) {
        const auto& b = report.buckets[i];
        table += std::to_string(i) + "\t" + fixed4(b.lo) + "\t" + fixed4(b.hi) + "\t" +
                 std::to_string(b.count) + "\t" + fixed4(b.eval.precision()) + "\t" +
                 fixed4(b.eval.recall()) + "\t" + fixed4(b.eval.f1()) + "\n";
    }
    conner::atomic_write_file(out / ("bucket_" + c.attribute + ".tsv"), table);
    echo_config(c);
    std::cout << table;
    return 0;
}

int cmd_analyze(const RunConfig& c) {
    require(!c.train_path.empty() && !c.test_path.empty(), "analyze needs --train and --test");
    require(!c.out_dir.empty(), "analyze needs --out <dir>");
    const auto scheme = scheme_of_file(c.train_path);
    const auto train_corpus = load_corpus(c.train_path, scheme);
    const auto test_corpus = load_corpus(c.test_path, scheme);
    const auto mode = c.literal_eq1 ? conner::Eq1Mode::literal : conner::Eq1Mode::narrative;
    const auto stats = conner::build_train_stats(train_corpus);
    const fs::path out(c.out_dir);

    // consistency per entity length
    const auto by_len = conner::consistency_by_length(test_corpus, stats, mode);
    write_json(out / "consistency_by_length.json", conner::consistency_by_length_json(by_len));
    std::string tsv = "length\tmean_econ\n";
    for (const auto& [len, mean] : by_len)
        tsv += std::to_string(len) + "\t" + conner::format_double(mean) + "\n";
    conner::atomic_write_file(out / "consistency_by_length.tsv", tsv);

    // per-token consistency table; defaults to tokens that are genuinely
    // ambiguous in training (0 < tCon < 1), most frequent first
    std::vector<std::string> tokens = split_csv(c.tokens);
    if (tokens.empty()) {
        std::vector<std::pair<std::int64_t, std::string>> ranked;
        for (const auto& [tok, occ] : stats.token_occurrences) {
            const double tcon = conner::token_consistency(tok, stats);
            if (tcon > 0.0 && tcon < 1.0) ranked.emplace_back(occ, tok);
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (std::size_t i = 0; i < ranked.size() && i < 10; ++i)
            tokens.push_back(ranked[i].second);
    }

    Json rows = Json::array();
    std::string table = "token\ttrain_tcon\ttest_tcon\tagreement\n";
    if (!tokens.empty()) {
        const bool have_model = !c.checkpoint_path.empty();
        std::vector<std::vector<conner::LabelId>> predictions;
        if (have_model) {
            const auto ckpt = conner::load_checkpoint(c.checkpoint_path);
            predictions = conner::predict(ckpt.model, test_corpus, c.max_window);
        } else {
            for (const auto& doc : test_corpus.documents) predictions.push_back(doc.gold_labels);
        }
        for (const auto& row :
             conner::modifier_report(tokens, train_corpus, test_corpus, predictions, mode)) {
            Json j{{"token", row.token},
                   {"train_tcon", row.train_tcon},
                   {"test_tcon", row.test_tcon},
                   {"agreement", have_model ? Json(row.agreement) : Json(nullptr)},
                   {"present", row.present}};
            rows.push_back(std::move(j));
            table += row.token + "\t" + fixed4(row.train_tcon) + "\t" + fixed4(row.test_tcon) +
                     "\t" + (have_model ? fixed4(row.agreement) : std::string("-")) + "\n";
        }
    }
    write_json(out / "modifier_report.json", rows);
    conner::atomic_write_file(out / "modifier_report.tsv", table);
    echo_config(c);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency-aware document NER lab"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd = nullptr;
        FlagOverrides flags;
    };
    std::map<std::string, Sub> subs;
    auto add = [&](const std::string& name, const std::string& desc) -> Sub& {
        Sub& sub = subs[name];
        sub.cmd = app.add_subcommand(name, desc);
        add_common_flags(sub.cmd, sub.flags);
        return sub;
    };
    Sub& synth = add("synth", "generate a synthetic corpus triple from a spec");
    synth.cmd->add_option("--spec", synth.flags.spec, "SynthSpec JSON file");
    add("train", "train a model and write checkpoint + history");
    add("eval", "score a checkpoint on a corpus");
    Sub& sweep = add("sweep-gamma", "retrain across a gamma grid and tabulate F1");
    sweep.cmd->add_option("--gammas", sweep.flags.gammas, "comma-separated gamma grid");
    Sub& bucket = add("bucket", "bucketed performance by attribute value");
    bucket.cmd->add_option("--attribute", bucket.flags.attribute,
                           "tLen|eLen|dLen|eDen|oDen|tFre|eFre|tCon|eCon");
    bucket.cmd->add_option("--buckets", bucket.flags.buckets, "number of equal-frequency buckets");
    Sub& analyze = add("analyze", "consistency reports over train/test splits");
    analyze.cmd->add_option("--tokens", analyze.flags.tokens,
                            "comma-separated tokens for the per-token table");

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& [name, sub] : subs) {
            if (!sub.cmd->parsed()) continue;
            const RunConfig cfg = merge(sub.flags);
            if (name == "synth") return cmd_synth(cfg, sub.flags.seed.has_value());
            if (name == "train") return cmd_train(cfg);
            if (name == "eval") return cmd_eval(cfg);
            if (name == "sweep-gamma") return cmd_sweep_gamma(cfg);
            if (name == "bucket") return cmd_bucket(cfg);
            if (name == "analyze") return cmd_analyze(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;  // unreachable: require_subcommand guarantees one parsed
}
