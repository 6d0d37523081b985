// Command-line front end: data generation, training, evaluation, cost
// accounting, the token-similarity probe, and scaling sweeps. Every run that
// writes artifacts also writes a manifest with checksums; reruns with the
// same inputs reproduce every byte.
//
// Exit codes: 0 success, 1 usage error, 2 invalid configuration,
// 3 runtime failure (I/O, bad input data, internal errors).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zenith/datagen.hpp"
#include "zenith/evaluator.hpp"
#include "zenith/manifest.hpp"
#include "zenith/model.hpp"
#include "zenith/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config document: one JSON object with `model`, `train`, `data`, and
// (for sweeps) `sweep` sections. Unknown keys anywhere are hard errors.
// ---------------------------------------------------------------------------

struct DataConfig {
    std::int64_t examples = 20000;       // generated training rows
    std::int64_t test_examples = 5000;   // generated evaluation rows
    std::uint64_t seed = 1;              // generator seed (latents + draws)
    double interaction_strength = 1.0;   // planted pairwise coefficient scale
    int latent_dim = 8;
    double bias = 0.0;
    double noise_temp = 0.0;
    bool zero_interactions = false;      // all-zero ground truth for baselines
    std::int64_t bayes_samples = 100000;
    std::string train_csv;               // pre-generated inputs, optional
    std::string test_csv;
    bool has_schema = false;
    zenith::FeatureSchema schema;
};

DataConfig data_config_from_json(const json& o) {
    zenith::detail::reject_unknown_keys(
        o,
        {"examples", "test_examples", "seed", "interaction_strength", "latent_dim", "bias",
         "noise_temp", "zero_interactions", "bayes_samples", "train_csv", "test_csv", "schema"},
        "data config");
    DataConfig d;
    try {
        if (o.contains("examples")) d.examples = o["examples"].get<std::int64_t>();
        if (o.contains("test_examples")) d.test_examples = o["test_examples"].get<std::int64_t>();
        if (o.contains("seed")) d.seed = o["seed"].get<std::uint64_t>();
        if (o.contains("interaction_strength"))
            d.interaction_strength = o["interaction_strength"].get<double>();
        if (o.contains("latent_dim")) d.latent_dim = o["latent_dim"].get<int>();
        if (o.contains("bias")) d.bias = o["bias"].get<double>();
        if (o.contains("noise_temp")) d.noise_temp = o["noise_temp"].get<double>();
        if (o.contains("zero_interactions"))
            d.zero_interactions = o["zero_interactions"].get<bool>();
        if (o.contains("bayes_samples")) d.bayes_samples = o["bayes_samples"].get<std::int64_t>();
        if (o.contains("train_csv")) d.train_csv = o["train_csv"].get<std::string>();
        if (o.contains("test_csv")) d.test_csv = o["test_csv"].get<std::string>();
        if (o.contains("schema")) {
            d.schema = zenith::schema_from_json(o["schema"]);
            d.has_schema = true;
        }
    } catch (const json::exception& e) {
        throw zenith::config_error(std::string("data config: ") + e.what());
    }
    return d;
}

struct SweepEntry {
    std::string name;
    zenith::ModelConfig model;
};

struct CliConfig {
    zenith::ModelConfig model;
    zenith::TrainConfig train;
    DataConfig data;
    std::vector<SweepEntry> sweep;
    json raw;  // resolved snapshot for the manifest
};

CliConfig parse_config_document(const json& o, const std::string& origin) {
    zenith::detail::reject_unknown_keys(o, {"model", "train", "data", "sweep"},
                                        "config '" + origin + "'");
    CliConfig cfg;
    cfg.raw = o;
    if (o.contains("model")) cfg.model = zenith::model_config_from_json(o["model"]);
    if (o.contains("train")) cfg.train = zenith::train_config_from_json(o["train"]);
    if (o.contains("data")) cfg.data = data_config_from_json(o["data"]);
    if (o.contains("sweep")) {
        zenith::detail::reject_unknown_keys(o["sweep"], {"models"}, "sweep config");
        if (!o["sweep"].contains("models") || !o["sweep"]["models"].is_array() ||
            o["sweep"]["models"].empty())
            throw zenith::config_error("sweep config: non-empty \"models\" array required");
        int index = 0;
        for (const json& entry : o["sweep"]["models"]) {
            zenith::detail::reject_unknown_keys(entry, {"name", "model"}, "sweep entry");
            if (!entry.contains("model"))
                throw zenith::config_error("sweep entry " + zenith::format_int(index) +
                                           ": \"model\" section required");
            SweepEntry e;
            e.model = zenith::model_config_from_json(entry["model"]);
            e.name = entry.contains("name") ? entry["name"].get<std::string>()
                                            : "config_" + zenith::format_int(index);
            cfg.sweep.push_back(std::move(e));
            ++index;
        }
    }
    return cfg;
}

CliConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw zenith::io_error("cannot read config '" + path + "'");
    json o;
    try {
        o = json::parse(in);
    } catch (const json::exception& e) {
        throw zenith::config_error("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config_document(o, path);
}

zenith::FeatureSchema resolve_schema(const DataConfig& d) {
    if (d.has_schema) {
        d.schema.validate();
        return d.schema;
    }
    return zenith::default_desk_schema();
}

zenith::GroundTruthSpec resolve_ground_truth(const DataConfig& d,
                                             const zenith::FeatureSchema& schema,
                                             std::uint64_t seed) {
    const double strength = d.zero_interactions ? 0.0 : d.interaction_strength;
    zenith::GroundTruthSpec gt = zenith::default_ground_truth(schema, strength, seed);
    gt.latent_dim = d.latent_dim;
    gt.bias = d.bias;
    gt.noise_temp = d.noise_temp;
    return gt;
}

void ensure_output_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw zenith::io_error("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw zenith::io_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw zenith::io_error("write failed for '" + path + "'");
}

// manifest skeleton written at run start; finalized with checksums at run end
zenith::RunManifest start_manifest(const std::string& command, const std::string& config_path,
                                   const json& resolved, std::uint64_t seed,
                                   const std::string& out_dir, const std::string& manifest_path) {
    zenith::RunManifest m;
    m.command = command;
    m.config_path = config_path;
    m.resolved_config = resolved;
    m.seed = seed;
    m.output_dir = out_dir;
    zenith::write_manifest_atomic(m, manifest_path);
    return m;
}

void finish_manifest(zenith::RunManifest& m, const std::vector<std::string>& artifact_paths,
                     const std::string& manifest_path) {
    for (const std::string& p : artifact_paths)
        m.artifacts.emplace_back(p, zenith::file_checksum(p));
    zenith::write_manifest_atomic(m, manifest_path);
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int run_gen_data(const std::string& config_path, const std::string& out_csv,
                 std::optional<std::uint64_t> seed_flag) {
    const CliConfig cfg = load_config(config_path);
    const zenith::FeatureSchema schema = resolve_schema(cfg.data);
    const std::uint64_t seed =
        seed_flag ? *seed_flag : zenith::resolve_seed(cfg.data.seed);
    const zenith::GroundTruthSpec gt = resolve_ground_truth(cfg.data, schema, seed);

    const fs::path out_path(out_csv);
    if (out_path.has_parent_path()) ensure_output_dir(out_path.parent_path().string());
    const std::string manifest_path = out_csv + ".manifest.json";
    zenith::RunManifest manifest = start_manifest("gen-data", config_path, cfg.raw, seed,
                                                  out_path.has_parent_path()
                                                      ? out_path.parent_path().string()
                                                      : ".",
                                                  manifest_path);

    const zenith::GenerateReport report =
        zenith::generate_dataset(schema, gt, cfg.data.examples, seed, out_csv,
                                 cfg.data.bayes_samples);
    finish_manifest(manifest, {out_csv, out_csv + ".meta.json"}, manifest_path);

    json summary;
    summary["n"] = report.n;
    summary["positive_rate"] = report.positive_rate;
    if (std::isnan(report.bayes_auc))
        summary["bayes_auc"] = nullptr;
    else
        summary["bayes_auc"] = report.bayes_auc;
    summary["bayes_samples"] = report.bayes_samples;
    summary["path"] = out_csv;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_flag, std::optional<int> steps_flag) {
    CliConfig cfg = load_config(config_path);
    if (seed_flag) {
        cfg.train.seed = *seed_flag;
        ::unsetenv("ZENITH_SEED");  // an explicit flag outranks the environment
    }
    if (steps_flag) cfg.train.total_steps = *steps_flag;
    cfg.model.validate();
    cfg.train.validate();

    const zenith::FeatureSchema schema = resolve_schema(cfg.data);
    const zenith::TokenPlan plan = zenith::default_token_plan(schema);
    ensure_output_dir(out_dir);
    const std::string manifest_path = out_dir + "/manifest.json";
    zenith::RunManifest manifest = start_manifest("train", config_path, cfg.raw,
                                                  zenith::resolve_seed(cfg.train.seed), out_dir,
                                                  manifest_path);
    std::vector<std::string> artifacts;

    std::string train_csv = cfg.data.train_csv;
    if (train_csv.empty()) {
        train_csv = out_dir + "/train.csv";
        const zenith::GroundTruthSpec gt = resolve_ground_truth(cfg.data, schema, cfg.data.seed);
        zenith::generate_dataset(schema, gt, cfg.data.examples, cfg.data.seed, train_csv,
                                 cfg.data.bayes_samples);
        artifacts.push_back(train_csv);
        artifacts.push_back(train_csv + ".meta.json");
    }
    const zenith::Dataset data = zenith::load_dataset(schema, train_csv);

    zenith::ZenithModel model = zenith::build_model(cfg.model, schema, plan);
    const std::string log_path = out_dir + "/train_log.csv";
    const zenith::TrainResult result = zenith::train_model(model, data, cfg.train, log_path);
    artifacts.push_back(log_path);

    const std::string checkpoint_path = out_dir + "/checkpoint.znth";
    zenith::save_checkpoint(model, checkpoint_path);
    artifacts.push_back(checkpoint_path);

    json summary;
    summary["steps_run"] = result.steps_run;
    summary["early_stop"] = result.early_stop;
    summary["aborted_steps"] = result.aborted_steps;
    summary["mean_task_loss_first_tenth"] = result.mean_task_loss_first_tenth();
    summary["mean_task_loss_last_tenth"] = result.mean_task_loss_last_tenth();
    summary["load_cv"] = result.load_cv();
    summary["checkpoint"] = checkpoint_path;
    summary["train_log"] = log_path;
    const std::string report_path = out_dir + "/train_report.json";
    write_text_file(report_path, summary.dump(2) + "\n");
    artifacts.push_back(report_path);

    finish_manifest(manifest, artifacts, manifest_path);
    if (result.aborted_steps > 0)
        std::cerr << "warning: " << result.aborted_steps
                  << " step(s) aborted on non-finite gradients\n";
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int run_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out_dir) {
    const CliConfig cfg = load_config(config_path);
    zenith::ZenithModel model = zenith::load_checkpoint(checkpoint);

    ensure_output_dir(out_dir);
    const std::string manifest_path = out_dir + "/manifest.json";
    zenith::RunManifest manifest = start_manifest("eval", config_path, cfg.raw,
                                                  model.cfg.seed, out_dir, manifest_path);
    std::vector<std::string> artifacts;

    std::string test_csv = cfg.data.test_csv;
    if (test_csv.empty()) {
        // no test set given: synthesize a held-out one from the data section,
        // same ground truth as train-time generation, next draw seed
        test_csv = out_dir + "/test.csv";
        const zenith::FeatureSchema schema = resolve_schema(cfg.data);
        const zenith::GroundTruthSpec gt = resolve_ground_truth(cfg.data, schema, cfg.data.seed);
        zenith::generate_dataset(schema, gt, cfg.data.test_examples, cfg.data.seed + 1, test_csv,
                                 cfg.data.bayes_samples);
        artifacts.push_back(test_csv);
        artifacts.push_back(test_csv + ".meta.json");
    }
    const zenith::Dataset data = zenith::load_dataset(model.schema, test_csv);

    const zenith::EvalReport report = zenith::evaluate_with_probe(model, data);
    const std::string report_path = out_dir + "/eval_report.json";
    write_text_file(report_path, report.to_json().dump(2) + "\n");
    artifacts.push_back(report_path);
    finish_manifest(manifest, artifacts, manifest_path);
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// count
// ---------------------------------------------------------------------------

int run_count(const std::string& config_path, const std::string& inline_json,
              const std::string& out_dir) {
    json o;
    std::string origin;
    if (!inline_json.empty()) {
        try {
            o = json::parse(inline_json);
        } catch (const json::exception& e) {
            throw zenith::config_error(std::string("--inline is not valid JSON: ") + e.what());
        }
        origin = "<inline>";
    } else {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw zenith::io_error("cannot read config '" + config_path + "'");
        try {
            o = json::parse(in);
        } catch (const json::exception& e) {
            throw zenith::config_error("config '" + config_path + "' is not valid JSON: " +
                                       e.what());
        }
        origin = config_path;
    }

    // accepts a full config document or a bare model config
    zenith::ModelConfig model;
    DataConfig data;
    if (o.contains("model")) {
        const CliConfig cfg = parse_config_document(o, origin);
        model = cfg.model;
        data = cfg.data;
    } else {
        model = zenith::model_config_from_json(o);
    }
    model.validate();

    // include the feature pipeline when a schema fits the model's token count
    const zenith::FeatureSchema schema = resolve_schema(data);
    const zenith::TokenPlan plan = zenith::default_token_plan(schema);
    json out;
    if (plan.token_count() == model.tokens) {
        out = zenith::count_params(model, schema, plan).to_json();
        out["includes_feature_pipeline"] = true;
    } else if (data.has_schema) {
        throw zenith::config_error("count: data.schema produces " +
                                   zenith::format_int(plan.token_count()) +
                                   " tokens but the model expects " +
                                   zenith::format_int(model.tokens));
    } else {
        out = zenith::count_params(model).to_json();
        out["includes_feature_pipeline"] = false;
    }

    if (!out_dir.empty()) {
        ensure_output_dir(out_dir);
        const std::string manifest_path = out_dir + "/manifest.json";
        zenith::RunManifest manifest =
            start_manifest("count", origin, o, model.seed, out_dir, manifest_path);
        const std::string report_path = out_dir + "/cost_report.json";
        write_text_file(report_path, out.dump(2) + "\n");
        finish_manifest(manifest, {report_path}, manifest_path);
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// probe-sim
// ---------------------------------------------------------------------------

int run_probe(const std::string& config_path, const std::string& checkpoint,
              const std::string& out_dir, int layer_flag, int rows) {
    const CliConfig cfg = load_config(config_path);
    zenith::ZenithModel model = zenith::load_checkpoint(checkpoint);

    ensure_output_dir(out_dir);
    const std::string manifest_path = out_dir + "/manifest.json";
    zenith::RunManifest manifest = start_manifest("probe-sim", config_path, cfg.raw,
                                                  model.cfg.seed, out_dir, manifest_path);
    std::vector<std::string> generated;

    std::string csv = !cfg.data.test_csv.empty() ? cfg.data.test_csv : cfg.data.train_csv;
    if (csv.empty()) {
        // no dataset given: synthesize probe rows from the data section,
        // same ground truth as train-time generation, next draw seed
        csv = out_dir + "/test.csv";
        const zenith::FeatureSchema schema = resolve_schema(cfg.data);
        const zenith::GroundTruthSpec gt = resolve_ground_truth(cfg.data, schema, cfg.data.seed);
        zenith::generate_dataset(schema, gt, cfg.data.test_examples, cfg.data.seed + 1, csv, 0);
        generated.push_back(csv);
        generated.push_back(csv + ".meta.json");
    }
    const zenith::Dataset data = zenith::load_dataset(model.schema, csv);

    const std::int64_t n = std::min<std::int64_t>(rows, data.size());
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    const zenith::ExampleBatch batch = data.slice_batch(idx);

    std::vector<int> layers;
    if (layer_flag > 0)
        layers.push_back(layer_flag);
    else
        for (int l = 1; l <= model.cfg.layers; ++l) layers.push_back(l);

    std::vector<std::string> artifacts = generated;
    json report;
    report["rows"] = n;
    report["layers"] = json::array();
    for (int layer : layers) {
        const zenith::SimilarityMatrix sim = zenith::token_similarity_probe(model, batch, layer);
        const std::string path =
            out_dir + "/similarity_layer" + zenith::format_int(layer) + ".csv";
        write_text_file(path, sim.to_csv());
        artifacts.push_back(path);
        json entry;
        entry["layer"] = layer;
        entry["mean_off_diagonal"] = sim.mean_off_diagonal();
        entry["zero_norm_seen"] = sim.zero_norm_seen;
        entry["csv"] = path;
        report["layers"].push_back(entry);
    }
    const std::string report_path = out_dir + "/probe_report.json";
    write_text_file(report_path, report.dump(2) + "\n");
    artifacts.push_back(report_path);
    finish_manifest(manifest, artifacts, manifest_path);
    std::cout << report.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string name;
    std::string variant;
    std::string status = "ok";   // or "error: <reason>"
    std::int64_t params_total = 0;
    std::int64_t params_activated = 0;
    std::int64_t flops_per_example = 0;
    double logloss = 0.0;
    double auc = 0.0;
    double uauc = 0.0;
    bool metrics_valid = false;
};

std::string sanitize_cell(std::string s) {
    for (char& c : s) {
        if (c == ',') c = ';';
        if (c == '\n') c = ' ';
    }
    return s;
}

int run_sweep(const std::string& config_path, const std::string& out_dir, int parallel,
              std::optional<std::uint64_t> seed_flag, std::optional<int> steps_flag) {
    CliConfig cfg = load_config(config_path);
    if (cfg.sweep.empty())
        throw zenith::config_error("sweep requires a \"sweep\" section with a models array");
    if (seed_flag) {
        cfg.train.seed = *seed_flag;
        ::unsetenv("ZENITH_SEED");
    }
    if (steps_flag) cfg.train.total_steps = *steps_flag;
    cfg.train.validate();

    const zenith::FeatureSchema schema = resolve_schema(cfg.data);
    const zenith::TokenPlan plan = zenith::default_token_plan(schema);
    ensure_output_dir(out_dir);
    const std::string manifest_path = out_dir + "/manifest.json";
    zenith::RunManifest manifest = start_manifest("sweep", config_path, cfg.raw,
                                                  zenith::resolve_seed(cfg.train.seed), out_dir,
                                                  manifest_path);
    std::vector<std::string> artifacts;

    // all rows share one train/test dataset pair
    std::string train_csv = cfg.data.train_csv;
    std::string test_csv = cfg.data.test_csv;
    if (train_csv.empty() || test_csv.empty()) {
        ensure_output_dir(out_dir + "/data");
        const zenith::GroundTruthSpec gt = resolve_ground_truth(cfg.data, schema, cfg.data.seed);
        if (train_csv.empty()) {
            train_csv = out_dir + "/data/train.csv";
            zenith::generate_dataset(schema, gt, cfg.data.examples, cfg.data.seed, train_csv,
                                     cfg.data.bayes_samples);
            artifacts.push_back(train_csv);
            artifacts.push_back(train_csv + ".meta.json");
        }
        if (test_csv.empty()) {
            test_csv = out_dir + "/data/test.csv";
            zenith::generate_dataset(schema, gt, cfg.data.test_examples, cfg.data.seed + 1,
                                     test_csv, cfg.data.bayes_samples);
            artifacts.push_back(test_csv);
            artifacts.push_back(test_csv + ".meta.json");
        }
    }
    const zenith::Dataset train_data = zenith::load_dataset(schema, train_csv);
    const zenith::Dataset test_data = zenith::load_dataset(schema, test_csv);

    std::vector<SweepRow> rows(cfg.sweep.size());
    std::mutex artifacts_mutex;
    std::atomic<std::size_t> next{0};
    const auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.sweep.size()) return;
            const SweepEntry& entry = cfg.sweep[i];
            SweepRow& row = rows[i];
            row.name = entry.name;
            row.variant = entry.model.variant;
            try {
                entry.model.validate();  // a broken row must not sink the sweep
                const zenith::CostReport cost =
                    zenith::count_params(entry.model, schema, plan);
                row.params_total = cost.total_params;
                row.params_activated = cost.activated_params;
                row.flops_per_example = cost.flops_per_example;

                const std::string run_dir = out_dir + "/runs/" + entry.name;
                ensure_output_dir(run_dir);
                zenith::ZenithModel model = zenith::build_model(entry.model, schema, plan);
                const std::string log_path = run_dir + "/train_log.csv";
                zenith::train_model(model, train_data, cfg.train, log_path);
                const std::string ckpt = run_dir + "/checkpoint.znth";
                zenith::save_checkpoint(model, ckpt);
                const zenith::EvalReport report = zenith::evaluate_model(model, test_data);
                row.logloss = report.logloss_value;
                row.auc = report.auc_value;
                row.uauc = report.uauc_value;
                row.metrics_valid = true;
                {
                    std::lock_guard<std::mutex> lock(artifacts_mutex);
                    artifacts.push_back(log_path);
                    artifacts.push_back(ckpt);
                }
            } catch (const std::exception& e) {
                row.status = "error: " + sanitize_cell(e.what());
            }
        }
    };
    if (parallel > 1) {
        std::vector<std::thread> pool;
        for (int t = 0; t < parallel; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    } else {
        work();
    }

    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.params_total < b.params_total;
    });

    // relative logloss against the first (smallest) successful row
    const SweepRow* baseline = nullptr;
    for (const SweepRow& r : rows)
        if (r.metrics_valid) {
            baseline = &r;
            break;
        }

    std::string csv =
        "name,variant,status,params_total,params_activated,flops_per_example,logloss,auc,uauc,"
        "relative_logloss_pct\n";
    for (const SweepRow& r : rows) {
        csv += sanitize_cell(r.name) + ',' + r.variant + ',' + sanitize_cell(r.status) + ',';
        csv += zenith::format_int(r.params_total) + ',' +
               zenith::format_int(r.params_activated) + ',' +
               zenith::format_int(r.flops_per_example) + ',';
        if (r.metrics_valid) {
            const double rel = baseline && baseline->logloss > 0.0
                                   ? 100.0 * (r.logloss - baseline->logloss) / baseline->logloss
                                   : 0.0;
            csv += zenith::format_double(r.logloss) + ',' + zenith::format_double(r.auc) + ',' +
                   zenith::format_double(r.uauc) + ',' + zenith::format_double(rel);
        } else {
            csv += ",,,";
        }
        csv += '\n';
    }
    const std::string table_path = out_dir + "/sweep.csv";
    write_text_file(table_path, csv);
    artifacts.push_back(table_path);
    finish_manifest(manifest, artifacts, manifest_path);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zenith: tokenized CTR ranking models, desk scale"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint, inline_json;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> steps_flag;
    int parallel = 1;
    int probe_layer = 0;
    int probe_rows = 256;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic CTR dataset");
    gen->add_option("--config", config_path, "config JSON")->required();
    gen->add_option("--out", out_path, "output CSV path")->required();
    gen->add_option("--seed", seed_flag, "override the generator seed");

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "config JSON")->required();
    train->add_option("--out", out_path, "output directory")->required();
    train->add_option("--seed", seed_flag, "override the training seed");
    train->add_option("--steps", steps_flag, "override total training steps");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--config", config_path, "config JSON")->required();
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--out", out_path, "output directory")->required();

    CLI::App* count = app.add_subcommand("count", "parameter and FLOP accounting");
    count->add_option("--config", config_path, "config JSON");
    count->add_option("--inline", inline_json, "inline config JSON text");
    count->add_option("--out", out_path, "optional output directory");

    CLI::App* probe = app.add_subcommand("probe-sim", "token similarity probe");
    probe->add_option("--config", config_path, "config JSON")->required();
    probe->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    probe->add_option("--out", out_path, "output directory")->required();
    probe->add_option("--layer", probe_layer, "probe one layer (default: all)");
    probe->add_option("--rows", probe_rows, "examples to probe")->check(CLI::PositiveNumber);

    CLI::App* sweep = app.add_subcommand("sweep", "train a grid of configs and tabulate");
    sweep->add_option("--config", config_path, "config JSON with a sweep section")->required();
    sweep->add_option("--out", out_path, "output directory")->required();
    sweep->add_option("--seed", seed_flag, "override the training seed");
    sweep->add_option("--steps", steps_flag, "override total training steps");
    sweep->add_option("--parallel", parallel, "concurrent runs")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) return run_gen_data(config_path, out_path, seed_flag);
        if (train->parsed()) return run_train(config_path, out_path, seed_flag, steps_flag);
        if (eval->parsed()) return run_eval(config_path, checkpoint, out_path);
        if (count->parsed()) {
            if (config_path.empty() && inline_json.empty()) {
                std::cerr << "count requires --config or --inline\n";
                return 1;
            }
            return run_count(config_path, inline_json, out_path);
        }
        if (probe->parsed()) return run_probe(config_path, checkpoint, out_path, probe_layer,
                                              probe_rows);
        if (sweep->parsed()) return run_sweep(config_path, out_path, parallel, seed_flag,
                                              steps_flag);
    } catch (const zenith::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    std::cerr << "no subcommand\n";
    return 1;
}
