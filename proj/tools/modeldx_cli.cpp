// modeldx: train reference models, generate explanations offline, write
// reports and serve the diagnostics API.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "modeldx/aggregator.hpp"
#include "modeldx/bridge.hpp"
#include "modeldx/explainer.hpp"
#include "modeldx/metrics.hpp"
#include "modeldx/model.hpp"
#include "modeldx/service.hpp"
#include "modeldx/sparse_data.hpp"
#include "modeldx/synthetic.hpp"
#include "modeldx/trainers.hpp"

using namespace modeldx;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMismatch = 2;
constexpr int kExitPartial = 3;

struct CliError : std::runtime_error {
  CliError(int code, std::string kind, const std::string& msg)
      : std::runtime_error(msg), exit_code(code), kind(std::move(kind)) {}
  int exit_code;
  std::string kind;
};

void log(const std::string& msg) { std::cerr << "[modeldx] " << msg << '\n'; }

struct DataOptions {
  std::string path;
  std::string format = "sparse";
  double split = 0.2;
  std::uint64_t seed = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", path, "Dataset file")->required();
    cmd->add_option("--format", format, "sparse|csv")->check(CLI::IsMember({"sparse", "csv"}));
    cmd->add_option("--split", split, "Training fraction");
    cmd->add_option("--seed", seed, "Seed for the split and any randomized step");
  }

  SparseDataset load() const {
    auto d = load_dataset(path, parse_format(format));
    log("loaded " + std::to_string(d.size()) + " items over " + std::to_string(d.num_features()) + " features");
    return split_dataset(d, split, seed);
  }
};

struct BridgeOptions {
  std::string command;
  std::string url;
  int timeout_ms = 10000;

  void attach(CLI::App* cmd) {
    cmd->add_option("--bridge-cmd", command, "External model command (JSON lines over stdio)");
    cmd->add_option("--bridge-url", url, "External model endpoint (POST /score)");
    cmd->add_option("--bridge-timeout-ms", timeout_ms, "Per-request timeout");
  }
  bool enabled() const { return !command.empty() || !url.empty(); }

  ScoredModel connect(const SparseDataset& dataset) const {
    BridgeConfig config;
    config.command = command;
    config.url = url;
    config.timeout = std::chrono::milliseconds(timeout_ms);
    auto model = connect_external_model(config, dataset.num_features());
    calibrate_threshold(model, dataset);
    log("calibrated bridge threshold " + std::to_string(model.threshold));
    return model;
  }
};

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw CliError(kExitError, "io", "cannot write " + path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kExitError, "io", "cannot open " + path);
  return nlohmann::json::parse(in);
}

std::string default_manifest_path(const std::string& explanations) { return explanations + ".manifest.json"; }

std::vector<Explanation> read_explanation_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kExitError, "io", "cannot open " + path);
  return read_explanations(in);
}

void check_manifest(const RunManifest& manifest, const SparseDataset& dataset, const ScoredModel& model) {
  if (manifest.dataset_hash != dataset_hash(dataset))
    throw CliError(kExitMismatch, "manifest_mismatch", "explanations were generated for a different dataset");
  if (manifest.model_hash != model_hash(model))
    throw CliError(kExitMismatch, "manifest_mismatch", "explanations were generated for a different model");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-based diagnostics for binary classifiers on sparse binary data"};
  app.set_config("--config", "", "key=value config file; flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic sparse dataset");
  SyntheticConfig synth_cfg;
  std::string synth_out;
  double fixed_rate = -1.0;
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--items", synth_cfg.items);
  synth->add_option("--features", synth_cfg.features);
  synth->add_option("--mean-active", synth_cfg.mean_active);
  synth->add_option("--bias", synth_cfg.bias);
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--noise-rate", synth_cfg.frequent_noise_rate, "Frequency of a label-independent feature");
  synth->add_option("--strong-rate", synth_cfg.strong_rate, "Frequency of a strongly predictive feature");
  synth->add_option("--positive-rate", fixed_rate, "Exact positive rate instead of planted labels");

  // train
  auto* train = app.add_subcommand("train", "Train a reference model and calibrate its threshold");
  DataOptions train_data;
  train_data.attach(train);
  BridgeOptions train_bridge;
  train_bridge.attach(train);
  std::string kind = "logistic", train_out;
  LogisticConfig lr_cfg;
  double smoothing = 1.0;
  train->add_option("--kind", kind, "logistic|naive_bayes|bridge")
      ->check(CLI::IsMember({"logistic", "naive_bayes", "bridge"}));
  train->add_option("--lr", lr_cfg.learning_rate);
  train->add_option("--epochs", lr_cfg.epochs);
  train->add_option("--l2", lr_cfg.l2);
  train->add_option("--smoothing", smoothing);
  train->add_option("--out", train_out, "Model artifact (JSON)")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "Generate one explanation per item");
  DataOptions explain_data;
  explain_data.attach(explain);
  BridgeOptions explain_bridge;
  explain_bridge.attach(explain);
  std::string explain_model, explain_out, explain_manifest;
  std::size_t parallelism = 1;
  bool no_cache = false;
  double epsilon = 1e-12;
  explain->add_option("--model", explain_model, "Model artifact");
  explain->add_option("--parallelism", parallelism);
  explain->add_flag("--no-cache", no_cache, "Disable the shared score cache");
  explain->add_option("--plateau-epsilon", epsilon);
  explain->add_option("--out", explain_out, "Explanation JSON lines")->required();
  explain->add_option("--manifest", explain_manifest, "Run manifest (default <out>.manifest.json)");

  // report
  auto* report = app.add_subcommand("report", "Write a static summary and top explanation groups");
  DataOptions report_data;
  report_data.attach(report);
  std::string report_model, report_expl, report_manifest, report_out, report_sort = "total";
  std::size_t top = 20;
  report->add_option("--model", report_model)->required();
  report->add_option("--explanations", report_expl)->required();
  report->add_option("--manifest", report_manifest);
  report->add_option("--sort", report_sort, "Group metric to sort by (descending)");
  report->add_option("--top", top);
  report->add_option("--out", report_out)->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the diagnostics API");
  DataOptions serve_data;
  serve_data.attach(serve);
  std::string serve_model, serve_expl, serve_manifest, host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--model", serve_model)->required();
  serve->add_option("--explanations", serve_expl)->required();
  serve->add_option("--manifest", serve_manifest);
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  }

  try {
    if (*synth) {
      SparseDataset d;
      if (fixed_rate >= 0) {
        d = make_fixed_rate(synth_cfg.items, synth_cfg.features, synth_cfg.mean_active, fixed_rate, synth_cfg.seed);
      } else {
        d = make_planted_logistic(synth_cfg).dataset;
      }
      std::ofstream out(synth_out, std::ios::binary);
      if (!out) throw CliError(kExitError, "io", "cannot write " + synth_out);
      out << serialize(d);
      log("wrote " + std::to_string(d.size()) + " items, positive rate " + std::to_string(d.positive_rate()));
    } else if (*train) {
      const auto dataset = train_data.load();
      ScoredModel model;
      if (kind == "logistic") {
        lr_cfg.seed = train_data.seed;
        model = train_logistic(dataset, lr_cfg);
      } else if (kind == "naive_bayes") {
        model = train_naive_bayes(dataset, smoothing);
      } else {
        if (!train_bridge.enabled()) throw CliError(kExitError, "usage", "--kind bridge needs --bridge-cmd or --bridge-url");
        model = train_bridge.connect(dataset);
      }
      save_model(model, train_out);
      log("saved " + model.name + " (threshold " + std::to_string(model.threshold) + ") to " + train_out);
    } else if (*explain) {
      const auto dataset = explain_data.load();
      ScoredModel model;
      if (explain_bridge.enabled()) {
        model = explain_bridge.connect(dataset);
      } else if (!explain_model.empty()) {
        model = load_model(explain_model);
      } else {
        throw CliError(kExitError, "usage", "explain needs --model or a bridge");
      }
      ExplainConfig cfg;
      cfg.seed = explain_data.seed;
      cfg.parallelism = parallelism;
      cfg.use_cache = !no_cache;
      cfg.plateau_epsilon = epsilon;
      const auto run = explain_all(model, dataset, cfg);
      {
        std::ofstream out(explain_out, std::ios::binary);
        if (!out) throw CliError(kExitError, "io", "cannot write " + explain_out);
        write_explanations(out, run.explanations);
      }
      const auto manifest = make_manifest(model, dataset, cfg, run);
      write_json(explain_manifest.empty() ? default_manifest_path(explain_out) : explain_manifest, to_json(manifest));
      log("explained " + std::to_string(run.explanations.size()) + "/" + std::to_string(dataset.size()) +
          " items, " + std::to_string(run.model_calls) + " model calls, " + std::to_string(run.wall_seconds) + " s");
      if (!run.failures.empty()) {
        std::cerr << nlohmann::json{{"error", "partial"},
                                    {"message", std::to_string(run.failures.size()) + " items failed"}}
                         .dump()
                  << '\n';
        return kExitPartial;
      }
    } else if (*report) {
      auto dataset = std::make_shared<const SparseDataset>(report_data.load());
      const auto model = load_model(report_model);
      const auto manifest = manifest_from_json(
          read_json(report_manifest.empty() ? default_manifest_path(report_expl) : report_manifest));
      check_manifest(manifest, *dataset, model);
      auto explanations = read_explanation_file(report_expl);

      auto predictions = predict_all(model, *dataset);
      std::vector<PredictionRecord> train_p, test_p;
      for (std::size_t i = 0; i < predictions.size(); ++i)
        (dataset->splits()[i] == Split::train ? train_p : test_p).push_back(predictions[i]);
      const auto summary = summary_json(train_p, test_p, model.threshold);

      DiagnosticData data(dataset, std::move(predictions), std::move(explanations));
      auto groups = group_explanations(data, data.all_items());
      const SortKey key{parse_metric(report_sort), SortDirection::descending};
      sort_groups(groups, std::span<const SortKey>(&key, 1), *dataset);
      nlohmann::json top_groups = nlohmann::json::array();
      for (std::size_t i = 0; i < groups.size() && i < top; ++i) top_groups.push_back(to_json(groups[i], *dataset));
      write_json(report_out, {{"summary", summary},
                              {"manifest", to_json(manifest)},
                              {"total_groups", groups.size()},
                              {"sort", report_sort},
                              {"groups", std::move(top_groups)}});
      log("wrote report to " + report_out);
    } else if (*serve) {
      auto dataset = serve_data.load();
      auto model = load_model(serve_model);
      const auto manifest = manifest_from_json(
          read_json(serve_manifest.empty() ? default_manifest_path(serve_expl) : serve_manifest));
      auto explanations = read_explanation_file(serve_expl);
      Service service;
      const auto dataset_id = fs::path(serve_data.path).stem().string();
      const auto model_id = fs::path(serve_model).stem().string();
      const auto run_id = fs::path(serve_expl).stem().string();
      service.add_dataset(dataset_id, std::move(dataset));
      service.add_model(model_id, std::move(model));
      service.add_run(run_id, std::move(explanations), manifest);
      HttpFrontend frontend(service);
      const int bound = frontend.bind(host, port);
      if (bound < 0) throw CliError(kExitError, "io", "cannot bind " + host + ":" + std::to_string(port));
      log("serving dataset '" + dataset_id + "', model '" + model_id + "', run '" + run_id + "' on " + host + ":" +
          std::to_string(bound));
      frontend.run();
    }
  } catch (const CliError& e) {
    std::cerr << nlohmann::json{{"error", e.kind}, {"message", e.what()}}.dump() << '\n';
    return e.exit_code;
  } catch (const DataError& e) {
    std::cerr << nlohmann::json{{"error", "data"}, {"message", e.what()}}.dump() << '\n';
    return kExitError;
  } catch (const ModelError& e) {
    std::cerr << nlohmann::json{{"error", "model"}, {"message", e.what()}}.dump() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return kExitError;
  }
  return 0;
}
