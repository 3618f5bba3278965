/*
 * Copyright 2026 The FedNoisy-Sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fednoisy/analysis.hpp"
#include "fednoisy/error.hpp"
#include "fednoisy/pipeline.hpp"

namespace {

using nlohmann::json;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> repeats;
  std::optional<int> num_clients;
  bool iid = false;
  std::optional<double> labeldir;
  std::optional<int> label_count;
  std::optional<double> quantity;
  std::optional<std::string> scene;
  std::optional<std::string> noise_mode;
  std::optional<double> eps;
  std::optional<double> eps_min;
  std::optional<double> eps_max;
  std::optional<int> rounds;
  std::optional<int> local_epochs;
  std::optional<double> fraction;
  std::optional<std::string> method;
  std::optional<double> lr;
  std::vector<double> lr_grid;
  std::optional<int> threads;
};

void add_run_options(CLI::App* cmd, std::string& config_path, Overrides& o) {
  cmd->add_option("-c,--config", config_path, "JSON run configuration")->required();
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--output-dir", o.output_dir, "Output directory");
  cmd->add_option("--repeats", o.repeats, "Federations with distinct seeds");
  cmd->add_option("--num-clients", o.num_clients, "Number of clients K");
  cmd->add_flag("--iid", o.iid, "IID partition");
  cmd->add_option("--noniid-labeldir", o.labeldir, "Dirichlet label skew with concentration alpha");
  cmd->add_option("--noniid-label-count", o.label_count,
                  "Label-quantity skew, c classes per client (noniid-#label)");
  cmd->add_option("--noniid-quantity", o.quantity, "Dirichlet quantity skew with alpha");
  cmd->add_option("--scene", o.scene, "clean | globalized | localized | real-world");
  cmd->add_option("--noise-mode", o.noise_mode, "sym | asym");
  cmd->add_option("--eps", o.eps, "Global noise ratio");
  cmd->add_option("--eps-min", o.eps_min, "Localized noise lower bound");
  cmd->add_option("--eps-max", o.eps_max, "Localized noise upper bound");
  cmd->add_option("--rounds", o.rounds, "Communication rounds T");
  cmd->add_option("--local-epochs", o.local_epochs, "Local epochs E");
  cmd->add_option("--fraction", o.fraction, "Client selection fraction");
  cmd->add_option("--method", o.method, "ce | mixup | sce | gce | mae | coteaching");
  cmd->add_option("--lr", o.lr, "Learning rate");
  cmd->add_option("--lr-grid", o.lr_grid, "Learning rates to sweep");
  cmd->add_option("--threads", o.threads, "Client-training threads");
}

void set_scheme(json& partition, const std::string& scheme) {
  partition["scheme"] = scheme;
  partition.erase("alpha");
  partition.erase("c");
}

void apply(json& doc, const Overrides& o) {
  if (o.seed) doc["seed"] = *o.seed;
  if (o.output_dir) doc["output_dir"] = *o.output_dir;
  if (o.repeats) doc["repeats"] = *o.repeats;

  json& part = doc["partition"];
  if (part.is_null()) part = json::object();
  int schemes = (o.iid ? 1 : 0) + (o.labeldir ? 1 : 0) + (o.label_count ? 1 : 0) +
                (o.quantity ? 1 : 0);
  if (schemes > 1) {
    throw fednoisy::Error(fednoisy::ErrorKind::kConfig,
                          "partition: at most one partition flag may be given");
  }
  if (o.iid) set_scheme(part, "iid");
  if (o.labeldir) {
    set_scheme(part, "noniid-labeldir");
    part["alpha"] = *o.labeldir;
  }
  if (o.label_count) {
    set_scheme(part, "noniid-#label");
    part["c"] = *o.label_count;
  }
  if (o.quantity) {
    set_scheme(part, "noniid-quantity");
    part["alpha"] = *o.quantity;
  }
  if (o.num_clients) part["num_clients"] = *o.num_clients;

  json& noise = doc["noise"];
  if (noise.is_null()) noise = json::object();
  if (o.scene) noise["scene"] = *o.scene;
  if (o.noise_mode) noise["mode"] = *o.noise_mode;
  if (o.eps) noise["eps_global"] = *o.eps;
  if (o.eps_min) noise["eps_min"] = *o.eps_min;
  if (o.eps_max) noise["eps_max"] = *o.eps_max;

  json& fed = doc["federation"];
  if (fed.is_null()) fed = json::object();
  if (o.num_clients && fed.contains("num_clients")) fed["num_clients"] = *o.num_clients;
  if (o.rounds) fed["rounds"] = *o.rounds;
  if (o.local_epochs) fed["local_epochs"] = *o.local_epochs;
  if (o.fraction) fed["selection_fraction"] = *o.fraction;
  if (o.threads) fed["threads"] = *o.threads;
  if (o.method || o.lr) {
    json& trainer = fed["trainer"];
    if (trainer.is_null()) trainer = json::object();
    if (o.method && trainer.value("method", std::string("ce")) != *o.method) {
      trainer["method"] = *o.method;
      trainer.erase("params");
    }
    if (o.lr) trainer["lr"] = *o.lr;
  }
  if (!o.lr_grid.empty()) doc["lr_grid"] = o.lr_grid;
}

fednoisy::RunConfig load(const std::string& path, const Overrides& o) {
  json doc = fednoisy::load_config_document(path);
  apply(doc, o);
  return fednoisy::run_config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated noisy-label learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  auto* partition = app.add_subcommand("partition", "Split the dataset across clients");
  auto* noise = app.add_subcommand("noise", "Corrupt labels for the configured scene");
  auto* train = app.add_subcommand("train", "Run the federations and summarize");
  auto* pipeline = app.add_subcommand("pipeline", "partition, noise, train and analyze");
  for (auto* cmd : {partition, noise, train, pipeline}) {
    add_run_options(cmd, config_path, overrides);
  }

  auto* analyze = app.add_subcommand("analyze", "Derived metrics from telemetry or tables");
  fednoisy::AnalyzeInputs analyze_inputs;
  std::string scale = "percent";
  std::optional<std::string> table;
  std::optional<std::string> noise_manifest;
  std::string analyze_out;
  std::string analyze_config;
  std::vector<std::string> telemetry;
  analyze->add_option("--telemetry", telemetry, "Telemetry CSV files");
  analyze->add_option("--table", table, "Accuracy table CSV (partition,mode,eps,accuracy)");
  analyze->add_option("--scale", scale, "Accuracy scale of the table: percent | fraction")
      ->check(CLI::IsMember({"percent", "fraction"}));
  analyze->add_option("--noise-manifest", noise_manifest, "Noise manifest JSON");
  analyze->add_option("-o,--out", analyze_out, "Output directory for metric CSVs");
  analyze->add_option("-c,--config", analyze_config,
                      "Analyze the train-stage outputs of this run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) {
      if (!analyze_config.empty()) {
        fednoisy::analyze_run(
            fednoisy::run_config_from_json(fednoisy::load_config_document(analyze_config)));
        return 0;
      }
      if (analyze_out.empty()) {
        throw fednoisy::Error(fednoisy::ErrorKind::kConfig, "analyze: --out is required");
      }
      for (const auto& t : telemetry) analyze_inputs.telemetry.emplace_back(t);
      if (table) analyze_inputs.table = *table;
      if (noise_manifest) analyze_inputs.noise_manifest = *noise_manifest;
      analyze_inputs.table_scale = fednoisy::parse_accuracy_scale(scale);
      analyze_inputs.output_dir = analyze_out;
      fednoisy::cmd_analyze(analyze_inputs);
      return 0;
    }
    fednoisy::RunConfig config = load(config_path, overrides);
    if (*partition) fednoisy::cmd_partition(config);
    if (*noise) fednoisy::cmd_noise(config);
    if (*train) {
      for (const auto& row : fednoisy::cmd_train(config)) {
        std::cout << "lr=" << row.lr << " last10 " << 100.0 * row.mean << " +- "
                  << 100.0 * row.std << (row.selected ? " (selected)" : "") << '\n';
      }
    }
    if (*pipeline) fednoisy::cmd_pipeline(config);
  } catch (const std::exception& e) {
    std::cerr << "fednoisy: " << e.what() << '\n';
    return fednoisy::exit_code_for(e);
  }
  return 0;
}
