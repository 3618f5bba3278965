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

#include "fednoisy/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "fednoisy/error.hpp"
#include "fednoisy/io.hpp"
#include "fednoisy/model.hpp"
#include "fednoisy/rng.hpp"

namespace fednoisy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::kConfig, field + ": " + what);
}

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) config_error(section, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) config_error(section + "." + key, "unknown field");
  }
}

bool has(const json& obj, const char* key) {
  return obj.contains(key) && !obj.at(key).is_null();
}

template <typename T>
T field(const json& obj, const std::string& section, const char* key, T fallback) {
  if (!has(obj, key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(section + "." + key, "wrong type");
  }
}

std::int64_t count_field(const json& obj, const std::string& section, const char* key,
                         std::int64_t fallback, std::int64_t minimum) {
  if (!has(obj, key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) config_error(section + "." + key, "expected an integer");
  auto n = v.get<std::int64_t>();
  if (n < minimum) {
    config_error(section + "." + key, "must be >= " + std::to_string(minimum));
  }
  return n;
}

std::uint64_t seed_field(const json& obj, const std::string& section, const char* key,
                         std::uint64_t fallback) {
  if (!has(obj, key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    config_error(section + "." + key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

DatasetConfig parse_dataset(const json& doc) {
  const std::string s = "dataset";
  check_keys(doc, s,
             {"source", "num_classes", "per_class", "test_per_class", "dim", "separation",
              "path", "test_path", "label_column", "true_label_column"});
  DatasetConfig d;
  const auto source = field<std::string>(doc, s, "source", "synthetic");
  if (source == "synthetic") {
    d.source = DatasetConfig::Source::kSynthetic;
    if (has(doc, "path") || has(doc, "test_path")) {
      config_error("dataset.path", "a synthetic dataset takes no csv path");
    }
    d.num_classes = static_cast<int>(count_field(doc, s, "num_classes", d.num_classes, 2));
    d.per_class = static_cast<std::size_t>(count_field(doc, s, "per_class", 1000, 1));
    d.test_per_class = static_cast<std::size_t>(count_field(doc, s, "test_per_class", 250, 1));
    d.dim = static_cast<std::size_t>(count_field(doc, s, "dim", 2, 1));
    d.separation = field<double>(doc, s, "separation", d.separation);
    if (!(d.separation > 0.0) || !std::isfinite(d.separation)) {
      config_error("dataset.separation", "must be positive");
    }
  } else if (source == "csv") {
    d.source = DatasetConfig::Source::kCsv;
    for (const char* key : {"num_classes", "per_class", "test_per_class", "dim", "separation"}) {
      if (has(doc, key)) config_error(s + "." + key, "only valid for synthetic datasets");
    }
    d.path = field<std::string>(doc, s, "path", "");
    d.test_path = field<std::string>(doc, s, "test_path", "");
    if (d.path.empty()) config_error("dataset.path", "required for csv datasets");
    if (d.test_path.empty()) config_error("dataset.test_path", "required for csv datasets");
    d.label_column = field<std::string>(doc, s, "label_column", d.label_column);
    if (has(doc, "true_label_column")) {
      d.true_label_column = field<std::string>(doc, s, "true_label_column", "");
    }
  } else {
    config_error("dataset.source", "expected 'synthetic' or 'csv', got '" + source + "'");
  }
  return d;
}

PartitionParams parse_partition(const json& doc, std::uint64_t master) {
  const std::string s = "partition";
  check_keys(doc, s, {"scheme", "num_clients", "alpha", "c", "seed"});
  PartitionParams p;
  const auto scheme = field<std::string>(doc, s, "scheme", "iid");
  try {
    p.scheme = parse_partition_scheme(scheme);
  } catch (const Error& e) {
    config_error("partition.scheme", e.message());
  }
  p.num_clients = static_cast<std::size_t>(count_field(doc, s, "num_clients", 10, 1));
  p.seed = seed_field(doc, s, "seed", derive_seed(master, "partition"));
  switch (p.scheme) {
    case PartitionScheme::kIid:
      if (has(doc, "alpha") || has(doc, "c")) {
        config_error("partition", "iid takes neither alpha nor c");
      }
      break;
    case PartitionScheme::kQuantitySkew:
    case PartitionScheme::kLabelDirichlet:
      if (has(doc, "c")) config_error("partition.c", "only valid for noniid-#label");
      if (!has(doc, "alpha")) config_error("partition.alpha", "required for " + scheme);
      p.alpha = field<double>(doc, s, "alpha", 0.0);
      if (!(p.alpha > 0.0) || !std::isfinite(p.alpha)) {
        config_error("partition.alpha", "must be positive");
      }
      break;
    case PartitionScheme::kLabelQuantity:
      if (has(doc, "alpha")) config_error("partition.alpha", "not valid for noniid-#label");
      if (!has(doc, "c")) config_error("partition.c", "required for noniid-#label");
      p.classes_per_client = static_cast<int>(count_field(doc, s, "c", 0, 1));
      break;
  }
  return p;
}

NoiseSpec parse_noise(const json& doc, std::uint64_t master) {
  check_keys(doc, "noise", {"scene", "mode", "eps_global", "eps_min", "eps_max", "asym_map", "seed"});
  json copy = doc;
  if (!copy.contains("scene")) copy["scene"] = "clean";
  copy["seed"] = seed_field(doc, "noise", "seed", derive_seed(master, "noise"));
  try {
    return noise_spec_from_json(copy);
  } catch (const Error& e) {
    config_error("noise", e.message());
  }
}

json partition_to_json(const PartitionParams& p) {
  json doc;
  doc["scheme"] = std::string(to_string(p.scheme));
  doc["num_clients"] = p.num_clients;
  if (p.scheme == PartitionScheme::kQuantitySkew || p.scheme == PartitionScheme::kLabelDirichlet) {
    doc["alpha"] = p.alpha;
  }
  if (p.scheme == PartitionScheme::kLabelQuantity) doc["c"] = p.classes_per_client;
  doc["seed"] = p.seed;
  return doc;
}

json dataset_to_json(const DatasetConfig& d) {
  json doc;
  if (d.source == DatasetConfig::Source::kSynthetic) {
    doc["source"] = "synthetic";
    doc["num_classes"] = d.num_classes;
    doc["per_class"] = d.per_class;
    doc["test_per_class"] = d.test_per_class;
    doc["dim"] = d.dim;
    doc["separation"] = d.separation;
  } else {
    doc["source"] = "csv";
    doc["path"] = d.path;
    doc["test_path"] = d.test_path;
    doc["label_column"] = d.label_column;
    doc["true_label_column"] = d.true_label_column ? json(*d.true_label_column) : json();
  }
  return doc;
}

// ---- artifact layout ----

fs::path data_dir(const RunConfig& c) { return c.output_dir / "data"; }
fs::path partition_dir(const RunConfig& c) { return c.output_dir / "partition"; }
fs::path noise_dir(const RunConfig& c) { return c.output_dir / "noise"; }
fs::path train_dir(const RunConfig& c) { return c.output_dir / "train"; }
fs::path analysis_dir(const RunConfig& c) { return c.output_dir / "analysis"; }

bool synthetic(const RunConfig& c) { return c.dataset.source == DatasetConfig::Source::kSynthetic; }

fs::path train_file(const RunConfig& c) {
  return synthetic(c) ? data_dir(c) / "train.csv" : fs::path(c.dataset.path);
}
fs::path test_file(const RunConfig& c) {
  return synthetic(c) ? data_dir(c) / "test.csv" : fs::path(c.dataset.test_path);
}

std::string display_path(const RunConfig& c, const fs::path& p) {
  auto rel = p.lexically_relative(c.output_dir);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

json file_entry(const RunConfig& c, const fs::path& p) {
  return json{{"path", display_path(c, p)}, {"sha256", sha256_file(p)}};
}

void write_json(const fs::path& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kArtifactMismatch, "missing artifact " + path.generic_string() +
                                                  "; run the preceding stage first");
  }
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kArtifactMismatch, path.generic_string() + ": " + e.what());
  }
}

void expect_hash(const fs::path& file, const std::string& expected, const std::string& what) {
  if (!fs::exists(file)) {
    throw Error(ErrorKind::kArtifactMismatch, "missing " + what + " " + file.generic_string());
  }
  if (sha256_file(file) != expected) {
    throw Error(ErrorKind::kArtifactMismatch,
                what + " " + file.generic_string() + " does not match its manifest hash");
  }
}

std::string manifest_hash(const json& manifest, const std::string& section,
                          const std::string& name) {
  try {
    return manifest.at(section).at(name).at("sha256").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kArtifactMismatch,
                "manifest lacks " + section + "." + name + ".sha256");
  }
}

LabeledDataset load_train(const RunConfig& c) {
  CsvOptions opts;
  if (synthetic(c)) {
    opts.true_label_column = "true_label";
    opts.num_classes = c.dataset.num_classes;
  } else {
    opts.label_column = c.dataset.label_column;
    opts.true_label_column = c.dataset.true_label_column;
  }
  return load_csv(train_file(c), opts);
}

LabeledDataset load_test(const RunConfig& c, int num_classes) {
  CsvOptions opts;
  opts.num_classes = num_classes;
  if (synthetic(c)) {
    opts.true_label_column = "true_label";
  } else {
    opts.label_column = c.dataset.label_column;
  }
  return load_csv(test_file(c), opts);
}

void check_dataset_shapes(const LabeledDataset& train, const LabeledDataset& test) {
  if (train.dim() != test.dim()) {
    throw Error(ErrorKind::kConfig, "dataset.test_path: test features have width " +
                                        std::to_string(test.dim()) + ", training set " +
                                        std::to_string(train.dim()));
  }
}

FedConfig resolved_federation(const RunConfig& c, const LabeledDataset& ds,
                              std::size_t num_clients) {
  FedConfig fc = c.federation;
  fc.num_clients = num_clients;
  fc.model.input_dim = ds.dim();
  fc.model.num_classes = static_cast<std::size_t>(ds.num_classes());
  fc.validate();
  return fc;
}

std::string lr_tag(double lr) { return "lr_" + format_real(lr); }

fs::path repeat_dir(const RunConfig& c, double lr, int r) {
  fs::path base = train_dir(c);
  if (!c.lr_grid.empty()) base /= lr_tag(lr);
  return base / ("repeat_" + std::to_string(r));
}

std::vector<double> learning_rates(const RunConfig& c) {
  if (c.lr_grid.empty()) return {c.federation.trainer.lr};
  return c.lr_grid;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

double tail_average(const std::vector<RoundRecord>& records) {
  std::size_t evaluated = 0;
  for (const auto& r : records) evaluated += r.test_accuracy ? 1 : 0;
  if (evaluated == 0) return 0.0;
  return last_k_average(records, std::min<std::size_t>(10, evaluated));
}

std::string mode_tag(const NoiseSpec& spec) {
  if (spec.scene == NoiseScene::kClean || spec.mode == NoiseMode::kNone) return "clean";
  return std::string(to_string(spec.mode));
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) config_error("config", "expected a JSON object");
  check_keys(doc, "config",
             {"seed", "output_dir", "repeats", "dataset", "partition", "noise", "federation",
              "lr_grid"});
  RunConfig c;
  c.seed = seed_field(doc, "config", "seed", 0);
  c.output_dir = field<std::string>(doc, "config", "output_dir", "fednoisy-out");
  c.repeats = static_cast<int>(count_field(doc, "config", "repeats", 1, 1));
  c.dataset = parse_dataset(doc.value("dataset", json::object()));
  c.partition = parse_partition(doc.value("partition", json::object()), c.seed);
  c.noise = parse_noise(doc.value("noise", json::object()), c.seed);

  json fed = doc.value("federation", json::object());
  check_keys(fed, "federation",
             {"num_clients", "rounds", "selection_fraction", "local_epochs", "eval_every",
              "threads", "keep_checkpoints", "model", "trainer"});
  if (has(fed, "num_clients") &&
      count_field(fed, "federation", "num_clients", 0, 1) !=
          static_cast<std::int64_t>(c.partition.num_clients)) {
    config_error("federation.num_clients", "must equal partition.num_clients");
  }
  fed["num_clients"] = c.partition.num_clients;
  const bool keep = field<bool>(fed, "federation", "keep_checkpoints", false);
  fed.erase("keep_checkpoints");
  const std::size_t dim = synthetic(c) ? c.dataset.dim : 1;
  const std::size_t classes = synthetic(c) ? static_cast<std::size_t>(c.dataset.num_classes) : 2;
  try {
    c.federation = fed_config_from_json(fed, dim, classes);
  } catch (const Error& e) {
    config_error("federation", e.message());
  }
  c.federation.keep_checkpoints = keep;

  if (has(doc, "lr_grid")) {
    c.lr_grid = field<std::vector<double>>(doc, "config", "lr_grid", {});
    for (double lr : c.lr_grid) {
      if (!(lr > 0.0) || !std::isfinite(lr)) config_error("lr_grid", "rates must be positive");
    }
    std::set<double> distinct(c.lr_grid.begin(), c.lr_grid.end());
    if (distinct.size() != c.lr_grid.size()) config_error("lr_grid", "duplicate rate");
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["repeats"] = c.repeats;
  doc["dataset"] = dataset_to_json(c.dataset);
  doc["partition"] = partition_to_json(c.partition);
  doc["noise"] = noise_spec_to_json(c.noise);
  json fed = fed_config_to_json(c.federation);
  fed.erase("seed");
  fed.erase("model");
  json model;
  model["kind"] = std::string(to_string(c.federation.model.kind));
  if (c.federation.model.kind == ModelKind::kMlp) {
    model["hidden"] = c.federation.model.hidden;
    model["activation"] = std::string(to_string(c.federation.model.activation));
  }
  fed["model"] = model;
  fed["keep_checkpoints"] = c.federation.keep_checkpoints;
  doc["federation"] = fed;
  if (!c.lr_grid.empty()) doc["lr_grid"] = c.lr_grid;
  return doc;
}

json load_config_document(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.message());
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, path.generic_string() + ": " + e.what());
  }
}

std::uint64_t dataset_seed(std::uint64_t seed) { return derive_seed(seed, "dataset"); }
std::uint64_t test_set_seed(std::uint64_t seed) { return derive_seed(seed, "test-set"); }
std::uint64_t repeat_seed(std::uint64_t seed, int repeat) {
  return derive_seed(seed, "repeat", static_cast<std::uint64_t>(repeat));
}

DataPair build_dataset(const RunConfig& c) {
  if (synthetic(c)) {
    const auto& d = c.dataset;
    return {make_synthetic_blobs(d.num_classes, d.per_class, d.dim, d.separation,
                                 dataset_seed(c.seed)),
            make_synthetic_blobs(d.num_classes, d.test_per_class, d.dim, d.separation,
                                 test_set_seed(c.seed))};
  }
  LabeledDataset train = load_train(c);
  LabeledDataset test = load_test(c, train.num_classes());
  check_dataset_shapes(train, test);
  return {std::move(train), std::move(test)};
}

void cmd_partition(const RunConfig& c) {
  if (synthetic(c)) {
    DataPair data = build_dataset(c);
    save_csv(data.train, train_file(c));
    save_csv(data.test, test_file(c));
  }
  LabeledDataset ds = load_train(c);
  PartitionPlan plan = make_partition(ds, c.partition);

  const fs::path dir = partition_dir(c);
  save_plan(plan, dir / "plan.json");

  std::ostringstream hist;
  hist << "client";
  for (int j = 0; j < ds.num_classes(); ++j) hist << ",class_" << j;
  hist << ",total\n";
  for (std::size_t k = 0; k < plan.num_clients(); ++k) {
    ClassHistogram h = class_histogram(ds, std::span<const std::size_t>(plan.clients[k]));
    hist << k;
    for (std::size_t n : h.counts) hist << ',' << n;
    hist << ',' << h.total() << '\n';
  }
  write_text_file(dir / "histograms.csv", hist.str());

  json manifest;
  manifest["stage"] = "partition";
  manifest["version"] = kLibraryVersion;
  manifest["partition"] = partition_to_json(c.partition);
  manifest["effective_seed"] = plan.seed;
  manifest["inputs"]["dataset"] = file_entry(c, train_file(c));
  manifest["outputs"]["plan"] = file_entry(c, dir / "plan.json");
  manifest["outputs"]["histograms"] = file_entry(c, dir / "histograms.csv");
  write_json(dir / "manifest.json", manifest);
}

void cmd_noise(const RunConfig& c) {
  LabeledDataset ds = load_train(c);
  const std::string dataset_hash = sha256_file(train_file(c));
  json manifest = noise_manifest(c.noise, std::nullopt);

  SceneResult result = [&] {
    if (c.noise.scene == NoiseScene::kGlobalized) {
      return globalized_scene(ds, c.noise, c.partition);
    }
    const fs::path pdir = partition_dir(c);
    json pm = read_json(pdir / "manifest.json");
    if (manifest_hash(pm, "inputs", "dataset") != dataset_hash) {
      throw Error(ErrorKind::kArtifactMismatch,
                  "partition plan was built from a different dataset");
    }
    if (pm.value("partition", json()) != partition_to_json(c.partition)) {
      throw Error(ErrorKind::kArtifactMismatch,
                  "partition plan was built with different partition settings");
    }
    expect_hash(pdir / "plan.json", manifest_hash(pm, "outputs", "plan"), "plan");
    PartitionPlan plan = load_plan(pdir / "plan.json");
    if (plan.num_samples != ds.size()) {
      throw Error(ErrorKind::kArtifactMismatch, "plan covers " +
                                                    std::to_string(plan.num_samples) +
                                                    " samples, dataset has " +
                                                    std::to_string(ds.size()));
    }
    manifest["inputs"]["plan"] = file_entry(c, pdir / "plan.json");
    return run_scene_on_plan(ds, c.noise, std::move(plan));
  }();

  const fs::path dir = noise_dir(c);
  save_csv(result.dataset, dir / "noisy_train.csv");
  save_plan(result.plan, dir / "plan.json");

  json report = noise_manifest(c.noise, result.report);
  for (const auto& [key, value] : report.items()) manifest[key] = value;
  manifest["stage"] = "noise";
  manifest["version"] = kLibraryVersion;
  manifest["partition"] = partition_to_json(c.partition);
  manifest["inputs"]["dataset"] = json{{"path", display_path(c, train_file(c))},
                                       {"sha256", dataset_hash}};
  manifest["outputs"]["noisy_train"] = file_entry(c, dir / "noisy_train.csv");
  manifest["outputs"]["plan"] = file_entry(c, dir / "plan.json");
  write_json(dir / "manifest.json", manifest);
}

std::vector<SummaryRow> cmd_train(const RunConfig& c) {
  const fs::path ndir = noise_dir(c);
  json nm = read_json(ndir / "manifest.json");
  if (manifest_hash(nm, "inputs", "dataset") != sha256_file(train_file(c))) {
    throw Error(ErrorKind::kArtifactMismatch, "noisy labels were built from a different dataset");
  }
  json expected_spec = noise_spec_to_json(c.noise);
  for (const auto& [key, value] : expected_spec.items()) {
    if (nm.value(key, json()) != value) {
      throw Error(ErrorKind::kArtifactMismatch,
                  "noise manifest field '" + key + "' differs from the configuration");
    }
  }
  if (nm.value("partition", json()) != partition_to_json(c.partition)) {
    throw Error(ErrorKind::kArtifactMismatch,
                "noise stage used different partition settings");
  }
  const std::string noisy_hash = manifest_hash(nm, "outputs", "noisy_train");
  const std::string plan_hash = manifest_hash(nm, "outputs", "plan");
  expect_hash(ndir / "noisy_train.csv", noisy_hash, "noisy dataset");
  expect_hash(ndir / "plan.json", plan_hash, "plan");

  LabeledDataset clean = load_train(c);
  CsvOptions opts;
  opts.num_classes = clean.num_classes();
  if (clean.has_true_labels()) opts.true_label_column = "true_label";
  LabeledDataset noisy = load_csv(ndir / "noisy_train.csv", opts);
  LabeledDataset test = load_test(c, clean.num_classes());
  check_dataset_shapes(noisy, test);
  PartitionPlan plan = load_plan(ndir / "plan.json");
  const std::string test_hash = sha256_file(test_file(c));

  std::vector<SummaryRow> rows;
  for (double lr : learning_rates(c)) {
    std::vector<double> tails;
    for (int r = 0; r < c.repeats; ++r) {
      FedConfig fc = resolved_federation(c, noisy, plan.num_clients());
      fc.trainer.lr = lr;
      fc.seed = repeat_seed(c.seed, r);

      json inputs;
      inputs["noisy_train"] = noisy_hash;
      inputs["plan"] = plan_hash;
      inputs["test"] = test_hash;
      inputs["federation"] = fed_config_to_json(fc);
      inputs["keep_checkpoints"] = fc.keep_checkpoints;
      inputs["noise_rate"] = c.noise.nominal_rate();

      const fs::path dir = repeat_dir(c, lr, r);
      const fs::path mpath = dir / "run_manifest.json";
      if (fs::exists(mpath)) {
        bool complete = false;
        try {
          json old = json::parse(read_text_file(mpath));
          if (old.at("inputs") == inputs) {
            complete = true;
            for (const auto& [name, entry] : old.at("outputs").items()) {
              const fs::path f = c.output_dir / entry.at("path").get<std::string>();
              if (!fs::exists(f) || sha256_file(f) != entry.at("sha256").get<std::string>()) {
                complete = false;
              }
            }
          }
        } catch (const std::exception&) {
          complete = false;
        }
        if (complete) {
          tails.push_back(tail_average(read_telemetry_csv(dir / "telemetry.csv")));
          continue;
        }
      }

      FederationResult result;
      try {
        result = run_federation(noisy, plan, fc, test, c.noise.nominal_rate());
      } catch (const Error& e) {
        throw Error(e.kind(), "repeat " + std::to_string(r) + " (seed " +
                                  std::to_string(fc.seed) + "): " + e.message());
      }
      write_telemetry_csv(dir / "telemetry.csv", result.records);
      save_checkpoint(dir / "final.ckpt", {result.final_params, fc.rounds, fc.seed});

      json manifest;
      manifest["stage"] = "train";
      manifest["version"] = kLibraryVersion;
      manifest["repeat"] = r;
      manifest["seed"] = fc.seed;
      manifest["noise"] = expected_spec;
      manifest["partition"] = partition_to_json(c.partition);
      manifest["inputs"] = inputs;
      manifest["outputs"]["telemetry"] = file_entry(c, dir / "telemetry.csv");
      manifest["outputs"]["final_checkpoint"] = file_entry(c, dir / "final.ckpt");
      if (fc.keep_checkpoints) {
        for (std::size_t t = 0; t < result.checkpoints.size(); ++t) {
          char name[32];
          std::snprintf(name, sizeof name, "round_%04zu.ckpt", t);
          const fs::path p = dir / "checkpoints" / name;
          save_checkpoint(p, {result.checkpoints[t], static_cast<int>(t), fc.seed});
          manifest["outputs"][std::string("checkpoint_") + std::to_string(t)] = file_entry(c, p);
        }
      }
      const double tail = tail_average(result.records);
      manifest["last10_accuracy"] = tail;
      write_json(mpath, manifest);
      tails.push_back(tail);
    }
    auto [mean, sd] = mean_std(tails);
    rows.push_back({lr, c.repeats, mean, sd, false});
  }
  auto best = std::max_element(rows.begin(), rows.end(),
                               [](const SummaryRow& a, const SummaryRow& b) { return a.mean < b.mean; });
  best->selected = true;

  std::ostringstream out;
  out << "lr,repeats,mean,std,summary,selected\n";
  for (const auto& row : rows) {
    out << format_real(row.lr) << ',' << row.repeats << ',' << format_real(row.mean) << ','
        << format_real(row.std) << ',' << percent(row.mean) << "±" << percent(row.std) << ','
        << (row.selected ? 1 : 0) << '\n';
  }
  write_text_file(train_dir(c) / "summary.csv", out.str());
  return rows;
}

void cmd_analyze(const AnalyzeInputs& in) {
  std::ostringstream last10;
  std::ostringstream grad;
  for (const auto& path : in.telemetry) {
    auto records = read_telemetry_csv(path);
    std::size_t evaluated = 0;
    for (const auto& r : records) evaluated += r.test_accuracy ? 1 : 0;
    if (evaluated > 0) {
      if (last10.tellp() == 0) last10 << "telemetry,last10_accuracy\n";
      last10 << path.generic_string() << ',' << format_real(tail_average(records)) << '\n';
    }
    for (const auto& r : records) {
      if (grad.tellp() == 0) grad << "telemetry,round,grad_norm\n";
      grad << path.generic_string() << ',' << r.round << ',' << format_real(r.grad_norm) << '\n';
    }
  }
  write_text_file(in.output_dir / "last10.csv", last10.str());
  write_text_file(in.output_dir / "grad_norm.csv", grad.str());

  AccuracyTable table(in.table_scale);
  if (in.table) table = load_accuracy_table(*in.table, in.table_scale);
  auto drops = drop_ratio_series(table);
  auto sens = sensitivity_series(table);
  write_drop_ratio_csv(in.output_dir / "drop_ratio.csv", drops);
  write_sensitivity_csv(in.output_dir / "sensitivity.csv", sens);

  std::vector<NoiseRatioRow> ratios;
  if (in.noise_manifest) {
    json nm;
    try {
      nm = json::parse(read_text_file(*in.noise_manifest));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kParse, in.noise_manifest->generic_string() + ": " + e.what());
    }
    if (nm.contains("overall_ratio") && !nm.at("overall_ratio").is_null()) {
      ratios = noise_ratio_series(noise_report_from_json(nm));
    }
  }
  write_noise_ratio_csv(in.output_dir / "noise_ratio.csv", ratios);
}

void analyze_run(const RunConfig& c) {
  const fs::path out = analysis_dir(c);
  AnalyzeInputs in;
  in.output_dir = out;
  in.noise_manifest = noise_dir(c) / "manifest.json";
  in.table_scale = AccuracyScale::kFraction;

  std::ostringstream per_repeat;
  per_repeat << "lr,repeat,seed,last10_accuracy,mean_grad_norm_last20\n";
  std::ostringstream grad;
  grad << "lr,repeat,round,grad_norm\n";
  for (double lr : learning_rates(c)) {
    for (int r = 0; r < c.repeats; ++r) {
      auto records = read_telemetry_csv(repeat_dir(c, lr, r) / "telemetry.csv");
      double tail_grad = 0.0;
      const std::size_t n = std::min<std::size_t>(20, records.size());
      for (std::size_t i = records.size() - n; i < records.size(); ++i) {
        tail_grad += records[i].grad_norm;
      }
      if (n > 0) tail_grad /= static_cast<double>(n);
      per_repeat << format_real(lr) << ',' << r << ',' << repeat_seed(c.seed, r) << ','
                 << format_real(tail_average(records)) << ',' << format_real(tail_grad) << '\n';
      for (const auto& rec : records) {
        grad << format_real(lr) << ',' << r << ',' << rec.round << ','
             << format_real(rec.grad_norm) << '\n';
      }
    }
  }

  // Summary of the selected rate, as a one-row accuracy table.
  const auto summary = train_dir(c) / "summary.csv";
  std::istringstream lines(read_text_file(summary));
  std::string line;
  std::getline(lines, line);
  double selected_mean = 0.0;
  while (std::getline(lines, line)) {
    auto f = split_csv_line(line);
    if (f.size() == 6 && f[5] == "1") selected_mean = std::stod(f[2]);
  }
  std::ostringstream table;
  table << "partition,mode,eps,accuracy\n"
        << to_string(c.partition.scheme) << ',' << mode_tag(c.noise) << ','
        << format_real(c.noise.nominal_rate()) << ',' << format_real(selected_mean) << '\n';
  write_text_file(out / "accuracy_table.csv", table.str());
  in.table = out / "accuracy_table.csv";

  cmd_analyze(in);
  write_text_file(out / "last10.csv", per_repeat.str());
  write_text_file(out / "grad_norm.csv", grad.str());
}

void cmd_pipeline(const RunConfig& c) {
  cmd_partition(c);
  cmd_noise(c);
  cmd_train(c);
  analyze_run(c);

  json index;
  index["version"] = kLibraryVersion;
  index["config"] = run_config_to_json(c);
  json files = json::object();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(c.output_dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "run.json") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) files[display_path(c, p)] = sha256_file(p);
  index["files"] = files;
  write_json(c.output_dir / "run.json", index);
}

int exit_code_for(const std::exception& error) {
  if (const auto* e = dynamic_cast<const Error*>(&error)) {
    switch (e->kind()) {
      case ErrorKind::kConfig: return 2;
      case ErrorKind::kArtifactMismatch: return 3;
      case ErrorKind::kNonFiniteParameters: return 4;
      default: return 1;
    }
  }
  return 1;
}

}  // namespace fednoisy
