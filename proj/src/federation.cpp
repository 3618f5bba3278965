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

#include "fednoisy/federation.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "fednoisy/error.hpp"
#include "fednoisy/io.hpp"
#include "fednoisy/rng.hpp"

namespace fednoisy {

std::size_t selection_count(std::size_t num_clients, double fraction) {
  double product = fraction * static_cast<double>(num_clients);
  return static_cast<std::size_t>(std::ceil(product - 1e-9));
}

void FedConfig::validate() const {
  require(num_clients >= 1, ErrorKind::kConfig, "federation.num_clients must be >= 1");
  require(rounds >= 1, ErrorKind::kConfig, "federation.rounds must be >= 1");
  require(selection_fraction > 0.0 && selection_fraction <= 1.0, ErrorKind::kConfig,
          "federation.selection_fraction must lie in (0, 1]");
  require(selection_count(num_clients, selection_fraction) >= 1, ErrorKind::kConfig,
          "federation selects no clients");
  require(local_epochs >= 1, ErrorKind::kConfig, "federation.local_epochs must be >= 1");
  require(eval_every >= 1, ErrorKind::kConfig, "federation.eval_every must be >= 1");
  require(threads >= 1, ErrorKind::kConfig, "federation.threads must be >= 1");
  model.validate();
  TrainerConfig local = trainer;
  local.epochs = local_epochs;
  local.validate();
}

std::vector<std::size_t> select_clients(std::size_t num_clients, double fraction,
                                        int round_t, std::uint64_t seed) {
  require(num_clients >= 1, ErrorKind::kInvalidArgument, "K must be >= 1");
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kInvalidArgument,
          "selection fraction must lie in (0, 1]");
  const std::size_t m = selection_count(num_clients, fraction);
  require(m >= 1, ErrorKind::kInvalidArgument, "selection is empty");
  std::vector<std::size_t> pool(num_clients);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "select", static_cast<std::uint64_t>(round_t)));
  // Partial Fisher-Yates: the first m slots become the sample.
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(num_clients - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

ModelParams aggregate(std::span<const ModelParams> models,
                      std::span<const double> weights) {
  require(!models.empty(), ErrorKind::kEmptyInput, "nothing to aggregate");
  require(models.size() == weights.size(), ErrorKind::kLengthMismatch,
          "model and weight counts differ");
  double total = 0.0;
  for (double w : weights) {
    require(w > 0.0 && std::isfinite(w), ErrorKind::kInvalidArgument,
            "aggregation weights must be positive");
    total += w;
  }
  const ModelParams& base = models.front();
  for (const auto& m : models) {
    require(m.layout == base.layout && m.values.size() == base.values.size(),
            ErrorKind::kLayoutMismatch, "aggregated models differ in layout");
  }
  ModelParams out = base;
  for (std::size_t k = 1; k < models.size(); ++k) {
    const double coeff = weights[k] / total;
    const auto& v = models[k].values;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] += coeff * (v[i] - base.values[i]);
    }
  }
  return out;
}

double evaluate(const ModelParams& params, const LabeledDataset& test_set) {
  require(test_set.size() > 0, ErrorKind::kEmptyDataset, "test set is empty");
  require(test_set.dim() == params.layout.input_dim &&
              static_cast<std::size_t>(test_set.num_classes()) == params.layout.num_classes,
          ErrorKind::kShapeMismatch, "test set does not match the model layout");
  Matrix logits = forward_logits(params, test_set.features());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k) {
      if (z[k] > z[best]) best = k;
    }
    if (static_cast<ClassId>(best) == test_set.labels()[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, "global-init"); }

std::uint64_t client_train_seed(std::uint64_t seed, int round_t, std::size_t client) {
  return derive_seed(seed, "client-train", static_cast<std::uint64_t>(round_t), client);
}

double l2_distance(const ModelParams& a, const ModelParams& b) {
  require(a.values.size() == b.values.size(), ErrorKind::kLayoutMismatch,
          "parameter vectors differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

namespace {

template <typename Fn>
void for_each_index(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

FederationResult run_federation(const LabeledDataset& train_set, const PartitionPlan& plan,
                                const FedConfig& config, const LabeledDataset& test_set,
                                std::optional<double> noise_rate) {
  config.validate();
  require(plan.num_clients() == config.num_clients, ErrorKind::kArtifactMismatch,
          "plan has " + std::to_string(plan.num_clients()) + " clients, config expects " +
              std::to_string(config.num_clients));
  require(config.model.input_dim == train_set.dim() &&
              config.model.num_classes == static_cast<std::size_t>(train_set.num_classes()),
          ErrorKind::kShapeMismatch, "model layout does not match the dataset");
  require(test_set.dim() == train_set.dim(), ErrorKind::kShapeMismatch,
          "test set feature width differs from the training set");
  validate_plan(plan, train_set.size());

  TrainerConfig trainer = config.trainer;
  trainer.epochs = config.local_epochs;
  if (trainer.method == TrainMethod::kCoteaching && !trainer.forget_rate) {
    trainer.forget_rate = noise_rate.value_or(0.0);
  }

  std::vector<LabeledDataset> locals;
  locals.reserve(plan.num_clients());
  for (std::size_t k = 0; k < plan.num_clients(); ++k) {
    locals.push_back(restrict_client(train_set, plan, k));
  }
  // Co-teaching keeps each client's second network between rounds.
  std::map<std::size_t, ModelParams> auxiliary;

  FederationResult result;
  ModelParams global = init_params(config.model, init_seed(config.seed));
  if (config.keep_checkpoints) result.checkpoints.push_back(global);

  for (int t = 1; t <= config.rounds; ++t) {
    RoundRecord record;
    record.round = t;
    record.selected_clients =
        select_clients(config.num_clients, config.selection_fraction, t, config.seed);
    const auto& selected = record.selected_clients;

    std::vector<ModelParams> updated(selected.size());
    std::vector<double> losses(selected.size());
    if (trainer.method == TrainMethod::kCoteaching) {
      for (std::size_t k : selected) {
        if (!auxiliary.contains(k)) {
          auxiliary.emplace(k, init_params(config.model, derive_seed(config.seed, "aux-init", k)));
        }
      }
    }
    for_each_index(selected.size(), config.threads, [&](std::size_t i) {
      const std::size_t k = selected[i];
      const std::uint64_t seed = client_train_seed(config.seed, t, k);
      if (trainer.method == TrainMethod::kCoteaching) {
        ModelParams& aux = auxiliary.at(k);
        auto out = train_local_coteaching(locals[k], global, aux, trainer, t, seed);
        updated[i] = std::move(out.first);
        aux = std::move(out.second);
        losses[i] = out.stats.final_loss();
      } else {
        auto out = train_local(locals[k], global, trainer, seed);
        updated[i] = std::move(out.params);
        losses[i] = out.stats.final_loss();
      }
    });

    std::vector<double> weights;
    weights.reserve(selected.size());
    for (std::size_t k : selected) weights.push_back(static_cast<double>(locals[k].size()));
    ModelParams next = aggregate(updated, weights);
    if (!next.all_finite()) {
      throw Error(ErrorKind::kNonFiniteParameters,
                  "global model became non-finite at round " + std::to_string(t));
    }
    record.grad_norm = l2_distance(next, global);
    record.mean_client_loss =
        std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    global = std::move(next);
    if (config.keep_checkpoints) result.checkpoints.push_back(global);

    if (t % config.eval_every == 0 || t > config.rounds - 10) {
      record.test_accuracy = evaluate(global, test_set);
    }
    result.records.push_back(std::move(record));
  }
  result.final_params = std::move(global);
  return result;
}

void write_telemetry_csv(const std::filesystem::path& path,
                         std::span<const RoundRecord> records) {
  std::ostringstream out;
  out << "round,test_accuracy,grad_norm,mean_client_loss,selected_clients\n";
  for (const auto& r : records) {
    out << r.round << ',';
    if (r.test_accuracy) out << format_real(*r.test_accuracy);
    out << ',' << format_real(r.grad_norm) << ',' << format_real(r.mean_client_loss) << ',';
    for (std::size_t i = 0; i < r.selected_clients.size(); ++i) {
      if (i) out << ';';
      out << r.selected_clients[i];
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

double parse_double_field(const std::string& text, std::size_t line) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::kParse,
                "telemetry line " + std::to_string(line) + ": bad number '" + text + "'");
  }
  return value;
}

}  // namespace

std::vector<RoundRecord> read_telemetry_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::vector<RoundRecord> records;
  if (!std::getline(in, line)) return records;
  auto header = split_csv_line(line);
  const std::vector<std::string> expected = {"round", "test_accuracy", "grad_norm",
                                             "mean_client_loss", "selected_clients"};
  if (header != expected) {
    throw Error(ErrorKind::kParse, path.string() + " line 1: unexpected telemetry header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != expected.size()) {
      throw Error(ErrorKind::kParse, path.string() + " line " + std::to_string(line_no) +
                                         ": expected 5 fields");
    }
    RoundRecord r;
    r.round = static_cast<int>(parse_double_field(fields[0], line_no));
    if (!fields[1].empty()) r.test_accuracy = parse_double_field(fields[1], line_no);
    r.grad_norm = parse_double_field(fields[2], line_no);
    r.mean_client_loss = parse_double_field(fields[3], line_no);
    std::string_view ids = fields[4];
    while (!ids.empty()) {
      auto pos = ids.find(';');
      std::string id(ids.substr(0, pos));
      r.selected_clients.push_back(
          static_cast<std::size_t>(parse_double_field(id, line_no)));
      if (pos == std::string_view::npos) break;
      ids.remove_prefix(pos + 1);
    }
    records.push_back(std::move(r));
  }
  return records;
}

nlohmann::json fed_config_to_json(const FedConfig& config) {
  nlohmann::json doc;
  doc["num_clients"] = config.num_clients;
  doc["rounds"] = config.rounds;
  doc["selection_fraction"] = config.selection_fraction;
  doc["local_epochs"] = config.local_epochs;
  doc["eval_every"] = config.eval_every;
  doc["seed"] = config.seed;
  doc["model"] = layout_to_json(config.model);
  doc["trainer"] = trainer_to_json(config.trainer);
  return doc;
}

FedConfig fed_config_from_json(const nlohmann::json& doc, std::size_t input_dim,
                               std::size_t num_classes) {
  FedConfig config;
  try {
    config.num_clients = doc.value("num_clients", config.num_clients);
    config.rounds = doc.value("rounds", config.rounds);
    config.selection_fraction = doc.value("selection_fraction", config.selection_fraction);
    config.local_epochs = doc.value("local_epochs", config.local_epochs);
    config.eval_every = doc.value("eval_every", config.eval_every);
    config.seed = doc.value("seed", config.seed);
    config.threads = doc.value("threads", config.threads);
    nlohmann::json model = doc.value("model", nlohmann::json{{"kind", "linear"}});
    model["input_dim"] = input_dim;
    model["num_classes"] = num_classes;
    config.model = layout_from_json(model);
    config.trainer = trainer_from_json(doc.value("trainer", nlohmann::json::object()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("federation: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    throw Error(ErrorKind::kConfig, std::string("federation: ") + e.message());
  }
  config.validate();
  return config;
}

}  // namespace fednoisy
