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

#include "fednoisy/noise.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "fednoisy/error.hpp"
#include "fednoisy/rng.hpp"

namespace fednoisy {

ClassId TransitionMatrix::class_at(std::size_t row) const {
  return class_ids ? (*class_ids)[row] : static_cast<ClassId>(row);
}

std::optional<std::size_t> TransitionMatrix::row_of(ClassId label) const {
  if (!class_ids) {
    if (label >= 0 && static_cast<std::size_t>(label) < size()) {
      return static_cast<std::size_t>(label);
    }
    return std::nullopt;
  }
  auto it = std::lower_bound(class_ids->begin(), class_ids->end(), label);
  if (it == class_ids->end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - class_ids->begin());
}

namespace {

void check_eps(double eps) {
  require(eps >= 0.0 && eps <= 1.0, ErrorKind::kInvalidArgument,
          "noise ratio " + std::to_string(eps) + " outside [0, 1]");
}

void check_sorted_unique(const std::vector<ClassId>& classes) {
  for (std::size_t i = 1; i < classes.size(); ++i) {
    require(classes[i - 1] < classes[i], ErrorKind::kInvalidArgument,
            "class list must be sorted and unique");
  }
}

Matrix symmetric_probs(std::size_t n, double eps) {
  Matrix probs(n, n, eps / static_cast<double>(n - 1));
  for (std::size_t i = 0; i < n; ++i) probs(i, i) = 1.0 - eps;
  return probs;
}

std::size_t draw_column(std::span<const double> row, double u) {
  double cumulative = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] <= 0.0) continue;
    cumulative += row[j];
    last_nonzero = j;
    if (u < cumulative) return j;
  }
  return last_nonzero;
}

// Corrupts `labels` in place at the given global indices.
void corrupt_indices(std::vector<ClassId>& labels,
                     std::span<const std::size_t> indices,
                     const TransitionMatrix& matrix, std::uint64_t stream_seed) {
  for (std::size_t idx : indices) {
    auto row = matrix.row_of(labels[idx]);
    if (!row) {
      throw Error(ErrorKind::kLabelNotInMatrix,
                  "label " + std::to_string(labels[idx]) + " at sample " +
                      std::to_string(idx) + " is not covered by the matrix");
    }
    double u = counter_uniform(stream_seed, idx);
    labels[idx] = matrix.class_at(draw_column(matrix.probs.row(*row), u));
  }
}

}  // namespace

std::vector<ClassId> cyclic_target_map(int num_classes) {
  std::vector<ClassId> map(static_cast<std::size_t>(std::max(num_classes, 0)));
  for (int i = 0; i < num_classes; ++i) map[static_cast<std::size_t>(i)] = (i + 1) % num_classes;
  return map;
}

TransitionMatrix symmetric_matrix(int num_classes, double eps) {
  require(num_classes >= 2, ErrorKind::kInvalidArgument,
          "symmetric noise needs C >= 2");
  check_eps(eps);
  return {symmetric_probs(static_cast<std::size_t>(num_classes), eps), std::nullopt};
}

TransitionMatrix asymmetric_matrix(int num_classes, double eps,
                                   std::span<const ClassId> target_map) {
  require(num_classes >= 2, ErrorKind::kInvalidArgument,
          "asymmetric noise needs C >= 2");
  check_eps(eps);
  const auto n = static_cast<std::size_t>(num_classes);
  require(target_map.size() == n, ErrorKind::kInvalidArgument,
          "target map must cover every class");
  Matrix probs(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ClassId target = target_map[i];
    require(target >= 0 && target < num_classes, ErrorKind::kInvalidArgument,
            "target map sends class " + std::to_string(i) + " out of range");
    require(static_cast<std::size_t>(target) != i, ErrorKind::kInvalidArgument,
            "target map sends class " + std::to_string(i) + " to itself");
    probs(i, i) = 1.0 - eps;
    probs(i, static_cast<std::size_t>(target)) = eps;
  }
  return {std::move(probs), std::nullopt};
}

TransitionMatrix local_symmetric_matrix(std::vector<ClassId> classes, double eps) {
  require(classes.size() >= 2, ErrorKind::kInvalidArgument,
          "local symmetric noise needs at least two classes");
  check_eps(eps);
  check_sorted_unique(classes);
  return {symmetric_probs(classes.size(), eps), std::move(classes)};
}

TransitionMatrix local_asymmetric_matrix(std::vector<ClassId> classes, double eps,
                                         const std::map<ClassId, ClassId>& target) {
  require(classes.size() >= 2, ErrorKind::kInvalidArgument,
          "local asymmetric noise needs at least two classes");
  check_eps(eps);
  check_sorted_unique(classes);
  TransitionMatrix matrix{Matrix(classes.size(), classes.size(), 0.0), classes};
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto it = target.find(classes[i]);
    require(it != target.end(), ErrorKind::kInvalidArgument,
            "target map misses class " + std::to_string(classes[i]));
    auto col = matrix.row_of(it->second);
    require(col.has_value() && *col != i, ErrorKind::kInvalidArgument,
            "invalid local target for class " + std::to_string(classes[i]));
    matrix.probs(i, i) = 1.0 - eps;
    matrix.probs(i, *col) = eps;
  }
  return matrix;
}

std::map<ClassId, ClassId> localized_asym_target(std::span<const ClassId> local_classes) {
  require(local_classes.size() >= 2, ErrorKind::kInvalidArgument,
          "localized asymmetric target needs at least two classes");
  std::vector<ClassId> sorted(local_classes.begin(), local_classes.end());
  std::sort(sorted.begin(), sorted.end());
  check_sorted_unique(sorted);
  std::map<ClassId, ClassId> map;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    map[sorted[i]] = sorted[(i + 1) % sorted.size()];
  }
  return map;
}

std::pair<LabeledDataset, CountMatrix> apply_noise(const LabeledDataset& ds,
                                                   const TransitionMatrix& matrix,
                                                   std::uint64_t seed) {
  std::vector<ClassId> observed = ds.labels();
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  corrupt_indices(observed, all, matrix, derive_seed(seed, "flip"));

  const auto c = static_cast<std::size_t>(ds.num_classes());
  CountMatrix counts(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ++counts[static_cast<std::size_t>(ds.labels()[i])][static_cast<std::size_t>(observed[i])];
  }
  return {ds.relabeled(std::move(observed), ds.labels()), std::move(counts)};
}

std::string_view to_string(NoiseScene scene) {
  switch (scene) {
    case NoiseScene::kClean: return "clean";
    case NoiseScene::kGlobalized: return "globalized";
    case NoiseScene::kLocalized: return "localized";
    case NoiseScene::kRealWorld: return "realworld";
  }
  return "clean";
}

std::string_view to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::kNone: return "none";
    case NoiseMode::kSymmetric: return "symmetric";
    case NoiseMode::kAsymmetric: return "asymmetric";
  }
  return "none";
}

NoiseScene parse_noise_scene(std::string_view name) {
  if (name == "clean") return NoiseScene::kClean;
  if (name == "globalized") return NoiseScene::kGlobalized;
  if (name == "localized") return NoiseScene::kLocalized;
  if (name == "realworld" || name == "real-world") return NoiseScene::kRealWorld;
  throw Error(ErrorKind::kInvalidArgument, "unknown noise scene '" + std::string(name) + "'");
}

NoiseMode parse_noise_mode(std::string_view name) {
  if (name == "none") return NoiseMode::kNone;
  if (name == "symmetric" || name == "sym") return NoiseMode::kSymmetric;
  if (name == "asymmetric" || name == "asym") return NoiseMode::kAsymmetric;
  throw Error(ErrorKind::kInvalidArgument, "unknown noise mode '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  switch (scene) {
    case NoiseScene::kGlobalized:
      require(eps_global.has_value(), ErrorKind::kInvalidArgument,
              "globalized noise needs eps_global");
      require(!eps_min && !eps_max, ErrorKind::kInvalidArgument,
              "globalized noise takes no eps_min/eps_max");
      check_eps(*eps_global);
      break;
    case NoiseScene::kLocalized:
      require(eps_min.has_value() && eps_max.has_value(), ErrorKind::kInvalidArgument,
              "localized noise needs eps_min and eps_max");
      require(!eps_global, ErrorKind::kInvalidArgument,
              "localized noise takes no eps_global");
      check_eps(*eps_min);
      check_eps(*eps_max);
      require(*eps_min <= *eps_max, ErrorKind::kInvalidArgument,
              "eps_min must not exceed eps_max");
      break;
    case NoiseScene::kClean:
    case NoiseScene::kRealWorld:
      require(!eps_global && !eps_min && !eps_max, ErrorKind::kInvalidArgument,
              std::string(to_string(scene)) + " scene takes no noise ratios");
      break;
  }
  if (scene == NoiseScene::kGlobalized || scene == NoiseScene::kLocalized) {
    require(mode != NoiseMode::kNone, ErrorKind::kInvalidArgument,
            "synthetic noise scenes need mode symmetric or asymmetric");
  }
}

double NoiseSpec::nominal_rate() const {
  if (eps_global) return *eps_global;
  if (eps_min && eps_max) return 0.5 * (*eps_min + *eps_max);
  return 0.0;
}

NoiseReport compute_noise_report(const LabeledDataset& noisy, const PartitionPlan& plan,
                                 std::vector<double> per_client_eps) {
  require(noisy.has_true_labels(), ErrorKind::kInvalidArgument,
          "noise report needs ground-truth labels");
  const auto& truth = *noisy.true_labels();
  const auto& observed = noisy.labels();
  const auto c = static_cast<std::size_t>(noisy.num_classes());
  NoiseReport report;
  report.per_client_eps = std::move(per_client_eps);
  report.flip_counts.assign(c, std::vector<std::size_t>(c, 0));
  std::size_t total_flips = 0;
  std::size_t total_size = 0;
  for (const auto& client : plan.clients) {
    std::size_t flips = 0;
    for (std::size_t idx : client) {
      require(idx < noisy.size(), ErrorKind::kIndexOutOfRange,
              "plan index " + std::to_string(idx) + " outside dataset");
      auto t = static_cast<std::size_t>(truth[idx]);
      auto o = static_cast<std::size_t>(observed[idx]);
      ++report.flip_counts[t][o];
      if (t != o) ++flips;
    }
    report.per_client_flips.push_back(flips);
    report.client_sizes.push_back(client.size());
    report.per_client_ratio.push_back(
        client.empty() ? 0.0 : static_cast<double>(flips) / static_cast<double>(client.size()));
    total_flips += flips;
    total_size += client.size();
  }
  report.overall_ratio =
      total_size == 0 ? 0.0 : static_cast<double>(total_flips) / static_cast<double>(total_size);
  return report;
}

SceneResult globalized_scene(const LabeledDataset& ds, const NoiseSpec& spec,
                             const PartitionParams& partition) {
  require(spec.scene == NoiseScene::kGlobalized, ErrorKind::kInvalidArgument,
          "globalized_scene called with another scene");
  spec.validate();
  const double eps = *spec.eps_global;
  TransitionMatrix matrix = spec.mode == NoiseMode::kSymmetric
                                ? symmetric_matrix(ds.num_classes(), eps)
                                : asymmetric_matrix(ds.num_classes(), eps,
                                                    spec.asym_map ? *spec.asym_map
                                                                  : cyclic_target_map(ds.num_classes()));
  auto [noisy, counts] = apply_noise(ds, matrix, spec.seed);
  PartitionPlan plan = make_partition(noisy, partition);
  NoiseReport report = compute_noise_report(
      noisy, plan, std::vector<double>(plan.num_clients(), eps));
  return {std::move(plan), std::move(noisy), std::move(report)};
}

SceneResult localized_scene(const LabeledDataset& ds, const NoiseSpec& spec,
                            const PartitionParams& partition) {
  require(spec.scene == NoiseScene::kLocalized, ErrorKind::kInvalidArgument,
          "localized_scene called with another scene");
  spec.validate();
  return localized_on_plan(ds, spec, make_partition(ds, partition));
}

SceneResult localized_on_plan(const LabeledDataset& ds, const NoiseSpec& spec,
                              PartitionPlan plan) {
  require(spec.scene == NoiseScene::kLocalized, ErrorKind::kInvalidArgument,
          "localized_on_plan called with another scene");
  spec.validate();
  validate_plan(plan, ds.size());
  const std::size_t k_clients = plan.num_clients();

  // All eps_k are drawn up front in client order.
  Rng eps_rng(derive_seed(spec.seed, "eps-draw"));
  std::vector<double> eps(k_clients);
  for (auto& e : eps) e = eps_rng.uniform(*spec.eps_min, *spec.eps_max);

  std::vector<ClassId> observed = ds.labels();
  std::vector<std::size_t> single_class;
  for (std::size_t k = 0; k < k_clients; ++k) {
    std::set<ClassId> present;
    for (std::size_t idx : plan.clients[k]) present.insert(ds.labels()[idx]);
    std::vector<ClassId> classes(present.begin(), present.end());
    if (classes.size() < 2) {
      single_class.push_back(k);
      continue;
    }
    TransitionMatrix matrix =
        spec.mode == NoiseMode::kSymmetric
            ? local_symmetric_matrix(classes, eps[k])
            : local_asymmetric_matrix(classes, eps[k], localized_asym_target(classes));
    corrupt_indices(observed, plan.clients[k], matrix,
                    derive_seed(spec.seed, "flip-client", k));
  }
  LabeledDataset noisy = ds.relabeled(std::move(observed), ds.labels());
  NoiseReport report = compute_noise_report(noisy, plan, eps);
  report.single_class_clients = std::move(single_class);
  return {std::move(plan), std::move(noisy), std::move(report)};
}

SceneResult realworld_scene(const LabeledDataset& ds, const PartitionParams& partition) {
  return realworld_on_plan(ds, make_partition(ds, partition));
}

SceneResult realworld_on_plan(const LabeledDataset& ds, PartitionPlan plan) {
  validate_plan(plan, ds.size());
  std::optional<NoiseReport> report;
  if (ds.has_true_labels()) {
    report = compute_noise_report(ds, plan, {});
  }
  return {std::move(plan), ds, std::move(report)};
}

SceneResult run_scene(const LabeledDataset& ds, const NoiseSpec& spec,
                      const PartitionParams& partition) {
  spec.validate();
  switch (spec.scene) {
    case NoiseScene::kGlobalized: return globalized_scene(ds, spec, partition);
    case NoiseScene::kLocalized: return localized_scene(ds, spec, partition);
    case NoiseScene::kRealWorld: return realworld_scene(ds, partition);
    case NoiseScene::kClean: break;
  }
  return clean_on_plan(ds, make_partition(ds, partition));
}

SceneResult clean_on_plan(const LabeledDataset& ds, PartitionPlan plan) {
  validate_plan(plan, ds.size());
  LabeledDataset clean = ds.relabeled(ds.labels(), ds.labels());
  NoiseReport report =
      compute_noise_report(clean, plan, std::vector<double>(plan.num_clients(), 0.0));
  return {std::move(plan), std::move(clean), std::move(report)};
}

SceneResult run_scene_on_plan(const LabeledDataset& ds, const NoiseSpec& spec,
                              PartitionPlan plan) {
  spec.validate();
  switch (spec.scene) {
    case NoiseScene::kLocalized: return localized_on_plan(ds, spec, std::move(plan));
    case NoiseScene::kRealWorld: return realworld_on_plan(ds, std::move(plan));
    case NoiseScene::kClean: return clean_on_plan(ds, std::move(plan));
    case NoiseScene::kGlobalized: break;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "the globalized scene partitions after corruption and takes no input plan");
}

nlohmann::json noise_spec_to_json(const NoiseSpec& spec) {
  nlohmann::json doc;
  doc["scene"] = std::string(to_string(spec.scene));
  doc["mode"] = std::string(to_string(spec.mode));
  doc["eps_global"] = spec.eps_global ? nlohmann::json(*spec.eps_global) : nlohmann::json();
  doc["eps_min"] = spec.eps_min ? nlohmann::json(*spec.eps_min) : nlohmann::json();
  doc["eps_max"] = spec.eps_max ? nlohmann::json(*spec.eps_max) : nlohmann::json();
  doc["asym_map"] = spec.asym_map ? nlohmann::json(*spec.asym_map) : nlohmann::json();
  doc["seed"] = spec.seed;
  return doc;
}

NoiseSpec noise_spec_from_json(const nlohmann::json& doc) {
  try {
    NoiseSpec spec;
    spec.scene = parse_noise_scene(doc.at("scene").get<std::string>());
    spec.mode = parse_noise_mode(doc.value("mode", std::string("none")));
    auto optional_real = [&](const char* key) -> std::optional<double> {
      if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
      return doc.at(key).get<double>();
    };
    spec.eps_global = optional_real("eps_global");
    spec.eps_min = optional_real("eps_min");
    spec.eps_max = optional_real("eps_max");
    if (doc.contains("asym_map") && !doc.at("asym_map").is_null()) {
      spec.asym_map = doc.at("asym_map").get<std::vector<ClassId>>();
    }
    spec.seed = doc.value("seed", std::uint64_t{0});
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("noise spec: ") + e.what());
  }
}

nlohmann::json noise_manifest(const NoiseSpec& spec,
                              const std::optional<NoiseReport>& report) {
  nlohmann::json doc = noise_spec_to_json(spec);
  if (!report) {
    for (const char* key : {"per_client_eps", "per_client_ratio", "overall_ratio",
                            "flip_counts", "per_client_flips", "client_sizes",
                            "single_class_clients"}) {
      doc[key] = nullptr;
    }
    return doc;
  }
  doc["per_client_eps"] = report->per_client_eps;
  doc["per_client_ratio"] = report->per_client_ratio;
  doc["overall_ratio"] = report->overall_ratio;
  doc["flip_counts"] = report->flip_counts;
  doc["per_client_flips"] = report->per_client_flips;
  doc["client_sizes"] = report->client_sizes;
  doc["single_class_clients"] = report->single_class_clients;
  return doc;
}

NoiseReport noise_report_from_json(const nlohmann::json& manifest) {
  try {
    require(!manifest.at("overall_ratio").is_null(), ErrorKind::kInvalidArgument,
            "manifest carries no noise report");
    NoiseReport report;
    report.per_client_eps = manifest.at("per_client_eps").get<std::vector<double>>();
    report.per_client_ratio = manifest.at("per_client_ratio").get<std::vector<double>>();
    report.overall_ratio = manifest.at("overall_ratio").get<double>();
    report.flip_counts = manifest.at("flip_counts").get<CountMatrix>();
    report.per_client_flips = manifest.at("per_client_flips").get<std::vector<std::size_t>>();
    report.client_sizes = manifest.at("client_sizes").get<std::vector<std::size_t>>();
    report.single_class_clients =
        manifest.at("single_class_clients").get<std::vector<std::size_t>>();
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("noise manifest: ") + e.what());
  }
}

}  // namespace fednoisy
