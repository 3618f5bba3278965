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

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "test_util.hpp"

#include "fednoisy/noise.hpp"
#include "oracles.hpp"

using namespace fednoisy;

namespace {

NoiseSpec globalized(NoiseMode mode, double eps, std::uint64_t seed) {
  NoiseSpec s;
  s.scene = NoiseScene::kGlobalized;
  s.mode = mode;
  s.eps_global = eps;
  s.seed = seed;
  return s;
}

NoiseSpec localized(NoiseMode mode, double lo, double hi, std::uint64_t seed) {
  NoiseSpec s;
  s.scene = NoiseScene::kLocalized;
  s.mode = mode;
  s.eps_min = lo;
  s.eps_max = hi;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("matrix constructors validate their inputs") {
  CHECK_THROWS_KIND(symmetric_matrix(1, 0.1), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(symmetric_matrix(3, 1.5), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(symmetric_matrix(3, -0.1), ErrorKind::kInvalidArgument);
  std::vector<ClassId> short_map = {1, 0};
  CHECK_THROWS_KIND(asymmetric_matrix(3, 0.2, short_map), ErrorKind::kInvalidArgument);
  std::vector<ClassId> self_map = {0, 2, 1};
  CHECK_THROWS_KIND(asymmetric_matrix(3, 0.2, self_map), ErrorKind::kInvalidArgument);
  std::vector<ClassId> out_of_range = {1, 3, 0};
  CHECK_THROWS_KIND(asymmetric_matrix(3, 0.2, out_of_range), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(local_symmetric_matrix({4}, 0.2), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(local_symmetric_matrix({4, 2}, 0.2), ErrorKind::kInvalidArgument);
}

TEST_CASE("asymmetric matrix follows an arbitrary target map") {
  std::vector<ClassId> map = {2, 0, 1, 1};
  TransitionMatrix m = asymmetric_matrix(4, 0.3, map);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double want = i == j ? 0.7 : (j == map[i] ? 0.3 : 0.0);
      CHECK(m.probs(i, j) == want);
    }
  }
  CHECK(cyclic_target_map(3) == std::vector<ClassId>{1, 2, 0});
}

TEST_CASE("local matrices address global class ids") {
  std::vector<ClassId> classes = {1, 4, 7};
  auto target = localized_asym_target(classes);
  CHECK(target.at(1) == 4);
  CHECK(target.at(4) == 7);
  CHECK(target.at(7) == 1);

  TransitionMatrix sym = local_symmetric_matrix(classes, 0.4);
  CHECK(sym.size() == 3);
  CHECK(sym.class_at(2) == 7);
  CHECK(sym.row_of(4) == std::optional<std::size_t>(1));
  CHECK_FALSE(sym.row_of(5).has_value());
  CHECK(sym.probs(0, 0) == 0.6);
  CHECK(sym.probs(0, 1) == 0.2);

  TransitionMatrix asym = local_asymmetric_matrix(classes, 0.4, target);
  CHECK(asym.probs(2, 0) == 0.4);
  CHECK(asym.probs(2, 1) == 0.0);
}

TEST_CASE("apply_noise extremes") {
  LabeledDataset ds = make_synthetic_blobs(4, 50, 1, 1.0, 3);
  auto [same, counts0] = apply_noise(ds, symmetric_matrix(4, 0.0), 1);
  CHECK(same.labels() == ds.labels());
  CHECK(*same.true_labels() == ds.labels());
  for (int i = 0; i < 4; ++i) CHECK(counts0[i][i] == 50);

  auto [all, counts1] = apply_noise(ds, asymmetric_matrix(4, 1.0, cyclic_target_map(4)), 1);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(all.labels()[i] == (ds.labels()[i] + 1) % 4);
  for (int i = 0; i < 4; ++i) CHECK(counts1[i][(i + 1) % 4] == 50);
}

TEST_CASE("apply_noise draws depend only on seed and sample index") {
  LabeledDataset ds = make_synthetic_blobs(5, 200, 1, 1.0, 3);
  TransitionMatrix m = symmetric_matrix(5, 0.5);
  auto [full, c1] = apply_noise(ds, m, 77);
  std::vector<std::size_t> prefix(300);
  std::iota(prefix.begin(), prefix.end(), std::size_t{0});
  auto [part, c2] = apply_noise(ds.subset(prefix), m, 77);
  for (std::size_t i = 0; i < prefix.size(); ++i) CHECK(part.labels()[i] == full.labels()[i]);
  auto [other, c3] = apply_noise(ds, m, 78);
  CHECK(other.labels() != full.labels());
}

TEST_CASE("apply_noise rejects labels outside the matrix") {
  LabeledDataset ds(Matrix(3, 1), {0, 1, 2}, 3);
  TransitionMatrix m = symmetric_matrix(2, 0.1);
  CHECK_THROWS_KIND(apply_noise(ds, m, 0), ErrorKind::kLabelNotInMatrix);
}

TEST_CASE("symmetric noise spreads evenly over the other classes") {
  const int c = 6;
  LabeledDataset ds = make_synthetic_blobs(c, 20000, 1, 1.0, 0);
  auto [noisy, counts] = apply_noise(ds, symmetric_matrix(c, 0.6), 9);
  for (int i = 0; i < c; ++i) {
    double chi2 = 0.0;
    std::size_t off = 0;
    for (int j = 0; j < c; ++j) off += j == i ? 0 : counts[i][j];
    const double expected = static_cast<double>(off) / (c - 1);
    for (int j = 0; j < c; ++j) {
      if (j != i) chi2 += std::pow(counts[i][j] - expected, 2) / expected;
    }
    // 4 degrees of freedom; 18.47 is the 0.999 quantile.
    CHECK(chi2 < 18.47);
    CHECK(std::abs(off / 20000.0 - 0.6) < oracle::binomial_halfwidth(20000, 0.6, 4.0));
  }
}

TEST_CASE("globalized scene corrupts before partitioning") {
  LabeledDataset ds = make_synthetic_blobs(4, 250, 1, 1.0, 1);
  PartitionParams pp;
  pp.scheme = PartitionScheme::kLabelDirichlet;
  pp.alpha = 0.5;
  pp.num_clients = 5;
  pp.seed = 3;
  SceneResult r = globalized_scene(ds, globalized(NoiseMode::kAsymmetric, 0.3, 2), pp);
  auto [expected, counts] =
      apply_noise(ds, asymmetric_matrix(4, 0.3, cyclic_target_map(4)), 2);
  CHECK(r.dataset.labels() == expected.labels());
  // The split follows the observed labels.
  CHECK(r.plan == make_partition(expected, pp));
  REQUIRE(r.report);
  std::size_t flips = 0;
  for (std::size_t f : r.report->per_client_flips) flips += f;
  CHECK(flips == oracle::count_disagreements(r.dataset.labels(), ds.labels()));
  CHECK(r.report->overall_ratio == static_cast<double>(flips) / ds.size());
  for (double e : r.report->per_client_eps) CHECK(e == 0.3);
}

TEST_CASE("localized scene stays inside each client's classes") {
  LabeledDataset ds = make_synthetic_blobs(8, 100, 1, 1.0, 1);
  PartitionPlan plan = partition_label_quantity(ds, 6, 3, 5);
  for (NoiseMode mode : {NoiseMode::kSymmetric, NoiseMode::kAsymmetric}) {
    SceneResult r = localized_on_plan(ds, localized(mode, 0.2, 0.6, 4), plan);
    REQUIRE(r.report);
    for (std::size_t k = 0; k < plan.num_clients(); ++k) {
      const double e = r.report->per_client_eps[k];
      CHECK(e >= 0.2);
      CHECK(e <= 0.6);
      std::set<ClassId> local;
      for (std::size_t i : plan.clients[k]) local.insert(ds.labels()[i]);
      for (std::size_t i : plan.clients[k]) CHECK(local.contains(r.dataset.labels()[i]));
    }
    if (mode == NoiseMode::kAsymmetric) {
      for (std::size_t k = 0; k < plan.num_clients(); ++k) {
        std::vector<ClassId> local;
        for (std::size_t i : plan.clients[k]) local.push_back(ds.labels()[i]);
        std::sort(local.begin(), local.end());
        local.erase(std::unique(local.begin(), local.end()), local.end());
        auto target = localized_asym_target(local);
        for (std::size_t i : plan.clients[k]) {
          const ClassId y = ds.labels()[i];
          const ClassId o = r.dataset.labels()[i];
          CHECK((o == y || o == target.at(y)));
        }
      }
    }
  }
}

TEST_CASE("localized single-class clients are left clean") {
  LabeledDataset ds = make_synthetic_blobs(4, 30, 1, 1.0, 1);
  PartitionPlan plan = partition_label_quantity(ds, 4, 1, 2);
  SceneResult r = localized_on_plan(ds, localized(NoiseMode::kSymmetric, 0.5, 0.5, 1), plan);
  CHECK(r.dataset.labels() == ds.labels());
  CHECK(r.report->single_class_clients == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(r.report->overall_ratio == 0.0);
}

TEST_CASE("localized ratio tracks eps per client") {
  LabeledDataset ds = make_synthetic_blobs(5, 4000, 1, 1.0, 1);
  PartitionPlan plan = partition_iid(ds, 4, 1);
  SceneResult r = localized_on_plan(ds, localized(NoiseMode::kSymmetric, 0.35, 0.35, 8), plan);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(r.report->per_client_ratio[k] - 0.35) <
          oracle::binomial_halfwidth(plan.clients[k].size(), 0.35, 4.0));
  }
}

TEST_CASE("real-world and clean scenes") {
  LabeledDataset ds = make_synthetic_blobs(3, 20, 1, 1.0, 1);
  PartitionParams pp;
  pp.num_clients = 3;
  std::vector<ClassId> observed(ds.labels());
  observed[0] = (observed[0] + 1) % 3;
  observed[5] = (observed[5] + 1) % 3;
  LabeledDataset noisy = ds.relabeled(observed, ds.labels());
  SceneResult rw = realworld_scene(noisy, pp);
  REQUIRE(rw.report);
  CHECK(rw.report->overall_ratio == 2.0 / 60.0);
  CHECK(rw.dataset.labels() == observed);

  LabeledDataset unknown = ds.relabeled(observed, std::nullopt);
  CHECK_FALSE(realworld_scene(unknown, pp).report.has_value());

  NoiseSpec clean;
  SceneResult c = run_scene(ds, clean, pp);
  CHECK(c.dataset.labels() == ds.labels());
  CHECK(c.report->overall_ratio == 0.0);
  CHECK_THROWS_KIND(run_scene_on_plan(ds, globalized(NoiseMode::kSymmetric, 0.1, 0), c.plan),
                    ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(compute_noise_report(unknown, c.plan, {}), ErrorKind::kInvalidArgument);
}

TEST_CASE("NoiseSpec validation") {
  NoiseSpec s = globalized(NoiseMode::kSymmetric, 0.2, 0);
  CHECK_NOTHROW(s.validate());
  CHECK(s.nominal_rate() == 0.2);
  s.eps_min = 0.1;
  CHECK_THROWS_KIND(s.validate(), ErrorKind::kInvalidArgument);
  s = globalized(NoiseMode::kNone, 0.2, 0);
  CHECK_THROWS_KIND(s.validate(), ErrorKind::kInvalidArgument);

  NoiseSpec l = localized(NoiseMode::kAsymmetric, 0.1, 0.3, 0);
  CHECK_NOTHROW(l.validate());
  CHECK(l.nominal_rate() == doctest::Approx(0.2));
  l.eps_min = 0.4;
  CHECK_THROWS_KIND(l.validate(), ErrorKind::kInvalidArgument);
  l = localized(NoiseMode::kAsymmetric, 0.1, 1.1, 0);
  CHECK_THROWS_KIND(l.validate(), ErrorKind::kInvalidArgument);

  NoiseSpec rw;
  rw.scene = NoiseScene::kRealWorld;
  CHECK_NOTHROW(rw.validate());
  rw.eps_global = 0.1;
  CHECK_THROWS_KIND(rw.validate(), ErrorKind::kInvalidArgument);

  CHECK(parse_noise_mode("sym") == NoiseMode::kSymmetric);
  CHECK(parse_noise_mode("asym") == NoiseMode::kAsymmetric);
  CHECK(parse_noise_scene("real-world") == NoiseScene::kRealWorld);
  CHECK_THROWS_KIND(parse_noise_scene("pairflip"), ErrorKind::kInvalidArgument);
}

TEST_CASE("NoiseSpec and manifest json round trip") {
  NoiseSpec s = localized(NoiseMode::kAsymmetric, 0.1, 0.3, 12);
  NoiseSpec back = noise_spec_from_json(noise_spec_to_json(s));
  CHECK(back.scene == s.scene);
  CHECK(back.mode == s.mode);
  CHECK(back.eps_min == s.eps_min);
  CHECK(back.eps_max == s.eps_max);
  CHECK_FALSE(back.eps_global.has_value());
  CHECK(back.seed == 12);

  LabeledDataset ds = make_synthetic_blobs(3, 30, 1, 1.0, 1);
  PartitionParams pp;
  pp.num_clients = 3;
  SceneResult r = localized_scene(ds, s, pp);
  NoiseReport rep = noise_report_from_json(noise_manifest(s, r.report));
  CHECK(rep.per_client_eps == r.report->per_client_eps);
  CHECK(rep.per_client_ratio == r.report->per_client_ratio);
  CHECK(rep.overall_ratio == r.report->overall_ratio);
  CHECK(rep.flip_counts == r.report->flip_counts);
  CHECK(rep.client_sizes == r.report->client_sizes);

  CHECK_THROWS_KIND(noise_report_from_json(noise_manifest(s, std::nullopt)),
                    ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(noise_spec_from_json(nlohmann::json::object()), ErrorKind::kParse);
}
