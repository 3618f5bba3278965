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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "test_util.hpp"

#include "fednoisy/federation.hpp"
#include "fednoisy/io.hpp"
#include "oracles.hpp"

using namespace fednoisy;

namespace {

struct Fixture {
  LabeledDataset train = make_synthetic_blobs(4, 60, 2, 4.0, 1);
  LabeledDataset test = make_synthetic_blobs(4, 25, 2, 4.0, 2);
  PartitionPlan plan = partition_label_dirichlet(train, 5, 1.0, 3);

  FedConfig config() const {
    FedConfig c;
    c.num_clients = 5;
    c.rounds = 12;
    c.selection_fraction = 0.6;
    c.local_epochs = 2;
    c.seed = 77;
    c.model = ModelLayout::mlp(2, 8, 4);
    c.trainer.lr = 0.05;
    c.trainer.batch_size = 16;
    return c;
  }
};

}  // namespace

TEST_CASE("selection count rounds up without float artefacts") {
  CHECK(selection_count(10, 0.3) == 3);
  CHECK(selection_count(10, 0.7) == 7);
  CHECK(selection_count(10, 0.25) == 3);
  CHECK(selection_count(10, 1.0) == 10);
  CHECK(selection_count(7, 0.01) == 1);
  CHECK(selection_count(100, 0.1) == 10);
}

TEST_CASE("client selection is sorted, distinct and fair") {
  std::vector<int> hits(10, 0);
  for (int t = 1; t <= 2000; ++t) {
    auto s = select_clients(10, 0.3, t, 5);
    REQUIRE(s.size() == 3);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 3);
    for (std::size_t k : s) ++hits[k];
  }
  // Each client is picked with probability 0.3; 5 standard deviations.
  const double sd = std::sqrt(2000 * 0.3 * 0.7);
  for (int h : hits) CHECK(std::abs(h - 600.0) < 5 * sd);
  CHECK(select_clients(10, 0.3, 4, 5) == select_clients(10, 0.3, 4, 5));
  CHECK(select_clients(10, 1.0, 4, 5) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("aggregation matches the long-double weighted mean") {
  Rng rng(8);
  ModelLayout l = ModelLayout::mlp(3, 5, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(6);
    std::vector<ModelParams> models;
    std::vector<std::vector<double>> raw;
    std::vector<double> weights;
    for (std::size_t k = 0; k < m; ++k) {
      models.push_back(init_params(l, rng.next_u64()));
      for (auto& v : models.back().values) v *= 10.0;
      raw.push_back(models.back().values);
      weights.push_back(static_cast<double>(1 + rng.uniform_index(500)));
    }
    ModelParams got = aggregate(models, weights);
    auto want = oracle::weighted_average(raw, weights);
    std::vector<double> want_d(want.begin(), want.end());
    CHECK(oracle::relative_error(got.values, want_d) < 1e-12);
  }
}

TEST_CASE("aggregation by data size") {
  ModelLayout l = ModelLayout::linear(1, 2);
  ModelParams zero = zero_params(l);
  ModelParams v = zero;
  v.values = {1.0, -2.0, 4.0, 8.0};
  std::vector<ModelParams> models = {zero, v};
  std::vector<double> w = {1, 3};
  CHECK(aggregate(models, w).values == std::vector<double>{0.75, -1.5, 3.0, 6.0});

  std::vector<ModelParams> none;
  std::vector<double> no_w;
  CHECK_THROWS_KIND(aggregate(none, no_w), ErrorKind::kEmptyInput);
  std::vector<double> one = {1};
  CHECK_THROWS_KIND(aggregate(models, one), ErrorKind::kLengthMismatch);
  std::vector<ModelParams> mixed = {zero, zero_params(ModelLayout::linear(2, 2))};
  CHECK_THROWS_KIND(aggregate(mixed, w), ErrorKind::kLayoutMismatch);
}

TEST_CASE("evaluation breaks ties toward the lowest class") {
  LabeledDataset test = make_synthetic_blobs(4, 25, 2, 4.0, 2);
  CHECK(evaluate(zero_params(ModelLayout::linear(2, 4)), test) == 0.25);
  CHECK(evaluate(zero_params(ModelLayout::mlp(2, 3, 4)), test) == 0.25);
  CHECK_THROWS_KIND(evaluate(zero_params(ModelLayout::linear(3, 4)), test),
                    ErrorKind::kShapeMismatch);
}

TEST_CASE("one round replays from the exposed seeds") {
  Fixture f;
  FedConfig c = f.config();
  c.rounds = 1;
  FederationResult r = run_federation(f.train, f.plan, c, f.test);
  ModelParams global = init_params(c.model, init_seed(c.seed));
  TrainerConfig trainer = c.trainer;
  trainer.epochs = c.local_epochs;
  auto selected = select_clients(5, 0.6, 1, c.seed);
  CHECK(r.records[0].selected_clients == selected);
  std::vector<ModelParams> local;
  std::vector<double> sizes;
  for (std::size_t k : selected) {
    local.push_back(
        train_local(restrict_client(f.train, f.plan, k), global, trainer, client_train_seed(c.seed, 1, k))
            .params);
    sizes.push_back(static_cast<double>(f.plan.clients[k].size()));
  }
  ModelParams want = aggregate(local, sizes);
  CHECK(r.final_params == want);
  CHECK(r.records[0].grad_norm == l2_distance(want, global));
}

TEST_CASE("telemetry: schedule, grad norms and checkpoints") {
  Fixture f;
  FedConfig c = f.config();
  c.rounds = 30;
  c.eval_every = 7;
  c.keep_checkpoints = true;
  FederationResult r = run_federation(f.train, f.plan, c, f.test);
  REQUIRE(r.records.size() == 30);
  REQUIRE(r.checkpoints.size() == 31);
  CHECK(r.checkpoints.back() == r.final_params);
  for (const auto& rec : r.records) {
    const bool due = rec.round % 7 == 0 || rec.round > 20;
    CHECK(rec.test_accuracy.has_value() == due);
    CHECK(rec.selected_clients.size() == 3);
    CHECK(rec.mean_client_loss > 0.0);
  }
  // Norms recomputed in long double from the stored checkpoints.
  for (std::size_t t = 1; t <= 30; ++t) {
    long double ss = 0;
    for (std::size_t i = 0; i < r.final_params.values.size(); ++i) {
      long double d = (long double)r.checkpoints[t].values[i] - r.checkpoints[t - 1].values[i];
      ss += d * d;
    }
    CHECK(std::abs(r.records[t - 1].grad_norm - (double)std::sqrt(ss)) <= 1e-9);
  }
  const auto last = r.records.back().test_accuracy.value();
  CHECK(last == evaluate(r.final_params, f.test));
  CHECK(last > 0.8);
}

TEST_CASE("results do not depend on the thread count") {
  Fixture f;
  FedConfig c = f.config();
  FederationResult one = run_federation(f.train, f.plan, c, f.test);
  c.threads = 3;
  FederationResult three = run_federation(f.train, f.plan, c, f.test);
  CHECK(one.final_params == three.final_params);
  CHECK(one.records == three.records);
  c.seed = 78;
  CHECK_FALSE(run_federation(f.train, f.plan, c, f.test).final_params == one.final_params);
}

TEST_CASE("co-teaching and mixup federations run") {
  Fixture f;
  FedConfig c = f.config();
  c.rounds = 3;
  c.trainer.method = TrainMethod::kCoteaching;
  FederationResult a = run_federation(f.train, f.plan, c, f.test, 0.4);
  FederationResult b = run_federation(f.train, f.plan, c, f.test, 0.0);
  CHECK_FALSE(a.final_params == b.final_params);
  c.trainer.forget_rate = 0.0;
  CHECK(run_federation(f.train, f.plan, c, f.test, 0.4).final_params == b.final_params);
  c.trainer.method = TrainMethod::kMixup;
  CHECK(run_federation(f.train, f.plan, c, f.test).records.size() == 3);
}

TEST_CASE("federation input checks") {
  Fixture f;
  FedConfig c = f.config();
  c.num_clients = 4;
  CHECK_THROWS_KIND(run_federation(f.train, f.plan, c, f.test), ErrorKind::kArtifactMismatch);
  c = f.config();
  c.model = ModelLayout::linear(3, 4);
  CHECK_THROWS_KIND(run_federation(f.train, f.plan, c, f.test), ErrorKind::kShapeMismatch);
  c = f.config();
  c.selection_fraction = 0.0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::kConfig);
  c = f.config();
  c.local_epochs = 0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::kConfig);
  c = f.config();
  c.rounds = 0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::kConfig);
}

TEST_CASE("divergence aborts with a non-finite error") {
  Fixture f;
  FedConfig c = f.config();
  c.trainer.lr = 1e300;
  c.trainer.momentum = 0.0;
  CHECK_THROWS_KIND(run_federation(f.train, f.plan, c, f.test), ErrorKind::kNonFiniteParameters);
}

TEST_CASE("telemetry csv and config json round trip") {
  TempDir dir("federation");
  Fixture f;
  FedConfig c = f.config();
  c.eval_every = 4;
  FederationResult r = run_federation(f.train, f.plan, c, f.test);
  write_telemetry_csv(dir / "t.csv", r.records);
  CHECK(read_telemetry_csv(dir / "t.csv") == r.records);
  write_text_file(dir / "bad.csv", "round,acc\n1,0.5\n");
  CHECK_THROWS_KIND(read_telemetry_csv(dir / "bad.csv"), ErrorKind::kParse);

  FedConfig back = fed_config_from_json(fed_config_to_json(c), 2, 4);
  CHECK(back.num_clients == c.num_clients);
  CHECK(back.rounds == c.rounds);
  CHECK(back.selection_fraction == c.selection_fraction);
  CHECK(back.model == c.model);
  CHECK(back.trainer.lr == c.trainer.lr);
  CHECK_THROWS_KIND(fed_config_from_json(nlohmann::json{{"rounds", "many"}}, 2, 4),
                    ErrorKind::kConfig);
}
