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
#include <functional>
#include <vector>

#include "test_util.hpp"

#include "fednoisy/analysis.hpp"
#include "fednoisy/io.hpp"

using namespace fednoisy;

namespace {

std::vector<RoundRecord> records(const std::vector<std::optional<double>>& acc) {
  std::vector<RoundRecord> out;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    RoundRecord r;
    r.round = static_cast<int>(i + 1);
    r.test_accuracy = acc[i];
    out.push_back(r);
  }
  return out;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("last-k average uses evaluated rounds only") {
  auto r = records({0.1, std::nullopt, 0.5, 0.6, std::nullopt, 0.7});
  CHECK(last_k_average(r, 3) == doctest::Approx(0.6));
  CHECK(last_k_average(r, 1) == 0.7);
  CHECK(last_k_average(r, 4) == doctest::Approx(0.475));
  CHECK_THROWS_KIND(last_k_average(r, 5), ErrorKind::kInsufficientRecords);
  CHECK_THROWS_KIND(last_k_average(r, 0), ErrorKind::kInvalidArgument);
}

TEST_CASE("drop ratio and sensitivity") {
  CHECK(accuracy_drop_ratio(0.8, 0.6) == doctest::Approx(0.25));
  CHECK(accuracy_drop_ratio(0.6, 0.8) == doctest::Approx(-1.0 / 3.0));
  CHECK_THROWS_KIND(accuracy_drop_ratio(0.0, 0.5), ErrorKind::kDivisionByZero);
  CHECK(sensitivity(0.9, 0.8, 0.1) == doctest::Approx(1.0));
  CHECK(sensitivity(0.8, 0.9, 0.1) == doctest::Approx(-1.0));
  CHECK_THROWS_KIND(sensitivity(0.9, 0.8, 0.0), ErrorKind::kInvalidArgument);
}

TEST_CASE("overall noise ratio is size weighted") {
  std::vector<double> ratios = {0.1, 0.5};
  std::vector<std::size_t> sizes = {300, 100};
  CHECK(overall_noise_ratio(ratios, sizes) == doctest::Approx(0.2));
  std::vector<std::size_t> short_sizes = {1};
  CHECK_THROWS_KIND(overall_noise_ratio(ratios, short_sizes), ErrorKind::kLengthMismatch);
  std::vector<std::size_t> zeros = {0, 0};
  CHECK_THROWS_KIND(overall_noise_ratio(ratios, zeros), ErrorKind::kEmptyInput);
}

TEST_CASE("grad norm series") {
  ModelLayout l = ModelLayout::linear(1, 2);
  ModelParams a = zero_params(l), b = a, c = a;
  b.values = {3, 4, 0, 0};
  c.values = {3, 4, 0, 1};
  std::vector<ModelParams> ck = {a, b, c};
  CHECK(grad_norm_series(ck) == std::vector<double>{5.0, 1.0});
  std::vector<ModelParams> one = {a};
  CHECK_THROWS_KIND(grad_norm_series(one), ErrorKind::kInvalidArgument);
  std::vector<ModelParams> mixed = {a, zero_params(ModelLayout::linear(2, 2))};
  CHECK_THROWS_KIND(grad_norm_series(mixed), ErrorKind::kLayoutMismatch);
}

TEST_CASE("accuracy table scales") {
  AccuracyTable pct(AccuracyScale::kPercent);
  pct.add("iid", "sym", 0.2, 80.0);
  CHECK(pct.value("iid", "sym", 0.2) == 80.0);
  CHECK(pct.fraction("iid", "sym", 0.2) == 0.8);
  CHECK_FALSE(pct.value("iid", "sym", 0.3).has_value());
  CHECK_THROWS_KIND(pct.add("iid", "sym", 0.2, 101.0), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(pct.add("iid", "sym", 1.2, 50.0), ErrorKind::kInvalidArgument);

  AccuracyTable frac(AccuracyScale::kFraction);
  CHECK_THROWS_KIND(frac.add("iid", "sym", 0.2, 80.0), ErrorKind::kInvalidArgument);
  frac.add("iid", "sym", 0.2, 0.8);
  CHECK(frac.fraction("iid", "sym", 0.2) == 0.8);
  CHECK(parse_accuracy_scale("fraction") == AccuracyScale::kFraction);
  CHECK_THROWS_KIND(parse_accuracy_scale("permille"), ErrorKind::kInvalidArgument);
}

TEST_CASE("table parse errors name the line") {
  const std::string good = "partition,mode,eps,accuracy\niid,sym,0.1,50\n";
  CHECK(parse_accuracy_table(good, AccuracyScale::kPercent).entries().size() == 1);

  auto fails = [](const std::string& text) {
    return error_text([&] { parse_accuracy_table(text, AccuracyScale::kPercent, "t.csv"); });
  };
  CHECK(fails("part,mode,eps,acc\n").find("t.csv line 1") != std::string::npos);
  CHECK(fails(good + "iid,sym,0.2\n").find("t.csv line 3") != std::string::npos);
  CHECK(fails(good + "\niid,sym,x,5\n").find("t.csv line 4") != std::string::npos);
  CHECK(fails(good + "iid,sym,0.2,150\n").find("t.csv line 3") != std::string::npos);
  CHECK_THROWS_KIND(parse_accuracy_table(good + "iid,sym,0.2,\n", AccuracyScale::kPercent),
                    ErrorKind::kParse);
}

TEST_CASE("series from a table") {
  const std::string text =
      "partition,mode,eps,accuracy\n"
      "iid,clean,0,90.82\n"
      "iid,sym,0.1,85.86\n"
      "iid,sym,0.2,80.73\n"
      "iid,asym,0.2,84\n"
      "noniid-labeldir,sym,0.2,70.0\n"
      "noniid-labeldir,asym,0.4,60\n";
  AccuracyTable t = parse_accuracy_table(text, AccuracyScale::kPercent);

  auto drops = drop_ratio_series(t);
  REQUIRE(drops.size() == 1);
  CHECK(drops[0].partition == "noniid-labeldir");
  CHECK(drops[0].ratio == doctest::Approx((80.73 - 70.0) / 80.73));

  auto sens = sensitivity_series(t);
  // iid/asym gets the clean point at 0 and one row; iid/sym gets two rows.
  REQUIRE(sens.size() == 3);
  CHECK(sens[0].mode == "asym");
  CHECK(sens[0].delta == 0.2);
  CHECK(sens[0].value == doctest::Approx((90.82 - 84.0) / 0.2));
  CHECK(sens[1].mode == "sym");
  CHECK(sens[1].eps == 0.0);
  CHECK(sens[1].value == doctest::Approx(49.6));
  CHECK(sens[2].eps == 0.1);
  CHECK(sens[2].delta == 0.1);
  CHECK(sens[2].value == doctest::Approx(51.3));
}

TEST_CASE("csv writers") {
  TempDir dir("analysis");
  write_drop_ratio_csv(dir / "empty.csv", {});
  CHECK(read_text_file(dir / "empty.csv").empty());

  std::vector<DropRatioRow> d = {{"noniid-labeldir", "sym", 0.4, 65.08, 30.43, 0.5}};
  write_drop_ratio_csv(dir / "d.csv", d);
  CHECK(read_text_file(dir / "d.csv") ==
        "partition,mode,eps,acc_iid,acc_partition,drop_ratio\nnoniid-labeldir,sym,0.4,65.08,30.43,0.5\n");

  NoiseReport rep;
  rep.per_client_ratio = {0.25, 0.5};
  rep.per_client_eps = {0.2, 0.4};
  rep.client_sizes = {4, 2};
  auto rows = noise_ratio_series(rep);
  write_noise_ratio_csv(dir / "n.csv", rows);
  CHECK(read_text_file(dir / "n.csv") == "client,size,eps,noise_ratio\n0,4,0.2,0.25\n1,2,0.4,0.5\n");
  CHECK(overall_noise_ratio(rep, std::vector<std::size_t>{4, 2}) == doctest::Approx(1.0 / 3.0));
}
