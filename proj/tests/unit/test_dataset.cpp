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
#include <limits>
#include <vector>

#include "test_util.hpp"

#include "fednoisy/dataset.hpp"
#include "fednoisy/io.hpp"

using namespace fednoisy;

TEST_CASE("synthetic blobs are balanced and carry their own ground truth") {
  LabeledDataset ds = make_synthetic_blobs(5, 40, 3, 4.0, 1);
  CHECK(ds.size() == 200);
  CHECK(ds.dim() == 3);
  CHECK(ds.num_classes() == 5);
  REQUIRE(ds.has_true_labels());
  CHECK(*ds.true_labels() == ds.labels());
  for (std::size_t c : class_histogram(ds).counts) CHECK(c == 40);
  CHECK(make_synthetic_blobs(5, 40, 3, 4.0, 1) == ds);
  CHECK_FALSE(make_synthetic_blobs(5, 40, 3, 4.0, 2) == ds);
}

TEST_CASE("closest pair of class means sits at the separation") {
  struct Case {
    int classes;
    std::size_t dim;
  };
  for (Case c : {Case{3, 1}, Case{4, 2}, Case{6, 3}, Case{10, 2}, Case{7, 2}, Case{2, 5}}) {
    Matrix m = blob_means(c.classes, c.dim, 2.5);
    double closest = std::numeric_limits<double>::infinity();
    for (int a = 0; a < c.classes; ++a) {
      for (int b = a + 1; b < c.classes; ++b) {
        double d2 = 0;
        for (std::size_t j = 0; j < c.dim; ++j) d2 += std::pow(m(a, j) - m(b, j), 2);
        closest = std::min(closest, std::sqrt(d2));
      }
    }
    CHECK(closest == doctest::Approx(2.5).epsilon(1e-12));
  }
}

TEST_CASE("blob arguments are validated") {
  CHECK_THROWS_KIND(make_synthetic_blobs(1, 10, 2, 1.0, 0), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(make_synthetic_blobs(3, 10, 0, 1.0, 0), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(make_synthetic_blobs(3, 10, 2, 0.0, 0), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(make_synthetic_blobs(3, 0, 2, 1.0, 0), ErrorKind::kInvalidArgument);
}

TEST_CASE("constructor rejects inconsistent inputs") {
  CHECK_THROWS_KIND(LabeledDataset(Matrix(2, 1), {0, 3}, 3), ErrorKind::kLabelRange);
  CHECK_THROWS_KIND(LabeledDataset(Matrix(3, 1), {0, 1}, 2), ErrorKind::kShapeMismatch);
  CHECK_THROWS_KIND(LabeledDataset(Matrix(2, 1), {0, 1}, 2, std::vector<ClassId>{0}),
                    ErrorKind::kShapeMismatch);
}

TEST_CASE("subset and relabel") {
  LabeledDataset ds = make_synthetic_blobs(3, 4, 2, 3.0, 9);
  std::vector<std::size_t> idx = {11, 0, 5};
  LabeledDataset sub = ds.subset(idx);
  REQUIRE(sub.size() == 3);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    CHECK(sub.labels()[i] == ds.labels()[idx[i]]);
    CHECK(sub.features()(i, 1) == ds.features()(idx[i], 1));
  }
  std::vector<std::size_t> bad = {12};
  CHECK_THROWS_KIND(ds.subset(bad), ErrorKind::kIndexOutOfRange);

  std::vector<ClassId> flipped(ds.labels());
  flipped[0] = (flipped[0] + 1) % 3;
  LabeledDataset noisy = ds.relabeled(flipped, ds.labels());
  CHECK(noisy.labels() == flipped);
  CHECK(*noisy.true_labels() == ds.labels());
  CHECK(noisy.features() == ds.features());
}

TEST_CASE("class_histogram over indices") {
  LabeledDataset ds(Matrix(5, 1), {0, 1, 1, 2, 2}, 4);
  ClassHistogram all = class_histogram(ds);
  CHECK(all.counts == std::vector<std::size_t>{1, 2, 2, 0});
  CHECK(all.total() == 5);
  CHECK(all.nonzero() == 3);
  std::vector<std::size_t> idx = {1, 3};
  CHECK(class_histogram(ds, std::span<const std::size_t>(idx)).counts ==
        std::vector<std::size_t>{0, 1, 1, 0});
}

TEST_CASE("csv round trip is exact") {
  TempDir dir("dataset");
  LabeledDataset ds = make_synthetic_blobs(4, 25, 3, 2.0, 17);
  std::vector<ClassId> noisy(ds.labels());
  for (std::size_t i = 0; i < noisy.size(); i += 3) noisy[i] = (noisy[i] + 1) % 4;
  LabeledDataset with_truth = ds.relabeled(noisy, ds.labels());
  save_csv(with_truth, dir / "d.csv");

  CsvOptions opts;
  opts.true_label_column = "true_label";
  LabeledDataset back = load_csv(dir / "d.csv", opts);
  CHECK(back.features() == with_truth.features());
  CHECK(back.labels() == with_truth.labels());
  CHECK(back.true_labels() == with_truth.true_labels());
  CHECK(back.num_classes() == 4);

  LabeledDataset plain = load_csv(dir / "d.csv", "true_label");
  CHECK(plain.labels() == ds.labels());
  CHECK(plain.dim() == 4);
}

TEST_CASE("csv errors") {
  TempDir dir("dataset-errors");
  write_text_file(dir / "a.csv", "x0,label\n1.0,0\n2.0,1\n");
  CHECK_THROWS_KIND(load_csv(dir / "a.csv", "y"), ErrorKind::kParse);
  CHECK_THROWS_KIND(load_csv(dir / "missing.csv", "label"), ErrorKind::kIo);

  write_text_file(dir / "b.csv", "x0,label\n1.0,0\nabc,1\n");
  CHECK_THROWS_KIND(load_csv(dir / "b.csv", "label"), ErrorKind::kParse);

  write_text_file(dir / "c.csv", "x0,label\n1.0,0\n2.0\n");
  CHECK_THROWS_KIND(load_csv(dir / "c.csv", "label"), ErrorKind::kParse);

  write_text_file(dir / "d.csv", "x0,label\n1.0,0\n2.0,-1\n");
  CHECK_THROWS_KIND(load_csv(dir / "d.csv", "label"), ErrorKind::kLabelRange);

  write_text_file(dir / "e.csv", "x0,label\n1.0,0\n2.0,2\n");
  CHECK_THROWS_KIND(load_csv(dir / "e.csv", "label"), ErrorKind::kLabelRange);
  CsvOptions declared;
  declared.num_classes = 3;
  CHECK(load_csv(dir / "e.csv", declared).num_classes() == 3);
  declared.num_classes = 2;
  CHECK_THROWS_KIND(load_csv(dir / "e.csv", declared), ErrorKind::kLabelRange);

  write_text_file(dir / "f.csv", "");
  CHECK_THROWS_KIND(load_csv(dir / "f.csv", "label"), ErrorKind::kParse);
}

TEST_CASE("format_real reads back exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 123456789.0}) {
    CHECK(std::stod(format_real(v)) == v);
  }
  CHECK(format_real(0.05) == "0.05");
  CHECK(format_real(3.0) == "3");
}

TEST_CASE("sha256 and csv splitting") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(split_csv_line(" a, b ,c\r") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_csv_line("x,,y") == std::vector<std::string>{"x", "", "y"});
}
