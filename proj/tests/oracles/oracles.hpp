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

#pragma once

// Reference implementations used by the tests. They are written from the
// textbook definitions, in long double where it matters, and share no code
// with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

#include "fednoisy/dataset.hpp"
#include "fednoisy/loss.hpp"
#include "fednoisy/model.hpp"
#include "fednoisy/partition.hpp"
#include "fednoisy/rng.hpp"

namespace oracle {

using fednoisy::ClassId;

inline std::vector<std::vector<std::size_t>> recount_histograms(
    const std::vector<ClassId>& labels, const std::vector<std::vector<std::size_t>>& clients,
    int num_classes) {
  std::vector<std::vector<std::size_t>> out(clients.size(),
                                            std::vector<std::size_t>(num_classes, 0));
  for (std::size_t k = 0; k < clients.size(); ++k) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (std::find(clients[k].begin(), clients[k].end(), i) != clients[k].end()) {
        ++out[k][static_cast<std::size_t>(labels[i])];
      }
    }
  }
  return out;
}

inline std::size_t count_disagreements(const std::vector<ClassId>& a,
                                       const std::vector<ClassId>& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i] ? 1 : 0;
  return n;
}

// z standard errors of a binomial proportion.
inline double binomial_halfwidth(std::size_t n, double p, double z) {
  return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// Total-variation distance between two count vectors viewed as distributions.
inline double tv_distance(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    tv += std::abs(static_cast<double>(a[i]) / na - static_cast<double>(b[i]) / nb);
  }
  return 0.5 * tv;
}

inline bool disjoint_in_range(const fednoisy::PartitionPlan& plan, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& c : plan.clients) {
    for (std::size_t i : c) {
      if (i >= n || seen[i]++) return false;
    }
  }
  return true;
}

// ---- model forward pass and losses ----

inline std::vector<long double> logits(const fednoisy::ModelParams& params,
                                       std::span<const double> x) {
  const auto& L = params.layout;
  const auto& w = params.values;
  const std::size_t d = L.input_dim;
  const std::size_t c = L.num_classes;
  std::vector<long double> z(c);
  if (L.kind == fednoisy::ModelKind::kLinearSoftmax) {
    for (std::size_t k = 0; k < c; ++k) {
      long double s = w[c * d + k];
      for (std::size_t j = 0; j < d; ++j) s += static_cast<long double>(w[k * d + j]) * x[j];
      z[k] = s;
    }
    return z;
  }
  const std::size_t h = L.hidden;
  const std::size_t b1 = h * d;
  const std::size_t w2 = b1 + h;
  const std::size_t b2 = w2 + c * h;
  std::vector<long double> a(h);
  for (std::size_t u = 0; u < h; ++u) {
    long double s = w[b1 + u];
    for (std::size_t j = 0; j < d; ++j) s += static_cast<long double>(w[u * d + j]) * x[j];
    a[u] = L.activation == fednoisy::Activation::kTanh ? std::tanh(s) : std::max(s, 0.0L);
  }
  for (std::size_t k = 0; k < c; ++k) {
    long double s = w[b2 + k];
    for (std::size_t u = 0; u < h; ++u) s += static_cast<long double>(w[w2 + k * h + u]) * a[u];
    z[k] = s;
  }
  return z;
}

inline std::vector<long double> softmax(const std::vector<long double>& z) {
  long double m = *std::max_element(z.begin(), z.end());
  std::vector<long double> p(z.size());
  long double s = 0;
  for (std::size_t k = 0; k < z.size(); ++k) s += (p[k] = std::exp(z[k] - m));
  for (auto& v : p) v /= s;
  return p;
}

inline long double hard_loss(fednoisy::LossKind kind, const std::vector<long double>& p,
                             std::size_t y, const fednoisy::LossParams& lp) {
  const long double py = p[y];
  switch (kind) {
    case fednoisy::LossKind::kCe: return -std::log(py);
    case fednoisy::LossKind::kSce:
      return lp.sce_alpha * -std::log(py) + lp.sce_beta * -lp.sce_log_clip * (1 - py);
    case fednoisy::LossKind::kGce: return (1 - std::pow(py, (long double)lp.gce_q)) / lp.gce_q;
    case fednoisy::LossKind::kMae: return 2 * (1 - py);
  }
  return 0;
}

// Mean hard-label loss plus (wd / 2) * ||w||^2.
inline long double objective(const fednoisy::ModelParams& params, const fednoisy::Matrix& X,
                             const std::vector<ClassId>& y, fednoisy::LossKind kind,
                             const fednoisy::LossParams& lp, double wd) {
  long double sum = 0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    sum += hard_loss(kind, softmax(logits(params, X.row(i))), static_cast<std::size_t>(y[i]), lp);
  }
  long double reg = 0;
  for (double v : params.values) reg += static_cast<long double>(v) * v;
  return sum / X.rows() + 0.5L * wd * reg;
}

inline long double soft_objective(const fednoisy::ModelParams& params, const fednoisy::Matrix& X,
                                  const fednoisy::Matrix& T, double wd) {
  long double sum = 0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto p = softmax(logits(params, X.row(i)));
    for (std::size_t k = 0; k < p.size(); ++k) sum -= T(i, k) * std::log(p[k]);
  }
  long double reg = 0;
  for (double v : params.values) reg += static_cast<long double>(v) * v;
  return sum / X.rows() + 0.5L * wd * reg;
}

inline std::vector<double> central_difference(
    const std::function<long double(const fednoisy::ModelParams&)>& f,
    const fednoisy::ModelParams& at, double h) {
  std::vector<double> g(at.values.size());
  fednoisy::ModelParams p = at;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = p.values[i];
    p.values[i] = orig + h;
    long double up = f(p);
    p.values[i] = orig - h;
    long double down = f(p);
    p.values[i] = orig;
    g[i] = static_cast<double>((up - down) / (2.0L * h));
  }
  return g;
}

// ||a - b|| / max(||a|| + ||b||, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-8) {
  long double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (long double)(a[i] - b[i]) * (a[i] - b[i]);
    na += (long double)a[i] * a[i];
    nb += (long double)b[i] * b[i];
  }
  return static_cast<double>(std::sqrt(diff) /
                             std::max<long double>(std::sqrt(na) + std::sqrt(nb), floor));
}

// ---- aggregation ----

inline std::vector<long double> weighted_average(const std::vector<std::vector<double>>& models,
                                                 const std::vector<double>& weights) {
  long double total = 0;
  for (double w : weights) total += w;
  std::vector<long double> out(models.front().size(), 0);
  for (std::size_t k = 0; k < models.size(); ++k) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] / total * models[k][i];
  }
  return out;
}

// ---- centralized trainer ----

// Mini-batch SGD with momentum on a linear-softmax model, one call per epoch.
// The momentum buffer starts at zero on every call; the visiting order is the
// permutation drawn from derive_seed(epoch_seed, "shuffle", 0).
inline std::vector<double> linear_sgd_epoch(std::vector<double> w, const fednoisy::LabeledDataset& ds,
                                            std::size_t batch, double lr, double momentum,
                                            double wd, std::uint64_t epoch_seed) {
  const std::size_t d = ds.dim();
  const std::size_t c = static_cast<std::size_t>(ds.num_classes());
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  fednoisy::Rng rng(fednoisy::derive_seed(epoch_seed, "shuffle", 0));
  rng.shuffle(std::span(order));
  std::vector<double> v(w.size(), 0.0);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double n = static_cast<double>(end - start);
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t s = start; s < end; ++s) {
      auto x = ds.features().row(order[s]);
      const auto y = static_cast<std::size_t>(ds.labels()[order[s]]);
      std::vector<double> z(c);
      for (std::size_t k = 0; k < c; ++k) {
        z[k] = w[c * d + k];
        for (std::size_t j = 0; j < d; ++j) z[k] += w[k * d + j] * x[j];
      }
      double m = *std::max_element(z.begin(), z.end());
      double sum = 0;
      for (auto& zk : z) sum += (zk = std::exp(zk - m));
      for (std::size_t k = 0; k < c; ++k) {
        const double r = (z[k] / sum - (k == y ? 1.0 : 0.0)) / n;
        for (std::size_t j = 0; j < d; ++j) g[k * d + j] += r * x[j];
        g[c * d + k] += r;
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
  return w;
}

}  // namespace oracle
