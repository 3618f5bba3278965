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

#include "fednoisy/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "fednoisy/error.hpp"
#include "fednoisy/rng.hpp"
#include "model_internal.hpp"

namespace fednoisy {

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::kMlp ? "mlp" : "linear";
}

std::string_view to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "tanh";
}

ModelLayout ModelLayout::linear(std::size_t input_dim, std::size_t num_classes) {
  ModelLayout layout;
  layout.kind = ModelKind::kLinearSoftmax;
  layout.input_dim = input_dim;
  layout.num_classes = num_classes;
  return layout;
}

ModelLayout ModelLayout::mlp(std::size_t input_dim, std::size_t hidden,
                             std::size_t num_classes, Activation activation) {
  ModelLayout layout;
  layout.kind = ModelKind::kMlp;
  layout.input_dim = input_dim;
  layout.hidden = hidden;
  layout.num_classes = num_classes;
  layout.activation = activation;
  return layout;
}

std::size_t ModelLayout::parameter_count() const {
  if (kind == ModelKind::kLinearSoftmax) return num_classes * (input_dim + 1);
  return hidden * (input_dim + 1) + num_classes * (hidden + 1);
}

void ModelLayout::validate() const {
  require(input_dim >= 1, ErrorKind::kInvalidArgument, "model input_dim must be >= 1");
  require(num_classes >= 2, ErrorKind::kInvalidArgument, "model needs >= 2 classes");
  if (kind == ModelKind::kMlp) {
    require(hidden >= 1, ErrorKind::kInvalidArgument, "mlp hidden width must be >= 1");
  }
}

bool ModelParams::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

void ModelParams::validate() const {
  layout.validate();
  require(values.size() == layout.parameter_count(), ErrorKind::kLayoutMismatch,
          "parameter vector has " + std::to_string(values.size()) +
              " entries, layout needs " + std::to_string(layout.parameter_count()));
  require(all_finite(), ErrorKind::kNonFiniteParameters, "parameters contain NaN/inf");
}

ModelParams zero_params(const ModelLayout& layout) {
  layout.validate();
  return {layout, std::vector<double>(layout.parameter_count(), 0.0)};
}

ModelParams init_params(const ModelLayout& layout, std::uint64_t seed) {
  ModelParams params = zero_params(layout);
  Rng rng(derive_seed(seed, "init"));
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = begin; i < begin + count; ++i) {
      params.values[i] = rng.uniform(-bound, bound);
    }
  };
  const std::size_t d = layout.input_dim;
  const std::size_t c = layout.num_classes;
  if (layout.kind == ModelKind::kLinearSoftmax) {
    fill(0, c * (d + 1), d);
  } else {
    const std::size_t h = layout.hidden;
    fill(0, h * (d + 1), d);
    fill(h * (d + 1), c * (h + 1), h);
  }
  return params;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    auto p = probs.row(r);
    double max = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      p[j] = std::exp(z[j] - max);
      sum += p[j];
    }
    for (auto& v : p) v /= sum;
  }
  return probs;
}

namespace detail {

namespace {

// out = in * W^T + b, W stored (out_dim x in_dim) at w.
void affine(const Matrix& in, const double* w, const double* b, Matrix& out) {
  const std::size_t in_dim = in.cols();
  const std::size_t out_dim = out.cols();
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wo = w + o * in_dim;
      double acc = b[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += wo[i] * x[i];
      y[o] = acc;
    }
  }
}

// grad_w += delta^T * in, grad_b += column sums of delta.
void affine_grad(const Matrix& in, const Matrix& delta, double* gw, double* gb) {
  const std::size_t in_dim = in.cols();
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto x = in.row(r);
    auto d = delta.row(r);
    for (std::size_t o = 0; o < d.size(); ++o) {
      double* go = gw + o * in_dim;
      const double dv = d[o];
      for (std::size_t i = 0; i < in_dim; ++i) go[i] += dv * x[i];
      gb[o] += dv;
    }
  }
}

}  // namespace

ForwardPass run_forward(const ModelParams& params, const Matrix& inputs) {
  const ModelLayout& layout = params.layout;
  require(inputs.cols() == layout.input_dim, ErrorKind::kShapeMismatch,
          "input has " + std::to_string(inputs.cols()) + " columns, model expects " +
              std::to_string(layout.input_dim));
  require(params.values.size() == layout.parameter_count(), ErrorKind::kLayoutMismatch,
          "parameter vector does not match layout");
  const double* v = params.values.data();
  const std::size_t d = layout.input_dim;
  const std::size_t c = layout.num_classes;
  ForwardPass pass;
  pass.logits = Matrix(inputs.rows(), c);
  if (layout.kind == ModelKind::kLinearSoftmax) {
    affine(inputs, v, v + c * d, pass.logits);
    return pass;
  }
  const std::size_t h = layout.hidden;
  pass.hidden_pre = Matrix(inputs.rows(), h);
  affine(inputs, v, v + h * d, pass.hidden_pre);
  pass.hidden = pass.hidden_pre;
  for (double& a : pass.hidden.data()) {
    a = layout.activation == Activation::kTanh ? std::tanh(a) : std::max(a, 0.0);
  }
  const double* w2 = v + h * (d + 1);
  affine(pass.hidden, w2, w2 + c * h, pass.logits);
  return pass;
}

void backpropagate(const ModelParams& params, const Matrix& inputs,
                   const ForwardPass& pass, const Matrix& dlogits,
                   std::vector<double>& grad) {
  const ModelLayout& layout = params.layout;
  const std::size_t d = layout.input_dim;
  const std::size_t c = layout.num_classes;
  double* g = grad.data();
  if (layout.kind == ModelKind::kLinearSoftmax) {
    affine_grad(inputs, dlogits, g, g + c * d);
    return;
  }
  const std::size_t h = layout.hidden;
  const double* w2 = params.values.data() + h * (d + 1);
  double* g2 = g + h * (d + 1);
  affine_grad(pass.hidden, dlogits, g2, g2 + c * h);

  Matrix dpre(inputs.rows(), h);
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    auto dz = dlogits.row(r);
    auto out = dpre.row(r);
    for (std::size_t j = 0; j < h; ++j) {
      double acc = 0.0;
      for (std::size_t o = 0; o < c; ++o) acc += dz[o] * w2[o * h + j];
      double deriv;
      if (layout.activation == Activation::kTanh) {
        double t = pass.hidden(r, j);
        deriv = 1.0 - t * t;
      } else {
        deriv = pass.hidden_pre(r, j) > 0.0 ? 1.0 : 0.0;
      }
      out[j] = acc * deriv;
    }
  }
  affine_grad(inputs, dpre, g, g + h * d);
}

}  // namespace detail

Matrix forward_logits(const ModelParams& params, const Matrix& inputs) {
  return detail::run_forward(params, inputs).logits;
}

Matrix forward(const ModelParams& params, const Matrix& inputs) {
  return softmax_rows(forward_logits(params, inputs));
}

nlohmann::json layout_to_json(const ModelLayout& layout) {
  nlohmann::json doc;
  doc["kind"] = std::string(to_string(layout.kind));
  doc["input_dim"] = layout.input_dim;
  doc["num_classes"] = layout.num_classes;
  if (layout.kind == ModelKind::kMlp) {
    doc["hidden"] = layout.hidden;
    doc["activation"] = std::string(to_string(layout.activation));
  }
  return doc;
}

ModelLayout layout_from_json(const nlohmann::json& doc) {
  try {
    ModelLayout layout;
    std::string kind = doc.at("kind").get<std::string>();
    if (kind == "linear" || kind == "linear-softmax") {
      layout.kind = ModelKind::kLinearSoftmax;
    } else if (kind == "mlp") {
      layout.kind = ModelKind::kMlp;
      layout.hidden = doc.at("hidden").get<std::size_t>();
      std::string act = doc.value("activation", std::string("tanh"));
      if (act == "tanh") {
        layout.activation = Activation::kTanh;
      } else if (act == "relu") {
        layout.activation = Activation::kRelu;
      } else {
        throw Error(ErrorKind::kInvalidArgument, "unknown activation '" + act + "'");
      }
    } else {
      throw Error(ErrorKind::kInvalidArgument, "unknown model kind '" + kind + "'");
    }
    layout.input_dim = doc.at("input_dim").get<std::size_t>();
    layout.num_classes = doc.at("num_classes").get<std::size_t>();
    layout.validate();
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("model layout: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  checkpoint.params.validate();
  nlohmann::json header;
  header["layout"] = layout_to_json(checkpoint.params.layout);
  header["round"] = checkpoint.round;
  header["seed"] = checkpoint.seed;
  header["count"] = checkpoint.params.values.size();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << header.dump() << '\n';
  for (double v : checkpoint.params.values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kParse, path.string() + ": missing checkpoint header");
  }
  Checkpoint checkpoint;
  std::size_t count = 0;
  try {
    auto header = nlohmann::json::parse(line);
    checkpoint.params.layout = layout_from_json(header.at("layout"));
    checkpoint.round = header.at("round").get<std::int64_t>();
    checkpoint.seed = header.at("seed").get<std::uint64_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  checkpoint.params.values.resize(count);
  for (auto& v : checkpoint.params.values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw Error(ErrorKind::kParse, path.string() + ": truncated parameter block");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  checkpoint.params.validate();
  return checkpoint;
}

}  // namespace fednoisy
