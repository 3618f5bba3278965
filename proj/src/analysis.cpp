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

#include "fednoisy/analysis.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "fednoisy/error.hpp"
#include "fednoisy/io.hpp"

namespace fednoisy {

double last_k_average(std::span<const RoundRecord> records, std::size_t k) {
  require(k >= 1, ErrorKind::kInvalidArgument, "k must be >= 1");
  std::vector<double> evaluated;
  for (const auto& r : records) {
    if (r.test_accuracy) evaluated.push_back(*r.test_accuracy);
  }
  require(evaluated.size() >= k, ErrorKind::kInsufficientRecords,
          "need " + std::to_string(k) + " evaluated rounds, have " +
              std::to_string(evaluated.size()));
  double sum = 0.0;
  for (std::size_t i = evaluated.size() - k; i < evaluated.size(); ++i) sum += evaluated[i];
  return sum / static_cast<double>(k);
}

double accuracy_drop_ratio(double acc_iid, double acc_noniid) {
  require(acc_iid != 0.0, ErrorKind::kDivisionByZero, "iid accuracy is zero");
  require(acc_iid > 0.0, ErrorKind::kInvalidArgument, "iid accuracy must be positive");
  return (acc_iid - acc_noniid) / acc_iid;
}

double sensitivity(double acc_at_eps, double acc_at_eps_plus_delta, double delta) {
  require(delta > 0.0, ErrorKind::kInvalidArgument, "delta must be positive");
  return (acc_at_eps - acc_at_eps_plus_delta) / delta;
}

double overall_noise_ratio(std::span<const double> ratios,
                           std::span<const std::size_t> sizes) {
  require(ratios.size() == sizes.size(), ErrorKind::kLengthMismatch,
          "ratio and size lists differ in length");
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    weighted += ratios[k] * static_cast<double>(sizes[k]);
    total += static_cast<double>(sizes[k]);
  }
  require(total > 0.0, ErrorKind::kEmptyInput, "no samples");
  return weighted / total;
}

double overall_noise_ratio(const NoiseReport& report, std::span<const std::size_t> sizes) {
  return overall_noise_ratio(report.per_client_ratio, sizes);
}

std::vector<double> grad_norm_series(std::span<const ModelParams> checkpoints) {
  require(checkpoints.size() >= 2, ErrorKind::kInvalidArgument, "need at least 2 checkpoints");
  std::vector<double> out;
  out.reserve(checkpoints.size() - 1);
  for (std::size_t t = 1; t < checkpoints.size(); ++t) {
    require(checkpoints[t].layout == checkpoints[0].layout, ErrorKind::kLayoutMismatch,
            "checkpoint " + std::to_string(t) + " has a different layout");
    out.push_back(l2_distance(checkpoints[t], checkpoints[t - 1]));
  }
  return out;
}

std::string_view to_string(AccuracyScale scale) {
  return scale == AccuracyScale::kPercent ? "percent" : "fraction";
}

AccuracyScale parse_accuracy_scale(std::string_view name) {
  if (name == "percent") return AccuracyScale::kPercent;
  if (name == "fraction") return AccuracyScale::kFraction;
  throw Error(ErrorKind::kInvalidArgument, "unknown accuracy scale '" + std::string(name) + "'");
}

void AccuracyTable::add(const std::string& partition, const std::string& mode, double eps,
                        double accuracy) {
  require(std::isfinite(accuracy) && accuracy >= 0.0 && accuracy <= scale_factor(),
          ErrorKind::kInvalidArgument,
          "accuracy " + format_real(accuracy) + " outside the " +
              std::string(to_string(scale_)) + " scale");
  require(std::isfinite(eps) && eps >= 0.0 && eps <= 1.0, ErrorKind::kInvalidArgument,
          "noise ratio outside [0, 1]");
  entries_[Key{partition, mode, eps}] = accuracy;
}

std::optional<double> AccuracyTable::value(const std::string& partition,
                                           const std::string& mode, double eps) const {
  auto it = entries_.find(Key{partition, mode, eps});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> AccuracyTable::fraction(const std::string& partition,
                                              const std::string& mode, double eps) const {
  auto v = value(partition, mode, eps);
  if (!v) return std::nullopt;
  return *v / scale_factor();
}

namespace {

double parse_number(const std::string& text, const std::string& where) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::kParse, where + ": bad number '" + text + "'");
  }
  return value;
}

}  // namespace

AccuracyTable parse_accuracy_table(std::string_view text, AccuracyScale scale,
                                   const std::string& source) {
  AccuracyTable table(scale);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = source + " line " + std::to_string(line_no);
    auto fields = split_csv_line(line);
    if (!header_seen) {
      const std::vector<std::string> expected = {"partition", "mode", "eps", "accuracy"};
      if (fields != expected) {
        throw Error(ErrorKind::kParse, where + ": expected header partition,mode,eps,accuracy");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) {
      throw Error(ErrorKind::kParse, where + ": expected 4 fields, got " +
                                         std::to_string(fields.size()));
    }
    double eps = parse_number(fields[2], where);
    double acc = parse_number(fields[3], where);
    try {
      table.add(fields[0], fields[1], eps, acc);
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, where + ": " + e.message());
    }
  }
  return table;
}

AccuracyTable load_accuracy_table(const std::filesystem::path& path, AccuracyScale scale) {
  return parse_accuracy_table(read_text_file(path), scale, path.string());
}

std::vector<DropRatioRow> drop_ratio_series(const AccuracyTable& table,
                                            const std::string& iid_tag) {
  std::vector<DropRatioRow> rows;
  for (const auto& [key, acc] : table.entries()) {
    const auto& [partition, mode, eps] = key;
    if (partition == iid_tag) continue;
    auto iid = table.value(iid_tag, mode, eps);
    if (!iid) continue;
    rows.push_back({partition, mode, eps, *iid, acc, accuracy_drop_ratio(*iid, acc)});
  }
  return rows;
}

std::vector<SensitivityRow> sensitivity_series(const AccuracyTable& table,
                                               const std::string& clean_mode) {
  std::map<std::pair<std::string, std::string>, std::map<double, double>> series;
  std::map<std::string, double> clean;
  for (const auto& [key, acc] : table.entries()) {
    const auto& [partition, mode, eps] = key;
    if (mode == clean_mode) {
      if (eps == 0.0) clean[partition] = acc;
      continue;
    }
    series[{partition, mode}][eps] = acc;
  }
  for (auto& [pm, points] : series) {
    auto it = clean.find(pm.first);
    if (it != clean.end() && !points.contains(0.0)) points[0.0] = it->second;
  }
  std::vector<SensitivityRow> rows;
  for (const auto& [pm, points] : series) {
    for (auto it = points.begin(); std::next(it) != points.end(); ++it) {
      auto nx = std::next(it);
      double delta = std::round((nx->first - it->first) * 1e9) / 1e9;
      rows.push_back(
          {pm.first, pm.second, it->first, delta, sensitivity(it->second, nx->second, delta)});
    }
  }
  return rows;
}

std::vector<NoiseRatioRow> noise_ratio_series(const NoiseReport& report) {
  std::vector<NoiseRatioRow> rows;
  for (std::size_t k = 0; k < report.per_client_ratio.size(); ++k) {
    NoiseRatioRow row;
    row.client = k;
    row.size = k < report.client_sizes.size() ? report.client_sizes[k] : 0;
    row.eps = k < report.per_client_eps.size() ? report.per_client_eps[k] : 0.0;
    row.ratio = report.per_client_ratio[k];
    rows.push_back(row);
  }
  return rows;
}

void write_drop_ratio_csv(const std::filesystem::path& path, std::span<const DropRatioRow> rows) {
  std::ostringstream out;
  if (!rows.empty()) out << "partition,mode,eps,acc_iid,acc_partition,drop_ratio\n";
  for (const auto& r : rows) {
    out << r.partition << ',' << r.mode << ',' << format_real(r.eps) << ','
        << format_real(r.acc_iid) << ',' << format_real(r.acc_partition) << ','
        << format_real(r.ratio) << '\n';
  }
  write_text_file(path, out.str());
}

void write_sensitivity_csv(const std::filesystem::path& path,
                           std::span<const SensitivityRow> rows) {
  std::ostringstream out;
  if (!rows.empty()) out << "partition,mode,eps,delta,sensitivity\n";
  for (const auto& r : rows) {
    out << r.partition << ',' << r.mode << ',' << format_real(r.eps) << ','
        << format_real(r.delta) << ',' << format_real(r.value) << '\n';
  }
  write_text_file(path, out.str());
}

void write_noise_ratio_csv(const std::filesystem::path& path,
                           std::span<const NoiseRatioRow> rows) {
  std::ostringstream out;
  if (!rows.empty()) out << "client,size,eps,noise_ratio\n";
  for (const auto& r : rows) {
    out << r.client << ',' << r.size << ',' << format_real(r.eps) << ','
        << format_real(r.ratio) << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace fednoisy
