// Copyright 2026 The LDL Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ldl/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace ldl {

void Dataset::Validate() const {
  if (dim <= 0) throw ArgumentError("dataset dimensionality must be positive");
  if (num_classes <= 0) throw ArgumentError("dataset needs at least one class");
  for (const Sample& s : samples) {
    if (static_cast<int>(s.features.size()) != dim) {
      throw ArgumentError("sample " + std::to_string(s.id) + " has " +
                          std::to_string(s.features.size()) +
                          " features, expected " + std::to_string(dim));
    }
    if (s.label < 0 || s.label >= num_classes) {
      throw ArgumentError("sample " + std::to_string(s.id) + " has label " +
                          std::to_string(s.label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) {
        throw DomainError("sample " + std::to_string(s.id) +
                          " has a non-finite feature");
      }
      if (kind == FeatureKind::kDiscrete && v != 0.0 && v != 1.0) {
        throw DomainError("sample " + std::to_string(s.id) +
                          " has a non-binary discrete feature");
      }
    }
  }
}

Matrix Dataset::FeatureMatrix() const {
  Matrix m(static_cast<Eigen::Index>(samples.size()), dim);
  for (size_t i = 0; i < samples.size(); ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = samples[i].features[j];
  }
  return m;
}

std::vector<int> Dataset::Labels() const {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const Sample& s : samples) labels.push_back(s.label);
  return labels;
}

void MinMaxNormalize(Dataset& dataset) {
  if (dataset.empty()) return;
  for (int j = 0; j < dataset.dim; ++j) {
    double lo = dataset.samples[0].features[j];
    double hi = lo;
    for (const Sample& s : dataset.samples) {
      lo = std::min(lo, s.features[j]);
      hi = std::max(hi, s.features[j]);
    }
    const double range = hi - lo;
    for (Sample& s : dataset.samples) {
      s.features[j] = range > 0.0 ? (s.features[j] - lo) / range : 0.0;
    }
  }
}

Dataset GenerateBlobs(const BlobsConfig& config) {
  if (config.dim <= 0) throw ArgumentError("generate_blobs: dim must be > 0");
  if (config.num_classes <= 0) {
    throw ArgumentError("generate_blobs: class count must be > 0");
  }
  if (config.num_samples < config.num_classes) {
    throw ArgumentError("generate_blobs: need at least one sample per class");
  }
  if (!(config.spread > 0.0) || !std::isfinite(config.spread)) {
    throw ArgumentError("generate_blobs: spread must be positive");
  }
  if (!(config.label_noise >= 0.0 && config.label_noise <= 1.0)) {
    throw ArgumentError("generate_blobs: label_noise must lie in [0, 1]");
  }

  Rng centroid_rng(DeriveSeed(config.seed, "blobs/centroids"));
  Rng point_rng(DeriveSeed(config.seed, "blobs/points"));
  Rng noise_rng(DeriveSeed(config.seed, "blobs/label-noise"));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> centroids(config.num_classes,
                                             std::vector<double>(config.dim));
  for (auto& c : centroids) {
    for (double& v : c) v = unit(centroid_rng);
  }

  Dataset out;
  out.dim = config.dim;
  out.num_classes = config.num_classes;
  out.kind = FeatureKind::kContinuous;
  out.samples.resize(config.num_samples);
  std::normal_distribution<double> gauss(0.0, config.spread);
  for (int i = 0; i < config.num_samples; ++i) {
    Sample& s = out.samples[i];
    s.id = i;
    s.label = i % config.num_classes;
    s.features.resize(config.dim);
    for (int j = 0; j < config.dim; ++j) {
      s.features[j] = centroids[s.label][j] + gauss(point_rng);
    }
  }

  const int flips = static_cast<int>(
      std::lround(config.label_noise * static_cast<double>(config.num_samples)));
  if (flips > 0) {
    std::vector<int> order(config.num_samples);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), noise_rng);
    std::uniform_int_distribution<int> any_class(0, config.num_classes - 1);
    for (int i = 0; i < flips; ++i) {
      out.samples[order[i]].label = any_class(noise_rng);
    }
  }

  MinMaxNormalize(out);
  return out;
}

namespace {

std::vector<std::string> SplitCells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool ParseDouble(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset LoadCsv(const std::string& path, const std::string& label_column,
                FeatureKind kind) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CSV file '" + path + "'");

  std::string line;
  if (!std::getline(in, line) || Trim(line).empty()) {
    throw FormatError(path + ": empty file (missing header row)");
  }
  std::vector<std::string> header = SplitCells(line);
  for (auto& h : header) h = Trim(h);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw FormatError(path + ": no column named '" + label_column + "'");
  }
  const size_t label_idx = static_cast<size_t>(label_it - header.begin());
  if (header.size() < 2) throw FormatError(path + ": no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  int row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (Trim(line).empty()) continue;
    std::vector<std::string> cells = SplitCells(line);
    if (cells.size() != header.size()) {
      throw FormatError(path + ": row " + std::to_string(row_number) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    std::vector<double> features;
    features.reserve(header.size() - 1);
    for (size_t col = 0; col < cells.size(); ++col) {
      const std::string cell = Trim(cells[col]);
      double value = 0.0;
      if (!ParseDouble(cell, value)) {
        throw FormatError(path + ": row " + std::to_string(row_number) +
                          ", column '" + header[col] + "': cannot parse '" +
                          cell + "' as a number");
      }
      if (col == label_idx) {
        if (value != std::floor(value) || value < 0) {
          throw FormatError(path + ": row " + std::to_string(row_number) +
                            ", column '" + header[col] +
                            "': label must be a non-negative integer");
        }
        raw_labels.push_back(static_cast<long long>(value));
        continue;
      }
      if (kind == FeatureKind::kDiscrete && value != 0.0 && value != 1.0) {
        throw DomainError(path + ": row " + std::to_string(row_number) +
                          ", column '" + header[col] + "': value " + cell +
                          " is not binary");
      }
      features.push_back(value);
    }
    rows.push_back(std::move(features));
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");

  std::map<long long, int> label_map;
  for (long long l : raw_labels) label_map.emplace(l, 0);
  int next = 0;
  for (auto& [raw, mapped] : label_map) mapped = next++;

  Dataset out;
  out.dim = static_cast<int>(header.size() - 1);
  out.num_classes = static_cast<int>(label_map.size());
  out.kind = kind;
  out.samples.resize(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.samples[i].id = static_cast<int64_t>(i);
    out.samples[i].features = std::move(rows[i]);
    out.samples[i].label = label_map.at(raw_labels[i]);
  }
  if (kind == FeatureKind::kContinuous) MinMaxNormalize(out);
  out.Validate();
  return out;
}

SplitResult Split(const Dataset& dataset, const SplitSpec& spec) {
  if (spec.member_count <= 0 || spec.nonmember_count <= 0) {
    throw ArgumentError("split: member and nonmember counts must be positive");
  }
  const size_t requested = static_cast<size_t>(spec.member_count) +
                           static_cast<size_t>(spec.nonmember_count);
  if (requested > dataset.size()) {
    throw ArgumentError("split: requested " + std::to_string(requested) +
                        " samples but the dataset has " +
                        std::to_string(dataset.size()));
  }
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(DeriveSeed(spec.seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);

  auto empty_like = [&dataset] {
    Dataset d;
    d.dim = dataset.dim;
    d.num_classes = dataset.num_classes;
    d.kind = dataset.kind;
    return d;
  };
  SplitResult out{empty_like(), empty_like(), empty_like()};
  std::vector<bool> taken(dataset.size(), false);
  for (size_t i = 0; i < requested; ++i) {
    Sample s = dataset.samples[order[i]];
    taken[order[i]] = true;
    if (i < static_cast<size_t>(spec.member_count)) {
      s.membership = Membership::kMember;
      out.members.samples.push_back(std::move(s));
    } else {
      s.membership = Membership::kNonmember;
      out.nonmembers.samples.push_back(std::move(s));
    }
  }
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (!taken[i]) out.remainder.samples.push_back(dataset.samples[i]);
  }
  return out;
}

}  // namespace ldl
