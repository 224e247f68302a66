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

#include "ldl/defense.h"

#include <algorithm>
#include <cmath>

namespace ldl {

std::string NoiseKindName(NoiseKind kind) {
  return kind == NoiseKind::kGaussian ? "gaussian" : "bernoulli_flip";
}

NoiseKind ParseNoiseKind(const std::string& name) {
  if (name == "gaussian") return NoiseKind::kGaussian;
  if (name == "bernoulli_flip") return NoiseKind::kBernoulliFlip;
  throw ArgumentError("unknown noise kind '" + name + "'");
}

void NoiseSpec::Validate() const {
  if (kind == NoiseKind::kGaussian) {
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
      throw ArgumentError("gaussian noise needs a finite sigma2 >= 0");
    }
  } else if (!(p >= 0.0 && p <= 1.0)) {
    throw ArgumentError("bernoulli_flip noise needs p in [0, 1]");
  }
}

bool NoiseSpec::IsIdentity() const {
  return kind == NoiseKind::kGaussian ? sigma2 == 0.0 : p == 0.0;
}

namespace {

void CheckCompatible(std::span<const double> features, FeatureKind kind,
                     const NoiseSpec& noise) {
  if (noise.kind == NoiseKind::kGaussian && kind == FeatureKind::kDiscrete) {
    throw DomainError("gaussian noise cannot perturb discrete features");
  }
  if (noise.kind == NoiseKind::kBernoulliFlip) {
    if (kind != FeatureKind::kDiscrete) {
      throw DomainError("bernoulli_flip noise needs discrete features");
    }
    for (double v : features) {
      if (v != 0.0 && v != 1.0) {
        throw DomainError("bernoulli_flip noise on a non-binary feature");
      }
    }
  }
}

}  // namespace

void PerturbInto(std::span<const double> features, FeatureKind kind,
                 const NoiseSpec& noise, Rng& rng, Matrix& out,
                 Eigen::Index row, Eigen::Index copies) {
  noise.Validate();
  CheckCompatible(features, kind, noise);
  const Eigen::Index d = static_cast<Eigen::Index>(features.size());
  if (noise.kind == NoiseKind::kGaussian) {
    const double sigma = std::sqrt(noise.sigma2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index r = row; r < row + copies; ++r) {
      for (Eigen::Index j = 0; j < d; ++j) {
        out(r, j) = features[j] + sigma * gauss(rng);
      }
    }
  } else {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index r = row; r < row + copies; ++r) {
      for (Eigen::Index j = 0; j < d; ++j) {
        out(r, j) = unit(rng) < noise.p ? 1.0 - features[j] : features[j];
      }
    }
  }
}

std::vector<double> Perturb(std::span<const double> features, FeatureKind kind,
                            const NoiseSpec& noise, Rng& rng) {
  Matrix row(1, static_cast<Eigen::Index>(features.size()));
  PerturbInto(features, kind, noise, rng, row, 0, 1);
  return std::vector<double>(row.data(), row.data() + row.size());
}

SmoothedClassifier::SmoothedClassifier(std::shared_ptr<const Model> base,
                                       NoiseSpec noise, int k, uint64_t seed,
                                       FeatureKind kind)
    : base_(std::move(base)), noise_(noise), k_(k), seed_(seed), kind_(kind) {
  if (!base_) throw ArgumentError("smoothed classifier needs a base model");
  if (k_ < 1) throw ArgumentError("smoothed classifier needs k >= 1");
  noise_.Validate();
}

SmoothedClassifier SmoothedClassifier::DefenseFree(
    std::shared_ptr<const Model> base, FeatureKind kind) {
  const NoiseSpec identity = kind == FeatureKind::kDiscrete
                                ? NoiseSpec::BernoulliFlip(0.0)
                                : NoiseSpec::Gaussian(0.0);
  return SmoothedClassifier(std::move(base), identity, 1, 0, kind);
}

Vector SmoothedClassifier::AveragedLogits(std::span<const double> features,
                                          uint64_t query_id) const {
  if (static_cast<int>(features.size()) != input_dim()) {
    throw ArgumentError("smoothed classifier: feature dimension mismatch");
  }
  if (noise_.IsIdentity()) {
    // Every variant equals x, so the average is the base logit vector.
    CheckCompatible(features, kind_, noise_);
    return base_->Logits(features);
  }
  Rng rng(DeriveSeed(seed_, query_id));
  // Variants are drawn and evaluated in small blocks so that no buffer reaches
  // mmap-sized allocations, which otherwise dominate the cost of a query.
  constexpr int kBlock = 32;
  Matrix variants(std::min(kBlock, k_), input_dim());
  Vector sum = Vector::Zero(base_->num_classes());
  for (int start = 0; start < k_; start += kBlock) {
    const int rows = std::min(kBlock, k_ - start);
    if (rows < variants.rows()) variants.conservativeResize(rows, Eigen::NoChange);
    PerturbInto(features, kind_, noise_, rng, variants, 0, rows);
    sum += base_->LogitsBatch(variants).colwise().sum().transpose();
  }
  return sum / static_cast<double>(k_);
}

SmoothedPrediction SmoothedClassifier::Predict(std::span<const double> features,
                                               uint64_t query_id) const {
  const Vector avg = AveragedLogits(features, query_id);
  SmoothedPrediction out;
  out.label = Argmax(avg);
  out.confidences = Softmax(std::span<const double>(avg.data(), avg.size()));
  return out;
}

std::vector<int> SmoothedClassifier::PredictLabels(
    const Matrix& points, std::span<const uint64_t> query_ids) const {
  if (static_cast<size_t>(points.rows()) != query_ids.size()) {
    throw ArgumentError("smoothed classifier: one query id per point");
  }
  if (points.cols() != input_dim()) {
    throw ArgumentError("smoothed classifier: feature dimension mismatch");
  }
  // Each point is answered exactly as Predict() would answer it, so a query's
  // label depends only on (point, query id).
  std::vector<int> labels(static_cast<size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto row = points.row(i);
    const Vector avg = AveragedLogits(
        std::span<const double>(row.data(), points.cols()), query_ids[i]);
    labels[i] = Argmax(avg);
  }
  return labels;
}

int LabelOracle::Label(std::span<const double> features, uint64_t query_id) {
  queries_.fetch_add(1);
  return DoLabel(features, query_id);
}

std::vector<int> LabelOracle::Labels(const Matrix& points,
                                     std::span<const uint64_t> query_ids) {
  queries_.fetch_add(static_cast<uint64_t>(points.rows()));
  return DoLabels(points, query_ids);
}

std::vector<int> LabelOracle::DoLabels(const Matrix& points,
                                       std::span<const uint64_t> query_ids) {
  std::vector<int> labels(static_cast<size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto row = points.row(i);
    labels[i] = DoLabel(std::span<const double>(row.data(), points.cols()),
                        query_ids[i]);
  }
  return labels;
}

int SmoothedOracle::DoLabel(std::span<const double> features,
                            uint64_t query_id) {
  return classifier_.Predict(features, query_id).label;
}

std::vector<int> SmoothedOracle::DoLabels(const Matrix& points,
                                          std::span<const uint64_t> query_ids) {
  return classifier_.PredictLabels(points, query_ids);
}

}  // namespace ldl
