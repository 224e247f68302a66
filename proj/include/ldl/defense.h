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

// Inference-time randomized smoothing.
//
// A SmoothedClassifier answers a query x by drawing k noisy copies of x,
// running the base model on each, averaging the k logit vectors and taking the
// softmax of the average. The noise for a query is a pure function of
// (classifier seed, query id), so answers do not depend on evaluation order.

#ifndef LDL_DEFENSE_H_
#define LDL_DEFENSE_H_

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ldl/common.h"
#include "ldl/dataset.h"
#include "ldl/model.h"

namespace ldl {

enum class NoiseKind { kGaussian, kBernoulliFlip };

std::string NoiseKindName(NoiseKind kind);
NoiseKind ParseNoiseKind(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kGaussian;
  double sigma2 = 0.0;  // variance; gaussian only
  double p = 0.0;       // flip probability; bernoulli_flip only

  static NoiseSpec Gaussian(double sigma2) {
    return {NoiseKind::kGaussian, sigma2, 0.0};
  }
  static NoiseSpec BernoulliFlip(double p) {
    return {NoiseKind::kBernoulliFlip, 0.0, p};
  }

  void Validate() const;
  // True when every perturbed copy equals its input.
  bool IsIdentity() const;
};

// Gaussian: x + N(0, sigma2 I), no clipping. Bernoulli flip: each bit is
// replaced by 1 - bit with probability p. Gaussian noise on discrete
// features and flips on continuous features are DomainErrors.
std::vector<double> Perturb(std::span<const double> features, FeatureKind kind,
                            const NoiseSpec& noise, Rng& rng);

// Writes `copies` perturbed variants of x into consecutive rows of `out`
// starting at `row`.
void PerturbInto(std::span<const double> features, FeatureKind kind,
                 const NoiseSpec& noise, Rng& rng, Matrix& out,
                 Eigen::Index row, Eigen::Index copies);

struct SmoothedPrediction {
  int label = 0;
  std::vector<double> confidences;
};

class SmoothedClassifier {
 public:
  SmoothedClassifier(std::shared_ptr<const Model> base, NoiseSpec noise, int k,
                     uint64_t seed, FeatureKind kind = FeatureKind::kContinuous);

  // Defense-free wrapper: identity noise, k = 1.
  static SmoothedClassifier DefenseFree(std::shared_ptr<const Model> base,
                                        FeatureKind kind =
                                            FeatureKind::kContinuous);

  SmoothedPrediction Predict(std::span<const double> features,
                             uint64_t query_id) const;

  // Labels for each row of `points`, row i answered as query ids[i].
  std::vector<int> PredictLabels(const Matrix& points,
                                 std::span<const uint64_t> query_ids) const;

  const Model& base() const { return *base_; }
  const NoiseSpec& noise() const { return noise_; }
  int k() const { return k_; }
  uint64_t seed() const { return seed_; }
  FeatureKind kind() const { return kind_; }
  int input_dim() const { return base_->input_dim(); }

 private:
  Vector AveragedLogits(std::span<const double> features,
                        uint64_t query_id) const;

  std::shared_ptr<const Model> base_;
  NoiseSpec noise_;
  int k_;
  uint64_t seed_;
  FeatureKind kind_;
};

// The only surface label-only attacks see. Every call is one query.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;

  int Label(std::span<const double> features, uint64_t query_id);
  std::vector<int> Labels(const Matrix& points,
                          std::span<const uint64_t> query_ids);

  virtual int input_dim() const = 0;
  uint64_t queries() const { return queries_.load(); }
  void ResetQueries() { queries_.store(0); }

 protected:
  virtual int DoLabel(std::span<const double> features, uint64_t query_id) = 0;
  // Default answers row by row.
  virtual std::vector<int> DoLabels(const Matrix& points,
                                    std::span<const uint64_t> query_ids);

 private:
  std::atomic<uint64_t> queries_{0};
};

class SmoothedOracle : public LabelOracle {
 public:
  explicit SmoothedOracle(SmoothedClassifier classifier)
      : classifier_(std::move(classifier)) {}

  const SmoothedClassifier& classifier() const { return classifier_; }
  int input_dim() const override { return classifier_.input_dim(); }

 protected:
  int DoLabel(std::span<const double> features, uint64_t query_id) override;
  std::vector<int> DoLabels(const Matrix& points,
                            std::span<const uint64_t> query_ids) override;

 private:
  SmoothedClassifier classifier_;
};

}  // namespace ldl

#endif  // LDL_DEFENSE_H_
