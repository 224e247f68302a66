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

#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

namespace ldl {
namespace {

std::shared_ptr<const Model> SmallModel(uint64_t seed) {
  return std::make_shared<const Model>(
      Model::Initialize({{4, 16, 3}, {Activation::kTanh}, seed}));
}

TEST(PerturbTest, GaussianMoments) {
  Rng rng(1);
  const std::vector<double> x = {0.2, 0.9};
  const NoiseSpec n = NoiseSpec::Gaussian(0.04);
  double sum = 0, sq = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const auto p = Perturb(x, FeatureKind::kContinuous, n, rng);
    sum += p[0] - x[0];
    sq += (p[0] - x[0]) * (p[0] - x[0]);
  }
  EXPECT_NEAR(sum / trials, 0.0, 0.005);
  EXPECT_NEAR(sq / trials, 0.04, 0.002);
}

TEST(PerturbTest, GaussianIsNotClipped) {
  Rng rng(2);
  const std::vector<double> x = {0.0};
  bool below = false;
  for (int t = 0; t < 100 && !below; ++t) {
    below = Perturb(x, FeatureKind::kContinuous, NoiseSpec::Gaussian(0.1), rng)[0] < 0;
  }
  EXPECT_TRUE(below);
}

TEST(PerturbTest, BernoulliFlipRate) {
  Rng rng(3);
  const std::vector<double> x(50, 1.0);
  int flipped = 0;
  for (int t = 0; t < 400; ++t) {
    for (double v : Perturb(x, FeatureKind::kDiscrete,
                            NoiseSpec::BernoulliFlip(0.2), rng)) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      flipped += v == 0.0;
    }
  }
  EXPECT_NEAR(flipped / 20000.0, 0.2, 0.01);
  EXPECT_EQ(Perturb(x, FeatureKind::kDiscrete, NoiseSpec::BernoulliFlip(1.0), rng),
            std::vector<double>(50, 0.0));
}

TEST(PerturbTest, KindMismatchAndInvalidNoise) {
  Rng rng(4);
  const std::vector<double> x = {0.0, 1.0};
  EXPECT_THROW(Perturb(x, FeatureKind::kDiscrete, NoiseSpec::Gaussian(0.1), rng),
               DomainError);
  EXPECT_THROW(
      Perturb(x, FeatureKind::kContinuous, NoiseSpec::BernoulliFlip(0.1), rng),
      DomainError);
  EXPECT_THROW(Perturb(std::vector<double>{0.5}, FeatureKind::kDiscrete,
                       NoiseSpec::BernoulliFlip(0.1), rng),
               DomainError);
  EXPECT_THROW(NoiseSpec::Gaussian(-1).Validate(), ArgumentError);
  EXPECT_THROW(NoiseSpec::BernoulliFlip(1.5).Validate(), ArgumentError);
}

TEST(SmoothedClassifierTest, ZeroNoiseIsBaseModel) {
  const auto m = SmallModel(5);
  const SmoothedClassifier g(m, NoiseSpec::Gaussian(0.0), 50, 9);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss(0, 1);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = gauss(rng);
    const SmoothedPrediction p = g.Predict(x, i);
    EXPECT_EQ(p.label, m->Predict(x));
    const Vector z = m->Logits(x);
    const auto expect = Softmax(std::span<const double>(z.data(), z.size()));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.confidences[c], expect[c], 1e-15);
  }
}

TEST(SmoothedClassifierTest, AveragesLogitsThenSoftmax) {
  const auto m = SmallModel(7);
  const NoiseSpec noise = NoiseSpec::Gaussian(0.3);
  const int k = 25;
  const uint64_t seed = 11, query = 42;
  const SmoothedClassifier g(m, noise, k, seed);
  const std::vector<double> x = {0.1, -0.4, 0.3, 0.8};
  // Replay the documented noise stream.
  Rng rng(DeriveSeed(seed, query));
  Matrix variants(k, 4);
  PerturbInto(x, FeatureKind::kContinuous, noise, rng, variants, 0, k);
  Vector avg = Vector::Zero(3);
  for (int i = 0; i < k; ++i) {
    const auto row = variants.row(i);
    avg += m->Logits(std::span<const double>(row.data(), 4));
  }
  avg /= k;
  const SmoothedPrediction p = g.Predict(x, query);
  EXPECT_EQ(p.label, Argmax(avg));
  const auto expect = Softmax(std::span<const double>(avg.data(), 3));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.confidences[c], expect[c], 1e-12);
}

TEST(SmoothedClassifierTest, DeterministicPerQueryAndBatchConsistent) {
  const auto m = SmallModel(8);
  const SmoothedClassifier g(m, NoiseSpec::Gaussian(0.5), 30, 3);
  Matrix points = Matrix::Random(40, 4);
  std::vector<uint64_t> ids(40);
  for (int i = 0; i < 40; ++i) ids[i] = 1000 + i;
  const auto labels = g.PredictLabels(points, ids);
  for (int i = 0; i < 40; ++i) {
    const auto row = points.row(i);
    const std::span<const double> x(row.data(), 4);
    EXPECT_EQ(g.Predict(x, ids[i]).label, labels[i]);
    EXPECT_EQ(g.Predict(x, ids[i]).label, g.Predict(x, ids[i]).label);
  }
}

TEST(SmoothedClassifierTest, InvalidArguments) {
  EXPECT_THROW(SmoothedClassifier(nullptr, NoiseSpec::Gaussian(0.1), 5, 0),
               ArgumentError);
  EXPECT_THROW(SmoothedClassifier(SmallModel(1), NoiseSpec::Gaussian(0.1), 0, 0),
               ArgumentError);
  const SmoothedClassifier g(SmallModel(1), NoiseSpec::Gaussian(0.1), 5, 0);
  EXPECT_THROW(g.Predict(std::vector<double>{1.0}, 0), ArgumentError);
}

TEST(LabelOracleTest, CountsEveryQuery) {
  SmoothedOracle oracle(SmoothedClassifier::DefenseFree(SmallModel(2)));
  const std::vector<double> x = {0.0, 0.1, 0.2, 0.3};
  oracle.Label(x, 0);
  oracle.Label(x, 1);
  const std::vector<uint64_t> ids = {5, 6, 7};
  oracle.Labels(Matrix::Random(3, 4), ids);
  EXPECT_EQ(oracle.queries(), 5u);
  oracle.ResetQueries();
  EXPECT_EQ(oracle.queries(), 0u);
}

TEST(LabelOracleTest, ConcurrentCounting) {
  SmoothedOracle oracle(SmoothedClassifier::DefenseFree(SmallModel(3)));
  const std::vector<double> x = {0.0, 0.1, 0.2, 0.3};
  ParallelFor(4000, 4, [&](int64_t i) {
    oracle.Label(x, static_cast<uint64_t>(i));
  });
  EXPECT_EQ(oracle.queries(), 4000u);
}

TEST(LabelOracleTest, DiscreteDefenseFree) {
  const auto m = SmallModel(4);
  SmoothedOracle oracle(SmoothedClassifier::DefenseFree(m, FeatureKind::kDiscrete));
  const std::vector<double> x = {0, 1, 1, 0};
  EXPECT_EQ(oracle.Label(x, 0), m->Predict(x));
  const SmoothedClassifier g(m, NoiseSpec::BernoulliFlip(0.1), 20, 1,
                             FeatureKind::kDiscrete);
  EXPECT_NO_THROW(g.Predict(x, 3));
}

}  // namespace
}  // namespace ldl
