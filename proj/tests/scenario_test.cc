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

// Measured properties of the standard overfitting scenario.

#include "scenario.h"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ldl/attacks.h"
#include "ldl/defense.h"
#include "ldl/metrics.h"

namespace ldl::testing {
namespace {

int CountCorrect(LabelOracle& oracle, const std::vector<Sample>& samples,
                 uint64_t seed) {
  QueryStream stream(oracle, seed);
  int correct = 0;
  for (const Sample& s : samples) correct += stream.Label(s.features) == s.label;
  return correct;
}

TEST(ScenarioTest, Overfits) {
  const Scenario& s = StandardScenario();
  EXPECT_GE(s.acc_member, 0.99);
  EXPECT_LE(s.acc_nonmember, 0.75);
  ASSERT_TRUE(s.model->train_accuracy().has_value());
  EXPECT_GT(*s.model->train_accuracy() - s.acc_nonmember, 0.0);
}

TEST(ScenarioTest, SmoothingCostsMembersMoreThanNonmembers) {
  const Scenario& s = StandardScenario();
  SmoothedOracle o(
      SmoothedClassifier(s.model, NoiseSpec::Gaussian(0.02), 1000, 21));
  const double mem = CountCorrect(o, s.split.members.samples, 1) / 200.0;
  const double non = CountCorrect(o, s.split.nonmembers.samples, 2) / 200.0;
  EXPECT_LT(mem, s.acc_member);
  EXPECT_GT(mem, non);
}

TEST(ScenarioTest, LabelInvariantUnderSmallShifts) {
  const Scenario& s = StandardScenario();
  const double sigma2 = 0.02;
  const SmoothedClassifier g(s.model, NoiseSpec::Gaussian(sigma2), 1000, 22);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0, 1);
  std::uniform_real_distribution<double> unit(0, 1);
  const std::vector<Sample> pool = s.Pool();
  int same = 0;
  uint64_t q = 0;
  for (const Sample& x : pool) {
    std::vector<double> dir(x.features.size());
    double norm = 0;
    for (double& v : dir) {
      v = gauss(rng);
      norm += v * v;
    }
    const double radius = 0.25 * std::sqrt(sigma2) * unit(rng);
    std::vector<double> shifted = x.features;
    for (size_t j = 0; j < dir.size(); ++j) {
      shifted[j] += radius * dir[j] / std::sqrt(norm);
    }
    same += g.Predict(x.features, q).label == g.Predict(shifted, q + 1).label;
    q += 2;
  }
  EXPECT_GE(same, 0.95 * pool.size());
}

TEST(ScenarioTest, EnsembleSizeHasConverged) {
  const Scenario& s = StandardScenario();
  const SmoothedClassifier a(s.model, NoiseSpec::Gaussian(0.02), 1000, 23);
  const SmoothedClassifier b(s.model, NoiseSpec::Gaussian(0.02), 4000, 24);
  const std::vector<Sample> pool = s.Pool();
  int agree = 0;
  for (size_t i = 0; i < pool.size(); ++i) {
    agree += a.Predict(pool[i].features, i).label ==
             b.Predict(pool[i].features, i).label;
  }
  EXPECT_GE(agree, 0.99 * pool.size());
}

TEST(ScenarioTest, FgsMisclassificationGrowsWithEpsilon) {
  const Scenario& s = StandardScenario();
  const std::vector<Sample> pool = s.Pool();
  double last = -1;
  for (double eps : {0.0, 0.01, 0.02, 0.05, 0.1}) {
    int wrong = 0;
    for (const Sample& x : pool) {
      wrong += s.model->Predict(
                   FgsPerturb(*s.model, x, eps, AdversaryMode::kStrong)) !=
               x.label;
    }
    const double rate = static_cast<double>(wrong) / pool.size();
    EXPECT_GE(rate, last) << "eps " << eps;
    last = rate;
  }
}

TEST(ScenarioTest, MemberScoresDominateAtSmallProbeNoise) {
  const Scenario& s = StandardScenario();
  SmoothedOracle o(SmoothedClassifier::DefenseFree(s.model));
  ScoreConfig config;
  const std::vector<AttackRecord> records = RunScoreVectors(
      o, s.Pool(), config, AdversaryMode::kStrong, 25);
  const size_t n = config.probe_grid.size();
  std::vector<double> mem(n, 0), non(n, 0);
  for (const AttackRecord& r : records) {
    std::vector<double>& acc = r.truth == Membership::kMember ? mem : non;
    for (size_t j = 0; j < n; ++j) acc[j] += (*r.scores)[j] / 200.0;
  }
  for (size_t j = 0; j < n; ++j) {
    if (config.probe_grid[j] > 0.03) break;
    EXPECT_GT(mem[j], non[j]) << "sigma'^2 " << config.probe_grid[j];
  }
}

TEST(ScenarioTest, BisectionOnlyNeverBeatsFullSearch) {
  const Scenario& s = StandardScenario();
  SmoothedOracle o(SmoothedClassifier::DefenseFree(s.model));
  HsjConfig full;
  full.max_iters = 10;
  HsjConfig bisect = full;
  bisect.gradient_steps = false;
  const std::vector<Sample> pool = s.Pool();
  int ok = 0, n = 0;
  for (size_t i = 0; i < pool.size(); i += 8, ++n) {
    const double a =
        MinPerturbationHsj(o, pool[i], AdversaryMode::kStrong, bisect, i)
            .magnitude;
    const double b =
        MinPerturbationHsj(o, pool[i], AdversaryMode::kStrong, full, i)
            .magnitude;
    ok += a >= b;
  }
  EXPECT_GE(ok, 0.9 * n);
}

}  // namespace
}  // namespace ldl::testing
