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


#include "ldl/attacks.h"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>

#include <gtest/gtest.h>

namespace ldl {
namespace {

// Oracle backed by an arbitrary labelling function.
class FunctionOracle : public LabelOracle {
 public:
  FunctionOracle(int dim, std::function<int(std::span<const double>)> f)
      : dim_(dim), f_(std::move(f)) {}
  int input_dim() const override { return dim_; }

 protected:
  int DoLabel(std::span<const double> x, uint64_t) override { return f_(x); }

 private:
  int dim_;
  std::function<int(std::span<const double>)> f_;
};

Sample MakeSample(int64_t id, std::vector<double> x, int label,
                  Membership m = Membership::kMember) {
  return Sample{id, std::move(x), label, m};
}

// Two-class linear model with logit difference w.x + b for class 1.
Model LinearModel(const std::vector<double>& w, double b) {
  const int d = static_cast<int>(w.size());
  ModelSpec spec{{d, 2}, {}, 0};
  Layer l;
  l.weights = Matrix::Zero(2, d);
  for (int j = 0; j < d; ++j) l.weights(1, j) = w[j];
  l.bias = Vector::Zero(2);
  l.bias[1] = b;
  return Model(spec, {l});
}

TEST(QueryStreamTest, EnforcesBudget) {
  FunctionOracle o(1, [](auto) { return 0; });
  QueryStream s(o, 1, 3);
  const std::vector<double> x = {0.0};
  s.Label(x);
  s.Labels(Matrix::Zero(2, 1));
  EXPECT_TRUE(s.exhausted());
  EXPECT_THROW(s.Label(x), Error);
  EXPECT_EQ(o.queries(), 3u);
}

TEST(GapAttackTest, PerfectSeparation) {
  // Labels members correctly, nonmembers wrongly.
  FunctionOracle o(1, [](auto x) { return x[0] > 0.5 ? 1 : 0; });
  std::vector<Sample> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(MakeSample(i, {0.9}, 1));
  for (int i = 5; i < 10; ++i) {
    pool.push_back(MakeSample(i, {0.1}, 1, Membership::kNonmember));
  }
  const auto records = GapAttack(o, pool, AdversaryMode::kStrong, 3);
  const Rates r = ComputeRates(Tally(records));
  EXPECT_EQ(Asr(r.tpr, r.tnr), 1.0);
  EXPECT_EQ(o.queries(), 10u);
  EXPECT_THROW(GapAttack(o, pool, AdversaryMode::kWeak, 3), ArgumentError);
}

TEST(GapAttackTest, EqualAccuracyGivesOneHalf) {
  FunctionOracle o(1, [](auto x) { return x[0] > 0.5 ? 1 : 0; });
  std::vector<Sample> pool;
  for (int i = 0; i < 8; ++i) {
    const Membership m = i < 4 ? Membership::kMember : Membership::kNonmember;
    pool.push_back(MakeSample(i, {i % 2 ? 0.9 : 0.1}, 1, m));
  }
  const Rates r = ComputeRates(Tally(GapAttack(o, pool, AdversaryMode::kStrong, 0)));
  EXPECT_EQ(Asr(r.tpr, r.tnr), 0.5);
}

TEST(ScoreTest, ZeroProbeIsIndicator) {
  FunctionOracle o(2, [](auto x) { return x[0] > 0.5 ? 1 : 0; });
  Rng rng(1);
  QueryStream s(o, 0);
  EXPECT_EQ(ScoreG(s, MakeSample(0, {0.9, 0}, 1), 0.0, 10,
                   AdversaryMode::kStrong, rng),
            1.0);
  EXPECT_EQ(ScoreG(s, MakeSample(1, {0.9, 0}, 0), 0.0, 10,
                   AdversaryMode::kStrong, rng),
            0.0);
  EXPECT_EQ(ScoreG(s, MakeSample(1, {0.9, 0}, 0), 0.0, 10,
                   AdversaryMode::kWeak, rng),
            1.0);
}

TEST(ScoreTest, CountsMatchingVariants) {
  int call = 0;
  FunctionOracle o(1, [&](auto) { return call++ % 10 < 6 ? 2 : 0; });
  Rng rng(1);
  QueryStream s(o, 0);
  EXPECT_DOUBLE_EQ(ScoreG(s, MakeSample(0, {0.5}, 2), 0.1, 1000,
                          AdversaryMode::kStrong, rng),
                   0.6);
}

TEST(ScoreTest, VectorProperties) {
  FunctionOracle o(2, [](auto x) { return x[0] + x[1] > 1.0 ? 1 : 0; });
  Rng rng(2);
  QueryStream s(o, 0);
  const Sample x = MakeSample(0, {0.7, 0.6}, 1);
  const std::vector<double> zeros(10, 0.0);
  EXPECT_EQ(ScoreVector(s, x, zeros, 20, AdversaryMode::kStrong, rng),
            std::vector<double>(10, 1.0));
  for (double v : ScoreVector(s, x, DefaultProbeGrid(), 50,
                              AdversaryMode::kStrong, rng)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const std::vector<double> bad = {0.1, 0.05};
  EXPECT_THROW(ScoreVector(s, x, bad, 5, AdversaryMode::kStrong, rng),
               ArgumentError);
  EXPECT_THROW(ScoreG(s, x, 0.1, 5, AdversaryMode::kStrong, rng,
                      FeatureKind::kDiscrete),
               DomainError);
}

TEST(ScoreTest, DefaultGrid) {
  const auto g = DefaultProbeGrid();
  ASSERT_EQ(g.size(), 10u);
  EXPECT_DOUBLE_EQ(g.front(), 1e-4);
  EXPECT_DOUBLE_EQ(g.back(), 0.5);
  for (size_t i = 1; i < g.size(); ++i) {
    EXPECT_NEAR(g[i] / g[i - 1], std::pow(5000.0, 1.0 / 9), 1e-9);
  }
}

TEST(HsjTest, AlreadyMisclassifiedIsZero) {
  FunctionOracle o(2, [](auto) { return 0; });
  const HsjResult r = MinPerturbationHsj(o, MakeSample(0, {0.5, 0.5}, 1),
                                         AdversaryMode::kStrong, HsjConfig{}, 1);
  EXPECT_EQ(r.magnitude, 0.0);
  EXPECT_FALSE(r.failed);
  EXPECT_EQ(r.queries, 1u);
}

TEST(HsjTest, InitializationFailureIsInfinite) {
  FunctionOracle o(2, [](auto) { return 1; });
  HsjConfig c;
  c.init_trials = 30;
  const HsjResult r = MinPerturbationHsj(o, MakeSample(0, {0.5, 0.5}, 1),
                                         AdversaryMode::kStrong, c, 1);
  EXPECT_TRUE(r.failed);
  EXPECT_TRUE(std::isinf(r.magnitude));
  EXPECT_EQ(r.queries, 31u);
}

TEST(HsjTest, LinearBoundaryDistance) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0, 1);
  std::uniform_real_distribution<double> unit(0.2, 0.8);
  const int d = 10;
  std::vector<double> w(d);
  for (double& v : w) v = gauss(rng);
  const Model m = LinearModel(w, -0.1);
  SmoothedOracle o(SmoothedClassifier::DefenseFree(std::make_shared<Model>(m)));
  int close = 0;
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (double& v : x) v = unit(rng);
    const Sample s = MakeSample(i, x, m.Predict(x));
    const double exact = std::abs(BoundaryDistanceLinear(w, -0.1, x));
    const HsjResult r = MinPerturbationHsj(o, s, AdversaryMode::kStrong,
                                           HsjConfig{}, DeriveSeed(9, i));
    ASSERT_FALSE(r.failed);
    EXPECT_GE(r.magnitude, exact * (1 - 1e-9));
    close += std::abs(r.magnitude - exact) <= 0.1 * exact;
    EXPECT_LE(r.queries, HsjConfig{}.query_budget);
  }
  EXPECT_GE(close, 18);
}

TEST(HsjTest, GradientStepsOnlyImproveBisection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0, 1);
  // Curved boundary: a disc of class 1 centred in the box.
  FunctionOracle o(3, [](auto x) {
    double r2 = 0;
    for (double v : x) r2 += (v - 0.5) * (v - 0.5);
    return r2 < 0.09 ? 1 : 0;
  });
  HsjConfig full;
  full.max_iters = 10;
  full.probes = 40;
  HsjConfig bisect = full;
  bisect.gradient_steps = false;
  int ok = 0;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x = {0.5 + 0.1 * unit(rng), 0.5, 0.5 - 0.1 * unit(rng)};
    const Sample s = MakeSample(i, x, 1);
    const double a = MinPerturbationHsj(o, s, AdversaryMode::kStrong, bisect, i).magnitude;
    const double b = MinPerturbationHsj(o, s, AdversaryMode::kStrong, full, i).magnitude;
    ok += a >= b;
  }
  EXPECT_GE(ok, 18);
}

TEST(HsjTest, WeakModeUsesOracleLabel) {
  FunctionOracle o(1, [](auto x) { return x[0] > 0.3 ? 1 : 0; });
  HsjConfig c;
  c.max_iters = 2;
  // True label disagrees with the oracle; weak mode ignores it.
  const HsjResult r = MinPerturbationHsj(o, MakeSample(0, {0.5}, 0),
                                         AdversaryMode::kWeak, c, 2);
  EXPECT_EQ(r.reference_label, 1);
  EXPECT_NEAR(r.magnitude, 0.2, 2e-3);
}

TEST(HsjTest, RespectsBudget) {
  FunctionOracle o(5, [](auto x) { return x[0] > 0.5 ? 1 : 0; });
  HsjConfig c;
  c.query_budget = 37;
  const HsjResult r = MinPerturbationHsj(o, MakeSample(0, {0.9, 0, 0, 0, 0}, 1),
                                         AdversaryMode::kStrong, c, 3);
  EXPECT_LE(r.queries, 37u);
  EXPECT_EQ(o.queries(), r.queries);
}

TEST(HsjTest, RunIsThreadCountIndependent) {
  FunctionOracle o(2, [](auto x) { return x[0] * x[0] + x[1] > 0.6 ? 1 : 0; });
  std::vector<Sample> pool;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int i = 0; i < 12; ++i) {
    std::vector<double> x = {unit(rng), unit(rng)};
    pool.push_back(MakeSample(i, x, x[0] * x[0] + x[1] > 0.6 ? 1 : 0));
  }
  HsjConfig c;
  c.max_iters = 3;
  const auto a = RunHsj(o, pool, AdversaryMode::kStrong, c, 4, 1);
  const auto b = RunHsj(o, pool, AdversaryMode::kStrong, c, 4, 3);
  for (size_t i = 0; i < pool.size(); ++i) {
    EXPECT_EQ(*a[i].magnitude, *b[i].magnitude);
    EXPECT_EQ(a[i].queries, b[i].queries);
  }
}

TEST(FgsTest, SignStep) {
  // At x = 0 the class-0 loss gradient is (W1 - W0) / 2 = (2, -3).
  ModelSpec spec{{2, 2}, {}, 0};
  Layer l;
  l.weights = Matrix(2, 2);
  l.weights << -2, 3, 2, -3;
  l.bias = Vector::Zero(2);
  const Model m(spec, {l});
  const Sample s = MakeSample(0, {0.0, 0.0}, 0);
  const auto g = InputGradient(m, s.features, 0);
  EXPECT_NEAR(g[0], 2.0, 1e-12);
  EXPECT_NEAR(g[1], -3.0, 1e-12);
  const auto adv = FgsPerturb(m, s, 0.1, AdversaryMode::kStrong);
  EXPECT_DOUBLE_EQ(adv[0], 0.1);
  EXPECT_DOUBLE_EQ(adv[1], -0.1);
  EXPECT_EQ(FgsPerturb(m, s, 0.0, AdversaryMode::kStrong), s.features);
  EXPECT_THROW(FgsPerturb(m, s, -0.1, AdversaryMode::kStrong), ArgumentError);
}

TEST(LearnThresholdTest, Examples) {
  ThresholdRule r = LearnThreshold(std::vector<double>{0.8, 0.9},
                                   std::vector<double>{0.1, 0.2});
  EXPECT_DOUBLE_EQ(r.tau, 0.5);
  EXPECT_EQ(r.asr, 1.0);
  r = LearnThreshold(std::vector<double>{1.0}, std::vector<double>{1.0});
  EXPECT_EQ(r.asr, 0.5);
  EXPECT_EQ(r.tau, -std::numeric_limits<double>::infinity());
  EXPECT_THROW(LearnThreshold({}, std::vector<double>{1.0}), ArgumentError);
  EXPECT_THROW(LearnThreshold(std::vector<double>{INFINITY},
                              std::vector<double>{1.0}),
               ArgumentError);
}

TEST(LearnThresholdTest, IdenticalDistributions) {
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.push_back(i * 0.1);
  const ThresholdRule r = LearnThreshold(v, v);
  EXPECT_LE(r.asr, 0.5 + 1.0 / 50);
}

// No real tau beats the returned rule: compare with a dense sweep.
TEST(LearnThresholdTest, OptimalAgainstDenseSweep) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> mem, non;
    const int nm = 1 + trial % 13, nn = 1 + trial % 7;
    for (int i = 0; i < nm; ++i) mem.push_back(std::round(gauss(rng) * 4 + 1) / 4);
    for (int i = 0; i < nn; ++i) non.push_back(std::round(gauss(rng) * 4) / 4);
    const ThresholdRule r = LearnThreshold(mem, non);
    auto asr_at = [&](double tau) {
      double tp = 0, tn = 0;
      for (double m : mem) tp += m > tau;
      for (double m : non) tn += m <= tau;
      return (tp / nm + tn / nn) / 2;
    };
    EXPECT_DOUBLE_EQ(asr_at(r.tau), r.asr);
    for (double tau = -10; tau <= 10; tau += 0.01) {
      EXPECT_LE(asr_at(tau), r.asr + 1e-12) << "trial " << trial;
    }
  }
}

std::vector<AttackRecord> Records(const std::vector<double>& mem,
                                  const std::vector<double>& non) {
  std::vector<AttackRecord> out;
  int64_t id = 0;
  for (double m : mem) {
    AttackRecord r;
    r.sample_id = id++;
    r.truth = Membership::kMember;
    r.magnitude = m;
    r.failed = std::isinf(m);
    out.push_back(r);
  }
  for (double m : non) {
    AttackRecord r;
    r.sample_id = id++;
    r.truth = Membership::kNonmember;
    r.magnitude = m;
    r.failed = std::isinf(m);
    out.push_back(r);
  }
  return out;
}

TEST(ThresholdAttackTest, InSample) {
  const auto result = ThresholdAttack(Records({0.8, 0.9, INFINITY}, {0.1, 0.2}));
  EXPECT_EQ(result.failures, 1);
  EXPECT_EQ(result.asr, 1.0);
  ASSERT_EQ(result.rules.size(), 1u);
  EXPECT_DOUBLE_EQ(result.rules[0].tau, 0.5);
  EXPECT_EQ(*result.records[2].verdict, Verdict::kMember);
}

TEST(ThresholdAttackTest, CrossFitUsesOtherFolds) {
  // Fold 0: members {1, 3}, nonmembers {0}; fold 1: members {2}, nonmembers {4}.
  const auto result = ThresholdAttack(Records({1, 2, 3}, {0, 4}), 2);
  ASSERT_EQ(result.rules.size(), 2u);
  // Fold 0 learned on {2} vs {4}: nothing beats tau = -inf.
  EXPECT_EQ(result.rules[0].tau, -std::numeric_limits<double>::infinity());
  // Fold 1 learned on {1, 3} vs {0}: tau = 0.5.
  EXPECT_DOUBLE_EQ(result.rules[1].tau, 0.5);
  const ConfusionStats s = result.stats;
  EXPECT_EQ(s.tp, 3);
  EXPECT_EQ(s.fp, 2);
}

TEST(ThresholdAttackTest, RejectsMissingMagnitude) {
  std::vector<AttackRecord> r(2);
  r[1].truth = Membership::kMember;
  EXPECT_THROW(ThresholdAttack(r), ArgumentError);
}

TEST(SubstituteTest, ExactCopyMatchesDirectAttack) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0, 1);
  auto model = std::make_shared<const Model>(
      Model::Initialize({{3, 12, 3}, {Activation::kTanh}, 4}));
  std::vector<Sample> pool;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> x = {unit(rng), unit(rng), unit(rng)};
    const Membership m = i < 15 ? Membership::kMember : Membership::kNonmember;
    pool.push_back(MakeSample(i, x, i % 3, m));
  }
  HsjConfig c;
  c.max_iters = 3;
  c.probes = 20;
  SmoothedOracle target(SmoothedClassifier::DefenseFree(model));
  const SubstituteResult sub = SubstituteAttackWithModel(
      target, *model, pool, pool, AdversaryMode::kStrong, c, 77, 77);
  const ThresholdAttackResult direct =
      ThresholdAttack(RunHsj(target, pool, AdversaryMode::kStrong, c, 77));
  EXPECT_EQ(sub.target.asr, direct.asr);
  EXPECT_EQ(sub.rule.tau, direct.rules[0].tau);
  EXPECT_EQ(sub.substitute_asr, direct.asr);
}

TEST(SubstituteTest, Preconditions) {
  auto model = std::make_shared<const Model>(
      Model::Initialize({{2, 2}, {}, 4}));
  SmoothedOracle target(SmoothedClassifier::DefenseFree(model));
  Dataset adversary;
  adversary.dim = 2;
  adversary.num_classes = 2;
  for (int i = 0; i < 6; ++i) adversary.samples.push_back(MakeSample(i, {0.1, 0.2}, 0));
  const std::vector<Sample> targets = {MakeSample(3, {0.5, 0.5}, 1)};
  SubstituteConfig cfg;
  cfg.member_count = 2;
  cfg.nonmember_count = 2;
  EXPECT_THROW(SubstituteAttack(target, adversary, targets, model->spec(), cfg,
                                AdversaryMode::kStrong, 1),
               ArgumentError);
  EXPECT_THROW(SubstituteAttack(target, adversary, {}, model->spec(), cfg,
                                AdversaryMode::kWeak, 1),
               ArgumentError);
}

}  // namespace
}  // namespace ldl
