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

// Label-only membership inference.
//
// Every attack here talks to the target through LabelOracle, except the FGS
// probe (white-box by construction) and substitute training (which only
// touches the adversary's own data). Each sample gets its own query stream
// and RNG derived from (seed, sample id), so results do not depend on the
// order or parallelism in which samples are attacked.

#ifndef LDL_ATTACKS_H_
#define LDL_ATTACKS_H_

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldl/common.h"
#include "ldl/dataset.h"
#include "ldl/defense.h"
#include "ldl/metrics.h"
#include "ldl/model.h"

namespace ldl {

// Strong adversaries know each sample's true label; weak adversaries use the
// oracle's label on the clean input instead.
enum class AdversaryMode { kStrong, kWeak };

std::string AdversaryModeName(AdversaryMode mode);
AdversaryMode ParseAdversaryMode(const std::string& name);

enum class Verdict { kMember, kNonmember };

struct AttackRecord {
  int64_t sample_id = 0;
  Membership truth = Membership::kNonmember;  // for scoring only
  int reference_label = 0;
  std::optional<double> magnitude;
  std::optional<std::vector<double>> scores;
  std::optional<Verdict> verdict;
  uint64_t queries = 0;
  // Boundary search found no misclassified starting point; magnitude is +inf.
  bool failed = false;
};

// Per-sample view of an oracle: hands out query ids derived from a seed and
// enforces a query budget.
class QueryStream {
 public:
  QueryStream(LabelOracle& oracle, uint64_t seed,
              uint64_t budget = std::numeric_limits<uint64_t>::max());

  int Label(std::span<const double> features);
  int Label(const Vector& features);
  std::vector<int> Labels(const Matrix& points);

  uint64_t used() const { return used_; }
  uint64_t remaining() const { return budget_ - used_; }
  bool exhausted() const { return used_ >= budget_; }

 private:
  LabelOracle& oracle_;
  uint64_t seed_;
  uint64_t budget_;
  uint64_t used_ = 0;
};

// Label the adversary compares against: the true label when strong, one
// oracle query on the clean input when weak.
int ReferenceLabel(QueryStream& stream, const Sample& sample,
                   AdversaryMode mode);

// Member iff the oracle labels the sample correctly. Weak mode is rejected.
std::vector<AttackRecord> GapAttack(LabelOracle& oracle,
                                    std::span<const Sample> samples,
                                    AdversaryMode mode, uint64_t seed);

// Fraction of k_probe noisy variants of the sample that the oracle labels as
// `reference_label`.
double ProbeScore(QueryStream& stream, const Sample& sample,
                  const NoiseSpec& probe, int k_probe, int reference_label,
                  FeatureKind kind, Rng& rng);

// ProbeScore with Gaussian(sigma2_probe) noise. DomainError on discrete data.
double ScoreG(QueryStream& stream, const Sample& sample, double sigma2_probe,
              int k_probe, AdversaryMode mode, Rng& rng,
              FeatureKind kind = FeatureKind::kContinuous);

// ScoreG over a nondecreasing grid of probe variances. In weak mode the
// reference label is queried once and shared by the whole grid.
std::vector<double> ScoreVector(QueryStream& stream, const Sample& sample,
                                std::span<const double> probe_grid,
                                int k_probe, AdversaryMode mode, Rng& rng,
                                FeatureKind kind = FeatureKind::kContinuous);

// 10 log-spaced probe variances from 1e-4 to 0.5.
std::vector<double> DefaultProbeGrid();

struct HsjConfig {
  int init_trials = 200;
  double tolerance = 1e-3;  // bisection stop, in feature units
  int probes = 100;         // gradient probes at iteration 1, grows as sqrt(t)
  int max_iters = 30;
  uint64_t query_budget = 25000;
  double box_lo = 0.0;  // box sampled for the starting point
  double box_hi = 1.0;
  bool gradient_steps = true;  // false: initialization + bisection only

  void Validate() const;
};

struct HsjResult {
  double magnitude = 0.0;  // +inf when initialization failed
  int reference_label = 0;
  uint64_t queries = 0;
  int iterations = 0;
  bool failed = false;
};

// Decision-based estimate of the smallest L2 perturbation that changes the
// oracle's label away from the reference: random misclassified start,
// bisection to the boundary, then repeated Monte Carlo gradient-direction
// estimates, geometric step search and re-projection. Returns 0 when the
// clean sample is already labelled differently from the reference.
HsjResult MinPerturbationHsj(LabelOracle& oracle, const Sample& sample,
                             AdversaryMode mode, const HsjConfig& config,
                             uint64_t seed);

// x + epsilon * sign(grad_x loss(f(x), y)), sign(0) = 0. y is the true label
// when strong, the model's prediction when weak.
std::vector<double> FgsPerturb(const Model& model, const Sample& sample,
                               double epsilon, AdversaryMode mode);

// "member iff magnitude > tau".
struct ThresholdRule {
  double tau = -std::numeric_limits<double>::infinity();
  double asr = 0.5;  // (TPR + TNR) / 2 on the data it was learned from
};

// Exhaustive search over -inf, midpoints of consecutive distinct magnitudes,
// and +inf; maximizes (TPR + TNR) / 2 and breaks ties toward the smallest tau.
ThresholdRule LearnThreshold(std::span<const double> member_magnitudes,
                             std::span<const double> nonmember_magnitudes);

Verdict ApplyThreshold(const ThresholdRule& rule, double magnitude);

ConfusionStats Tally(std::span<const AttackRecord> records);

// Runs MinPerturbationHsj on every sample; verdicts left unset.
std::vector<AttackRecord> RunHsj(LabelOracle& oracle,
                                 std::span<const Sample> samples,
                                 AdversaryMode mode, const HsjConfig& config,
                                 uint64_t seed, int threads = 1);

struct ScoreConfig {
  std::vector<double> probe_grid = DefaultProbeGrid();
  int k_probe = 100;
  // Gaussian probes read the grid as variances; bernoulli_flip probes (for
  // binary features) read it as flip probabilities.
  NoiseKind probe = NoiseKind::kGaussian;
};

// Score vectors for every sample; magnitude is the mean of the vector, so a
// sample that stays correctly labelled under more noise scores higher.
std::vector<AttackRecord> RunScoreVectors(
    LabelOracle& oracle, std::span<const Sample> samples,
    const ScoreConfig& config, AdversaryMode mode, uint64_t seed,
    int threads = 1, FeatureKind kind = FeatureKind::kContinuous);

struct ThresholdAttackResult {
  std::vector<AttackRecord> records;  // with verdicts
  std::vector<ThresholdRule> rules;   // one per fold
  ConfusionStats stats;
  double asr = 0.5;
  int failures = 0;  // records excluded from threshold learning
};

// Learns "member iff magnitude > tau" from the records' known membership and
// assigns verdicts. folds == 1 learns and applies on all records. folds >= 2
// partitions each membership class by position and labels every fold with a
// threshold learned on the other folds. Failed records always count as
// members.
ThresholdAttackResult ThresholdAttack(std::vector<AttackRecord> records,
                                      int folds = 1);

struct SubstituteResult {
  ThresholdRule rule;
  std::vector<AttackRecord> calibration_records;  // against the substitute
  ThresholdAttackResult target;                   // against the target
  double substitute_asr = 0.5;  // ASR of rule on the calibration records
};

// Calibrates tau on a substitute model the adversary controls, then applies it
// to boundary distances measured against the target oracle.
SubstituteResult SubstituteAttackWithModel(
    LabelOracle& target, const Model& substitute,
    std::span<const Sample> calibration, std::span<const Sample> targets,
    AdversaryMode mode, const HsjConfig& config, uint64_t calibration_seed,
    uint64_t target_seed, int threads = 1);

struct SubstituteConfig {
  int member_count = 200;     // substitute training set
  int nonmember_count = 200;  // substitute held-out set
  TrainConfig train;
  HsjConfig hsj;
};

// Splits the adversary's data into substitute members / nonmembers, trains a
// substitute with the target's architecture, and runs
// SubstituteAttackWithModel. Requires strong mode and adversary data disjoint
// from the target's members.
SubstituteResult SubstituteAttack(LabelOracle& target,
                                  const Dataset& adversary_data,
                                  std::span<const Sample> targets,
                                  const ModelSpec& spec,
                                  const SubstituteConfig& config,
                                  AdversaryMode mode, uint64_t seed,
                                  int threads = 1);

}  // namespace ldl

#endif  // LDL_ATTACKS_H_
