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

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_set>
#include <utility>

namespace ldl {

std::string AdversaryModeName(AdversaryMode mode) {
  return mode == AdversaryMode::kStrong ? "strong" : "weak";
}

AdversaryMode ParseAdversaryMode(const std::string& name) {
  if (name == "strong") return AdversaryMode::kStrong;
  if (name == "weak") return AdversaryMode::kWeak;
  throw ArgumentError("unknown adversary mode '" + name + "'");
}

QueryStream::QueryStream(LabelOracle& oracle, uint64_t seed, uint64_t budget)
    : oracle_(oracle), seed_(seed), budget_(budget) {}

int QueryStream::Label(std::span<const double> features) {
  if (exhausted()) throw Error("query budget exhausted");
  return oracle_.Label(features, DeriveSeed(seed_, used_++));
}

int QueryStream::Label(const Vector& features) {
  return Label(std::span<const double>(features.data(), features.size()));
}

std::vector<int> QueryStream::Labels(const Matrix& points) {
  const uint64_t n = static_cast<uint64_t>(points.rows());
  if (n > remaining()) throw Error("query budget exhausted");
  std::vector<uint64_t> ids(n);
  for (uint64_t i = 0; i < n; ++i) ids[i] = DeriveSeed(seed_, used_++);
  return oracle_.Labels(points, ids);
}

int ReferenceLabel(QueryStream& stream, const Sample& sample,
                   AdversaryMode mode) {
  if (mode == AdversaryMode::kStrong) return sample.label;
  return stream.Label(sample.features);
}

std::vector<AttackRecord> GapAttack(LabelOracle& oracle,
                                    std::span<const Sample> samples,
                                    AdversaryMode mode, uint64_t seed) {
  if (mode != AdversaryMode::kStrong) {
    throw ArgumentError(
        "gap attack needs true labels; a weak adversary would call every "
        "sample a member");
  }
  std::vector<AttackRecord> records;
  records.reserve(samples.size());
  for (const Sample& s : samples) {
    QueryStream stream(oracle, DeriveSeed(seed, static_cast<uint64_t>(s.id)));
    AttackRecord r;
    r.sample_id = s.id;
    r.truth = s.membership;
    r.reference_label = s.label;
    r.verdict = stream.Label(s.features) == s.label ? Verdict::kMember
                                                    : Verdict::kNonmember;
    r.queries = stream.used();
    records.push_back(std::move(r));
  }
  return records;
}

double ProbeScore(QueryStream& stream, const Sample& sample,
                  const NoiseSpec& probe, int k_probe, int reference_label,
                  FeatureKind kind, Rng& rng) {
  if (k_probe < 1) throw ArgumentError("probe score needs k_probe >= 1");
  const Eigen::Index d = static_cast<Eigen::Index>(sample.features.size());
  Matrix variants(k_probe, d);
  PerturbInto(sample.features, kind, probe, rng, variants, 0, k_probe);
  const std::vector<int> labels = stream.Labels(variants);
  const auto hits = std::count(labels.begin(), labels.end(), reference_label);
  return static_cast<double>(hits) / static_cast<double>(k_probe);
}

double ScoreG(QueryStream& stream, const Sample& sample, double sigma2_probe,
              int k_probe, AdversaryMode mode, Rng& rng, FeatureKind kind) {
  if (kind != FeatureKind::kContinuous) {
    throw DomainError(
        "score_g uses Gaussian probes; discrete data needs a bernoulli_flip "
        "probe");
  }
  if (k_probe < 1) throw ArgumentError("score_g needs k_probe >= 1");
  const int reference = ReferenceLabel(stream, sample, mode);
  return ProbeScore(stream, sample, NoiseSpec::Gaussian(sigma2_probe), k_probe,
                    reference, kind, rng);
}

std::vector<double> ScoreVector(QueryStream& stream, const Sample& sample,
                                std::span<const double> probe_grid,
                                int k_probe, AdversaryMode mode, Rng& rng,
                                FeatureKind kind) {
  if (probe_grid.empty()) throw ArgumentError("score_vector: empty grid");
  for (size_t i = 0; i < probe_grid.size(); ++i) {
    if (!(probe_grid[i] >= 0.0)) {
      throw ArgumentError("score_vector: probe variances must be >= 0");
    }
    if (i > 0 && probe_grid[i] < probe_grid[i - 1]) {
      throw ArgumentError("score_vector: probe grid must be ascending");
    }
  }
  if (kind != FeatureKind::kContinuous) {
    throw DomainError("score_vector uses Gaussian probes on continuous data");
  }
  if (k_probe < 1) throw ArgumentError("score_vector needs k_probe >= 1");
  const int reference = ReferenceLabel(stream, sample, mode);
  std::vector<double> scores;
  scores.reserve(probe_grid.size());
  for (double s2 : probe_grid) {
    scores.push_back(ProbeScore(stream, sample, NoiseSpec::Gaussian(s2),
                                k_probe, reference, kind, rng));
  }
  return scores;
}

std::vector<double> DefaultProbeGrid() {
  std::vector<double> grid(10);
  const double lo = std::log(1e-4);
  const double hi = std::log(0.5);
  for (int i = 0; i < 10; ++i) grid[i] = std::exp(lo + (hi - lo) * i / 9.0);
  grid.front() = 1e-4;
  grid.back() = 0.5;
  return grid;
}

void HsjConfig::Validate() const {
  if (init_trials < 1) throw ArgumentError("hsj: init_trials must be >= 1");
  if (!(tolerance > 0.0)) throw ArgumentError("hsj: tolerance must be > 0");
  if (probes < 2) throw ArgumentError("hsj: probes must be >= 2");
  if (max_iters < 0) throw ArgumentError("hsj: max_iters must be >= 0");
  if (query_budget < 2) throw ArgumentError("hsj: query budget must be >= 2");
  if (!(box_hi > box_lo)) throw ArgumentError("hsj: empty sampling box");
}

namespace {

class BoundarySearch {
 public:
  BoundarySearch(QueryStream& stream, Vector origin, int reference,
                 double tolerance)
      : stream_(stream),
        origin_(std::move(origin)),
        reference_(reference),
        tolerance_(tolerance) {}

  bool IsAdversarial(const Vector& point) {
    return stream_.Label(point) != reference_;
  }

  // Walks the segment [origin, adversarial] down to the tolerance and returns
  // the closest point known to be adversarial.
  Vector Bisect(const Vector& adversarial) {
    const double length = (adversarial - origin_).norm();
    double lo = 0.0;
    double hi = 1.0;
    while ((hi - lo) * length > tolerance_ && !stream_.exhausted()) {
      const double mid = 0.5 * (lo + hi);
      if (IsAdversarial(Blend(adversarial, mid))) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return Blend(adversarial, hi);
  }

 private:
  Vector Blend(const Vector& adversarial, double t) const {
    return (1.0 - t) * origin_ + t * adversarial;
  }

  QueryStream& stream_;
  Vector origin_;
  int reference_;
  double tolerance_;
};

}  // namespace

HsjResult MinPerturbationHsj(LabelOracle& oracle, const Sample& sample,
                             AdversaryMode mode, const HsjConfig& config,
                             uint64_t seed) {
  config.Validate();
  const Eigen::Index d = static_cast<Eigen::Index>(sample.features.size());
  if (d != oracle.input_dim()) {
    throw ArgumentError("hsj: sample dimension does not match the oracle");
  }
  QueryStream stream(oracle, DeriveSeed(seed, "hsj/queries"),
                     config.query_budget);
  Rng rng(DeriveSeed(seed, "hsj/directions"));
  const Vector x = Eigen::Map<const Vector>(sample.features.data(), d);

  HsjResult result;
  int reference;
  if (mode == AdversaryMode::kStrong) {
    reference = sample.label;
    if (stream.Label(x) != reference) {
      result.reference_label = reference;
      result.magnitude = 0.0;
      result.queries = stream.used();
      return result;
    }
  } else {
    reference = stream.Label(x);
  }
  result.reference_label = reference;
  BoundarySearch search(stream, x, reference, config.tolerance);

  std::uniform_real_distribution<double> box(config.box_lo, config.box_hi);
  std::optional<Vector> start;
  for (int t = 0; t < config.init_trials && !stream.exhausted(); ++t) {
    Vector u(d);
    for (Eigen::Index j = 0; j < d; ++j) u[j] = box(rng);
    if (search.IsAdversarial(u)) {
      start = std::move(u);
      break;
    }
  }
  if (!start) {
    result.magnitude = std::numeric_limits<double>::infinity();
    result.failed = true;
    result.queries = stream.used();
    return result;
  }

  Vector boundary = search.Bisect(*start);
  double best = (boundary - x).norm();
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int iterations = config.gradient_steps ? config.max_iters : 0;
  for (int it = 1; it <= iterations && !stream.exhausted(); ++it) {
    const double dist = (boundary - x).norm();
    if (dist <= 0.0) break;
    const double delta = std::max(dist / static_cast<double>(d),
                                  config.tolerance);
    const uint64_t wanted = static_cast<uint64_t>(
        std::lround(config.probes * std::sqrt(static_cast<double>(it))));
    const uint64_t num_probes = std::min(wanted, stream.remaining());
    if (num_probes < 2) break;

    Matrix directions(static_cast<Eigen::Index>(num_probes), d);
    for (Eigen::Index b = 0; b < directions.rows(); ++b) {
      for (Eigen::Index j = 0; j < d; ++j) directions(b, j) = gauss(rng);
      directions.row(b).normalize();
    }
    Matrix probes = directions * delta;
    probes.rowwise() += boundary.transpose();
    const std::vector<int> labels = stream.Labels(probes);

    Vector phi(directions.rows());
    for (Eigen::Index b = 0; b < phi.size(); ++b) {
      phi[b] = labels[b] != reference ? 1.0 : -1.0;
    }
    const double mean_phi = phi.mean();
    Vector grad;
    if (std::abs(mean_phi) == 1.0) {
      grad = mean_phi * directions.colwise().mean().transpose();
    } else {
      grad = directions.transpose() * (phi.array() - mean_phi).matrix() /
             static_cast<double>(directions.rows() - 1);
    }
    const double grad_norm = grad.norm();
    if (!(grad_norm > 0.0)) break;
    grad /= grad_norm;

    // Geometric step search along the estimated gradient.
    double step = dist / std::sqrt(static_cast<double>(it));
    std::optional<Vector> candidate;
    for (int halvings = 0; halvings < 25 && !stream.exhausted(); ++halvings) {
      Vector trial = boundary + step * grad;
      if (search.IsAdversarial(trial)) {
        candidate = std::move(trial);
        break;
      }
      step /= 2.0;
    }
    if (!candidate) break;
    boundary = search.Bisect(*candidate);
    best = std::min(best, (boundary - x).norm());
    result.iterations = it;
  }

  result.magnitude = best;
  result.queries = stream.used();
  return result;
}

std::vector<double> FgsPerturb(const Model& model, const Sample& sample,
                               double epsilon, AdversaryMode mode) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ArgumentError("fgs: epsilon must be a finite value >= 0");
  }
  const int reference = mode == AdversaryMode::kStrong
                            ? sample.label
                            : model.Predict(sample.features);
  const std::vector<double> grad =
      InputGradient(model, sample.features, reference);
  std::vector<double> out = sample.features;
  for (size_t j = 0; j < out.size(); ++j) {
    const double sign = grad[j] > 0.0 ? 1.0 : (grad[j] < 0.0 ? -1.0 : 0.0);
    out[j] += epsilon * sign;
  }
  return out;
}

ThresholdRule LearnThreshold(std::span<const double> member_magnitudes,
                             std::span<const double> nonmember_magnitudes) {
  if (member_magnitudes.empty() || nonmember_magnitudes.empty()) {
    throw ArgumentError("learn_threshold needs members and nonmembers");
  }
  // (value, is_member)
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(member_magnitudes.size() + nonmember_magnitudes.size());
  for (double m : member_magnitudes) pooled.emplace_back(m, true);
  for (double m : nonmember_magnitudes) pooled.emplace_back(m, false);
  for (const auto& [v, unused] : pooled) {
    if (!std::isfinite(v)) {
      throw ArgumentError("learn_threshold: magnitudes must be finite");
    }
  }
  std::sort(pooled.begin(), pooled.end());

  const double members = static_cast<double>(member_magnitudes.size());
  const double nonmembers = static_cast<double>(nonmember_magnitudes.size());
  // Start at tau = -inf: everything is judged member.
  int64_t members_above = static_cast<int64_t>(member_magnitudes.size());
  int64_t nonmembers_below = 0;
  auto score = [&] {
    return (static_cast<double>(members_above) / members +
            static_cast<double>(nonmembers_below) / nonmembers) /
           2.0;
  };
  ThresholdRule best;
  best.tau = -std::numeric_limits<double>::infinity();
  best.asr = score();
  size_t i = 0;
  while (i < pooled.size()) {
    const double value = pooled[i].first;
    while (i < pooled.size() && pooled[i].first == value) {
      if (pooled[i].second) {
        --members_above;
      } else {
        ++nonmembers_below;
      }
      ++i;
    }
    const double tau = i < pooled.size()
                           ? value + (pooled[i].first - value) / 2.0
                           : std::numeric_limits<double>::infinity();
    const double asr = score();
    if (asr > best.asr) {
      best.tau = tau;
      best.asr = asr;
    }
  }
  return best;
}

Verdict ApplyThreshold(const ThresholdRule& rule, double magnitude) {
  return magnitude > rule.tau ? Verdict::kMember : Verdict::kNonmember;
}

ConfusionStats Tally(std::span<const AttackRecord> records) {
  ConfusionStats stats;
  for (const AttackRecord& r : records) {
    if (!r.verdict) throw ArgumentError("tally: record without a verdict");
    const bool said_member = *r.verdict == Verdict::kMember;
    if (r.truth == Membership::kMember) {
      (said_member ? stats.tp : stats.fn) += 1;
    } else {
      (said_member ? stats.fp : stats.tn) += 1;
    }
  }
  return stats;
}

std::vector<AttackRecord> RunHsj(LabelOracle& oracle,
                                 std::span<const Sample> samples,
                                 AdversaryMode mode, const HsjConfig& config,
                                 uint64_t seed, int threads) {
  config.Validate();
  std::vector<AttackRecord> records(samples.size());
  ParallelFor(static_cast<int64_t>(samples.size()), threads, [&](int64_t i) {
    const Sample& s = samples[i];
    const HsjResult h = MinPerturbationHsj(
        oracle, s, mode, config, DeriveSeed(seed, static_cast<uint64_t>(s.id)));
    AttackRecord& r = records[i];
    r.sample_id = s.id;
    r.truth = s.membership;
    r.reference_label = h.reference_label;
    r.magnitude = h.magnitude;
    r.queries = h.queries;
    r.failed = h.failed;
  });
  return records;
}

std::vector<AttackRecord> RunScoreVectors(LabelOracle& oracle,
                                          std::span<const Sample> samples,
                                          const ScoreConfig& config,
                                          AdversaryMode mode, uint64_t seed,
                                          int threads, FeatureKind kind) {
  std::vector<AttackRecord> records(samples.size());
  ParallelFor(static_cast<int64_t>(samples.size()), threads, [&](int64_t i) {
    const Sample& s = samples[i];
    const uint64_t sample_seed = DeriveSeed(seed, static_cast<uint64_t>(s.id));
    QueryStream stream(oracle, DeriveSeed(sample_seed, "score/queries"));
    Rng rng(DeriveSeed(sample_seed, "score/noise"));
    AttackRecord& r = records[i];
    r.sample_id = s.id;
    r.truth = s.membership;
    // Computed once here so that the reference query is not repeated.
    r.reference_label = ReferenceLabel(stream, s, mode);
    std::vector<double> scores;
    scores.reserve(config.probe_grid.size());
    for (size_t g = 0; g < config.probe_grid.size(); ++g) {
      if (g > 0 && config.probe_grid[g] < config.probe_grid[g - 1]) {
        throw ArgumentError("score_vector: probe grid must be ascending");
      }
      const double level = config.probe_grid[g];
      const NoiseSpec probe = config.probe == NoiseKind::kGaussian
                                  ? NoiseSpec::Gaussian(level)
                                  : NoiseSpec::BernoulliFlip(level);
      scores.push_back(ProbeScore(stream, s, probe, config.k_probe,
                                  r.reference_label, kind, rng));
    }
    double total = 0.0;
    for (double v : scores) total += v;
    r.magnitude = scores.empty() ? 0.0 : total / static_cast<double>(scores.size());
    r.scores = std::move(scores);
    r.queries = stream.used();
  });
  return records;
}

ThresholdAttackResult ThresholdAttack(std::vector<AttackRecord> records,
                                      int folds) {
  if (folds < 1) throw ArgumentError("threshold attack needs folds >= 1");
  // Fold of each record: position within its membership class mod folds.
  std::vector<int> fold(records.size());
  int64_t seen_members = 0;
  int64_t seen_nonmembers = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (!records[i].magnitude) {
      throw ArgumentError("threshold attack: record without a magnitude");
    }
    int64_t& counter =
        records[i].truth == Membership::kMember ? seen_members : seen_nonmembers;
    fold[i] = folds == 1 ? 0 : static_cast<int>(counter % folds);
    ++counter;
  }

  ThresholdAttackResult out;
  for (int f = 0; f < folds; ++f) {
    std::vector<double> members;
    std::vector<double> nonmembers;
    for (size_t i = 0; i < records.size(); ++i) {
      if (folds > 1 && fold[i] == f) continue;
      const AttackRecord& r = records[i];
      if (r.failed || !std::isfinite(*r.magnitude)) continue;
      (r.truth == Membership::kMember ? members : nonmembers)
          .push_back(*r.magnitude);
    }
    const ThresholdRule rule = LearnThreshold(members, nonmembers);
    out.rules.push_back(rule);
    for (size_t i = 0; i < records.size(); ++i) {
      if (fold[i] != f) continue;
      AttackRecord& r = records[i];
      r.verdict = (r.failed || !std::isfinite(*r.magnitude))
                      ? Verdict::kMember
                      : ApplyThreshold(rule, *r.magnitude);
    }
  }
  for (const AttackRecord& r : records) {
    if (r.failed) ++out.failures;
  }
  out.stats = Tally(records);
  const Rates rates = ComputeRates(out.stats);
  out.asr = Asr(rates.tpr, rates.tnr);
  out.records = std::move(records);
  return out;
}

SubstituteResult SubstituteAttackWithModel(
    LabelOracle& target, const Model& substitute,
    std::span<const Sample> calibration, std::span<const Sample> targets,
    AdversaryMode mode, const HsjConfig& config, uint64_t calibration_seed,
    uint64_t target_seed, int threads) {
  if (mode != AdversaryMode::kStrong) {
    throw ArgumentError("substitute attack assumes a strong adversary");
  }
  SmoothedOracle local(SmoothedClassifier::DefenseFree(
      std::make_shared<const Model>(substitute)));
  SubstituteResult out;
  out.calibration_records =
      RunHsj(local, calibration, mode, config, calibration_seed, threads);
  std::vector<double> members;
  std::vector<double> nonmembers;
  for (const AttackRecord& r : out.calibration_records) {
    if (r.failed) continue;
    (r.truth == Membership::kMember ? members : nonmembers)
        .push_back(*r.magnitude);
  }
  out.rule = LearnThreshold(members, nonmembers);
  for (AttackRecord& r : out.calibration_records) {
    r.verdict = r.failed ? Verdict::kMember : ApplyThreshold(out.rule, *r.magnitude);
  }
  const Rates calib = ComputeRates(Tally(out.calibration_records));
  out.substitute_asr = Asr(calib.tpr, calib.tnr);

  std::vector<AttackRecord> on_target =
      RunHsj(target, targets, mode, config, target_seed, threads);
  for (AttackRecord& r : on_target) {
    r.verdict = r.failed ? Verdict::kMember : ApplyThreshold(out.rule, *r.magnitude);
    if (r.failed) ++out.target.failures;
  }
  out.target.rules = {out.rule};
  out.target.stats = Tally(on_target);
  const Rates rates = ComputeRates(out.target.stats);
  out.target.asr = Asr(rates.tpr, rates.tnr);
  out.target.records = std::move(on_target);
  return out;
}

SubstituteResult SubstituteAttack(LabelOracle& target,
                                  const Dataset& adversary_data,
                                  std::span<const Sample> targets,
                                  const ModelSpec& spec,
                                  const SubstituteConfig& config,
                                  AdversaryMode mode, uint64_t seed,
                                  int threads) {
  if (mode != AdversaryMode::kStrong) {
    throw ArgumentError("substitute attack assumes a strong adversary");
  }
  std::unordered_set<int64_t> target_members;
  for (const Sample& s : targets) {
    if (s.membership == Membership::kMember) target_members.insert(s.id);
  }
  for (const Sample& s : adversary_data.samples) {
    if (target_members.count(s.id) != 0) {
      throw ArgumentError("substitute attack: adversary data overlaps the "
                          "target's member set (sample " +
                          std::to_string(s.id) + ")");
    }
  }
  const SplitResult local = Split(
      adversary_data, SplitSpec{config.member_count, config.nonmember_count,
                                DeriveSeed(seed, "substitute/split")});
  ModelSpec local_spec = spec;
  local_spec.seed = DeriveSeed(seed, "substitute/model");
  const Model substitute = Train(local.members, local_spec, config.train);

  std::vector<Sample> calibration = local.members.samples;
  calibration.insert(calibration.end(), local.nonmembers.samples.begin(),
                     local.nonmembers.samples.end());
  return SubstituteAttackWithModel(
      target, substitute, calibration, targets, mode, config.hsj,
      DeriveSeed(seed, "substitute/calibrate"),
      DeriveSeed(seed, "substitute/target"), threads);
}

}  // namespace ldl
