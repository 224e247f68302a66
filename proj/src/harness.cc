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


#include "ldl/harness.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "ldl/metrics.h"

namespace ldl {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config reading.

class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(Where() + "expected an object");
  }

  bool Has(const std::string& key) {
    used_.insert(key);
    return doc_.contains(key) && !doc_.at(key).is_null();
  }

  template <typename T>
  T Get(const std::string& key, T fallback) {
    if (!Has(key)) return fallback;
    return Convert<T>(doc_.at(key), Path(key));
  }

  template <typename T>
  T Require(const std::string& key) {
    if (!Has(key)) throw ConfigError("missing required key '" + Path(key) + "'");
    return Convert<T>(doc_.at(key), Path(key));
  }

  Section Child(const std::string& key) {
    if (!Has(key)) throw ConfigError("missing required section '" + Path(key) + "'");
    return Section(doc_.at(key), Path(key));
  }

  // Rejects keys that no Get/Has/Child call asked for.
  void Finish() const {
    for (const auto& item : doc_.items()) {
      if (used_.count(item.key()) == 0) {
        throw ConfigError("unknown key '" + Path(item.key()) + "'");
      }
    }
  }

  std::string Path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  std::string Where() const { return path_.empty() ? "config: " : path_ + ": "; }

  template <typename T>
  static T Convert(const json& v, const std::string& path) {
    auto fail = [&](const char* want) -> T {
      throw ConfigError("key '" + path + "' must be " + want);
    };
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return fail("a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, uint64_t>) {
      if (!v.is_number_unsigned()) return fail("a nonnegative integer");
      return v.get<uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return fail("an integer");
      const int64_t x = v.get<int64_t>();
      if (x < std::numeric_limits<T>::min() ||
          x > std::numeric_limits<T>::max()) {
        return fail("an integer in range");
      }
      return static_cast<T>(x);
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) return fail("a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return fail("a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) return fail("an array of numbers");
      std::vector<double> out;
      for (const json& e : v) {
        if (!e.is_number()) return fail("an array of numbers");
        out.push_back(e.get<double>());
      }
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!v.is_array()) return fail("an array of integers");
      std::vector<int> out;
      for (const json& e : v) {
        if (!e.is_number_integer()) return fail("an array of integers");
        out.push_back(e.get<int>());
      }
      return out;
    } else {
      static_assert(std::is_same_v<T, std::vector<std::string>>);
      if (!v.is_array()) return fail("an array of strings");
      std::vector<std::string> out;
      for (const json& e : v) {
        if (!e.is_string()) return fail("an array of strings");
        out.push_back(e.get<std::string>());
      }
      return out;
    }
  }

  const json& doc_;
  std::string path_;
  std::set<std::string> used_;
};

// Library parse helpers throw ArgumentError; re-raise as ConfigError.
template <typename F>
auto AsConfig(const std::string& path, F&& parse) {
  try {
    return parse();
  } catch (const ConfigError&) {
    throw;
  } catch (const ArgumentError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

TrainConfig ParseTrain(Section s) {
  TrainConfig t;
  t.epochs = s.Get("epochs", t.epochs);
  t.learning_rate = s.Get("learning_rate", t.learning_rate);
  t.batch_size = s.Get("batch_size", t.batch_size);
  t.weight_decay = s.Get("weight_decay", t.weight_decay);
  const std::string opt = s.Get<std::string>("optimizer", "adam");
  if (opt == "adam") {
    t.optimizer = Optimizer::kAdam;
  } else if (opt == "sgd") {
    t.optimizer = Optimizer::kSgd;
  } else {
    throw ConfigError("key '" + s.Path("optimizer") +
                      "' must be \"adam\" or \"sgd\"");
  }
  s.Finish();
  return t;
}

HsjConfig ParseHsj(Section s) {
  HsjConfig h;
  h.init_trials = s.Get("init_trials", h.init_trials);
  h.tolerance = s.Get("tolerance", h.tolerance);
  h.probes = s.Get("probes", h.probes);
  h.max_iters = s.Get("max_iters", h.max_iters);
  h.query_budget = s.Get("query_budget", h.query_budget);
  h.box_lo = s.Get("box_lo", h.box_lo);
  h.box_hi = s.Get("box_hi", h.box_hi);
  h.gradient_steps = s.Get("gradient_steps", h.gradient_steps);
  s.Finish();
  return h;
}

DatasetConfig ParseDataset(Section s) {
  DatasetConfig d;
  const bool blobs = s.Has("blobs");
  const bool csv = s.Has("csv");
  if (blobs == csv) {
    throw ConfigError("dataset: exactly one of 'blobs' or 'csv' is required");
  }
  if (blobs) {
    d.source = DatasetConfig::Source::kBlobs;
    Section b = s.Child("blobs");
    d.blobs.dim = b.Require<int>("dim");
    d.blobs.num_classes = b.Require<int>("num_classes");
    d.blobs.num_samples = b.Require<int>("num_samples");
    d.blobs.spread = b.Require<double>("spread");
    d.blobs.label_noise = b.Get("label_noise", 0.0);
    b.Finish();
  } else {
    d.source = DatasetConfig::Source::kCsv;
    Section c = s.Child("csv");
    d.csv_path = c.Require<std::string>("path");
    d.label_column = c.Get<std::string>("label_column", d.label_column);
    const std::string kind = c.Get<std::string>("feature_kind", "continuous");
    if (kind == "continuous") {
      d.kind = FeatureKind::kContinuous;
    } else if (kind == "discrete") {
      d.kind = FeatureKind::kDiscrete;
    } else {
      throw ConfigError("key '" + c.Path("feature_kind") +
                        "' must be \"continuous\" or \"discrete\"");
    }
    c.Finish();
  }
  s.Finish();
  return d;
}

SweepAttack ParseSweepAttack(const std::string& name) {
  if (name == "gap") return SweepAttack::kGap;
  if (name == "threshold") return SweepAttack::kThreshold;
  if (name == "random_noise") return SweepAttack::kRandomNoise;
  throw ConfigError("sweep.attack must be gap, threshold or random_noise");
}

std::string SweepAttackName(SweepAttack a) {
  switch (a) {
    case SweepAttack::kGap:
      return "gap";
    case SweepAttack::kThreshold:
      return "threshold";
    case SweepAttack::kRandomNoise:
      break;
  }
  return "random_noise";
}

std::string FeatureKindName(FeatureKind k) {
  return k == FeatureKind::kContinuous ? "continuous" : "discrete";
}

json HsjToJson(const HsjConfig& h) {
  return {{"init_trials", h.init_trials},   {"tolerance", h.tolerance},
          {"probes", h.probes},             {"max_iters", h.max_iters},
          {"query_budget", h.query_budget}, {"box_lo", h.box_lo},
          {"box_hi", h.box_hi},             {"gradient_steps", h.gradient_steps}};
}

json TrainToJson(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"weight_decay", t.weight_decay},
          {"optimizer", t.optimizer == Optimizer::kAdam ? "adam" : "sgd"}};
}

// JSON has no infinities; they are written as strings.
json Real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::string CsvReal(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

ExperimentConfig ParseConfig(const json& doc) {
  Section root(doc, "");
  ExperimentConfig c;
  c.seed = root.Get<uint64_t>("seed", c.seed);
  c.threads = root.Get("threads", c.threads);
  c.dataset = ParseDataset(root.Child("dataset"));

  if (root.Has("split")) {
    Section s = root.Child("split");
    c.member_count = s.Get("member_count", c.member_count);
    c.nonmember_count = s.Get("nonmember_count", c.nonmember_count);
    s.Finish();
  }

  {
    Section m = root.Child("model");
    c.model.layer_dims = m.Require<std::vector<int>>("layer_dims");
    const auto acts = m.Get<std::vector<std::string>>("activations", {});
    c.model.activations.clear();
    for (const auto& a : acts) {
      c.model.activations.push_back(
          AsConfig(m.Path("activations"), [&] { return ParseActivation(a); }));
    }
    c.weights = m.Get<std::string>("weights", "");
    m.Finish();
  }

  if (root.Has("train")) c.train = ParseTrain(root.Child("train"));

  if (root.Has("defense")) {
    Section d = root.Child("defense");
    DefenseConfig def;
    const NoiseKind kind = AsConfig(d.Path("noise"), [&] {
      return ParseNoiseKind(d.Require<std::string>("noise"));
    });
    if (kind == NoiseKind::kGaussian) {
      def.noise = NoiseSpec::Gaussian(d.Require<double>("sigma2"));
    } else {
      def.noise = NoiseSpec::BernoulliFlip(d.Require<double>("p"));
    }
    def.k = d.Get("k", def.k);
    d.Finish();
    c.defense = def;
  }

  if (root.Has("attacks")) {
    Section a = root.Child("attacks");
    c.attacks.mode = AsConfig(a.Path("mode"), [&] {
      return ParseAdversaryMode(a.Get<std::string>("mode", "strong"));
    });
    c.attacks.gap = a.Get("gap", c.attacks.gap);
    if (a.Has("threshold")) {
      Section t = a.Child("threshold");
      ThresholdConfig tc;
      if (t.Has("hsj")) tc.hsj = ParseHsj(t.Child("hsj"));
      tc.folds = t.Get("folds", tc.folds);
      t.Finish();
      c.attacks.threshold = tc;
    }
    if (a.Has("random_noise")) {
      Section r = a.Child("random_noise");
      RandomNoiseConfig rc;
      rc.score.probe_grid = r.Get("probe_grid", rc.score.probe_grid);
      rc.score.k_probe = r.Get("k_probe", rc.score.k_probe);
      rc.folds = r.Get("folds", rc.folds);
      r.Finish();
      c.attacks.random_noise = rc;
    }
    if (a.Has("substitute")) {
      Section s = a.Child("substitute");
      SubstituteConfig sc;
      sc.member_count = s.Get("member_count", sc.member_count);
      sc.nonmember_count = s.Get("nonmember_count", sc.nonmember_count);
      sc.train = c.train;
      if (s.Has("train")) sc.train = ParseTrain(s.Child("train"));
      if (s.Has("hsj")) sc.hsj = ParseHsj(s.Child("hsj"));
      s.Finish();
      c.attacks.substitute = sc;
    }
    if (a.Has("fgs")) {
      Section f = a.Child("fgs");
      FgsConfig fc;
      fc.epsilons = f.Require<std::vector<double>>("epsilons");
      f.Finish();
      c.attacks.fgs = fc;
    }
    a.Finish();
  }

  if (root.Has("sweep")) {
    Section s = root.Child("sweep");
    SweepConfig sw;
    sw.sigma2 = s.Require<std::vector<double>>("sigma2");
    sw.k = s.Get("k", sw.k);
    sw.attack = ParseSweepAttack(s.Get<std::string>("attack", "random_noise"));
    s.Finish();
    c.sweep = sw;
  }

  if (root.Has("output")) {
    Section o = root.Child("output");
    c.output.report = o.Get<std::string>("report", "");
    c.output.csv_dir = o.Get<std::string>("csv_dir", "");
    c.output.model = o.Get<std::string>("model", "");
    o.Finish();
  }
  root.Finish();
  return c;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return ParseConfig(doc);
}

json ConfigToJson(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  if (c.dataset.source == DatasetConfig::Source::kBlobs) {
    const BlobsConfig& b = c.dataset.blobs;
    j["dataset"] = {{"blobs",
                     {{"dim", b.dim},
                      {"num_classes", b.num_classes},
                      {"num_samples", b.num_samples},
                      {"spread", b.spread},
                      {"label_noise", b.label_noise}}}};
  } else {
    j["dataset"] = {{"csv",
                     {{"path", c.dataset.csv_path},
                      {"label_column", c.dataset.label_column},
                      {"feature_kind", FeatureKindName(c.dataset.kind)}}}};
  }
  j["split"] = {{"member_count", c.member_count},
                {"nonmember_count", c.nonmember_count}};
  json acts = json::array();
  for (Activation a : c.model.activations) acts.push_back(ActivationName(a));
  j["model"] = {{"layer_dims", c.model.layer_dims}, {"activations", acts}};
  j["model"]["weights"] =
      c.weights.empty() ? json(nullptr) : json(c.weights);
  j["train"] = TrainToJson(c.train);
  if (c.defense) {
    json d = {{"noise", NoiseKindName(c.defense->noise.kind)},
              {"k", c.defense->k}};
    if (c.defense->noise.kind == NoiseKind::kGaussian) {
      d["sigma2"] = c.defense->noise.sigma2;
    } else {
      d["p"] = c.defense->noise.p;
    }
    j["defense"] = d;
  } else {
    j["defense"] = nullptr;
  }
  json a = {{"mode", AdversaryModeName(c.attacks.mode)}, {"gap", c.attacks.gap}};
  a["threshold"] = nullptr;
  if (c.attacks.threshold) {
    a["threshold"] = {{"hsj", HsjToJson(c.attacks.threshold->hsj)},
                      {"folds", c.attacks.threshold->folds}};
  }
  a["random_noise"] = nullptr;
  if (c.attacks.random_noise) {
    a["random_noise"] = {{"probe_grid", c.attacks.random_noise->score.probe_grid},
                         {"k_probe", c.attacks.random_noise->score.k_probe},
                         {"folds", c.attacks.random_noise->folds}};
  }
  a["substitute"] = nullptr;
  if (c.attacks.substitute) {
    const SubstituteConfig& s = *c.attacks.substitute;
    a["substitute"] = {{"member_count", s.member_count},
                       {"nonmember_count", s.nonmember_count},
                       {"train", TrainToJson(s.train)},
                       {"hsj", HsjToJson(s.hsj)}};
  }
  a["fgs"] = nullptr;
  if (c.attacks.fgs) a["fgs"] = {{"epsilons", c.attacks.fgs->epsilons}};
  j["attacks"] = a;
  j["sweep"] = nullptr;
  if (c.sweep) {
    j["sweep"] = {{"sigma2", c.sweep->sigma2},
                  {"k", c.sweep->k},
                  {"attack", SweepAttackName(c.sweep->attack)}};
  }
  j["output"] = {{"report", c.output.report},
                 {"csv_dir", c.output.csv_dir},
                 {"model", c.output.model}};
  return j;
}

void ValidateConfig(const ExperimentConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  check(c.threads >= 1, "threads must be >= 1");
  check(c.member_count >= 1 && c.nonmember_count >= 1,
        "split counts must be >= 1");
  const bool continuous = c.dataset.kind == FeatureKind::kContinuous;
  if (c.dataset.source == DatasetConfig::Source::kBlobs) {
    const BlobsConfig& b = c.dataset.blobs;
    check(b.dim >= 1, "dataset.blobs.dim must be >= 1");
    check(b.num_classes >= 2, "dataset.blobs.num_classes must be >= 2");
    check(b.num_samples >= b.num_classes,
          "dataset.blobs.num_samples must be >= num_classes");
    check(b.spread > 0.0, "dataset.blobs.spread must be > 0");
    check(b.label_noise >= 0.0 && b.label_noise <= 1.0,
          "dataset.blobs.label_noise must lie in [0, 1]");
    check(c.member_count + c.nonmember_count <= b.num_samples,
          "split counts exceed dataset.blobs.num_samples");
    check(!c.model.layer_dims.empty() && c.model.layer_dims.front() == b.dim,
          "model.layer_dims must start with the dataset dimension");
    check(c.model.layer_dims.back() == b.num_classes,
          "model.layer_dims must end with the class count");
  }
  ModelSpec spec = c.model;
  AsConfig("model", [&] { spec.Validate(); return 0; });
  AsConfig("train", [&] { c.train.Validate(); return 0; });
  if (c.defense) {
    AsConfig("defense", [&] { c.defense->noise.Validate(); return 0; });
    check(c.defense->k >= 1, "defense.k must be >= 1");
    check((c.defense->noise.kind == NoiseKind::kGaussian) == continuous,
          "defense noise must be gaussian for continuous features and "
          "bernoulli_flip for discrete features");
  }
  const AttackSelection& a = c.attacks;
  if (a.gap) {
    check(a.mode == AdversaryMode::kStrong,
          "the gap attack needs attacks.mode = strong");
  }
  if (a.threshold) {
    AsConfig("attacks.threshold.hsj", [&] { a.threshold->hsj.Validate(); return 0; });
    check(a.threshold->folds >= 1, "attacks.threshold.folds must be >= 1");
    check(continuous, "boundary-distance attacks need continuous features");
  }
  if (a.random_noise) {
    const auto& grid = a.random_noise->score.probe_grid;
    check(!grid.empty(), "attacks.random_noise.probe_grid must not be empty");
    for (size_t i = 0; i < grid.size(); ++i) {
      check(grid[i] >= 0.0 && (continuous || grid[i] <= 1.0),
            "attacks.random_noise.probe_grid values out of range");
      check(i == 0 || grid[i] >= grid[i - 1],
            "attacks.random_noise.probe_grid must be ascending");
    }
    check(a.random_noise->score.k_probe >= 1,
          "attacks.random_noise.k_probe must be >= 1");
    check(a.random_noise->folds >= 1, "attacks.random_noise.folds must be >= 1");
  }
  if (a.substitute) {
    check(a.mode == AdversaryMode::kStrong,
          "the substitute attack needs attacks.mode = strong");
    check(continuous, "boundary-distance attacks need continuous features");
    check(a.substitute->member_count >= 1 && a.substitute->nonmember_count >= 1,
          "attacks.substitute counts must be >= 1");
    AsConfig("attacks.substitute.train", [&] { a.substitute->train.Validate(); return 0; });
    AsConfig("attacks.substitute.hsj", [&] { a.substitute->hsj.Validate(); return 0; });
    if (c.dataset.source == DatasetConfig::Source::kBlobs) {
      check(c.member_count + c.nonmember_count + a.substitute->member_count +
                    a.substitute->nonmember_count <=
                c.dataset.blobs.num_samples,
            "not enough samples left over for the substitute split");
    }
  }
  if (a.fgs) {
    check(!a.fgs->epsilons.empty(), "attacks.fgs.epsilons must not be empty");
    for (double e : a.fgs->epsilons) {
      check(e >= 0.0 && std::isfinite(e), "attacks.fgs.epsilons must be >= 0");
    }
    check(continuous, "the FGS probe needs continuous features");
  }
  if (c.sweep) {
    const SweepConfig& s = *c.sweep;
    check(continuous, "sigma2 sweeps need continuous features");
    check(!s.sigma2.empty(), "sweep.sigma2 must not be empty");
    for (size_t i = 0; i < s.sigma2.size(); ++i) {
      check(s.sigma2[i] >= 0.0 && std::isfinite(s.sigma2[i]),
            "sweep.sigma2 values must be >= 0");
      check(i == 0 || s.sigma2[i] > s.sigma2[i - 1],
            "sweep.sigma2 must be strictly ascending");
    }
    check(s.k >= 1, "sweep.k must be >= 1");
    if (s.attack == SweepAttack::kGap) {
      check(a.mode == AdversaryMode::kStrong,
            "a gap sweep needs attacks.mode = strong");
    }
  }
}

namespace {

// ---------------------------------------------------------------------------
// Report pieces.

json StatsJson(const ConfusionStats& s) {
  return {{"tp", s.tp}, {"fn", s.fn}, {"tn", s.tn}, {"fp", s.fp}};
}

json RatesJson(const Rates& r) {
  return {{"tpr", r.tpr}, {"tnr", r.tnr}, {"fpr", r.fpr}, {"fnr", r.fnr}};
}

uint64_t TotalQueries(std::span<const AttackRecord> records) {
  uint64_t q = 0;
  for (const AttackRecord& r : records) q += r.queries;
  return q;
}

json SummaryJson(const ConfusionStats& stats, AdversaryMode mode,
                 uint64_t queries) {
  const Rates rates = ComputeRates(stats);
  return {{"mode", AdversaryModeName(mode)},
          {"stats", StatsJson(stats)},
          {"rates", RatesJson(rates)},
          {"asr", Asr(rates.tpr, rates.tnr)},
          {"queries", queries}};
}

json ThresholdSummary(const ThresholdAttackResult& r, AdversaryMode mode) {
  json j = SummaryJson(r.stats, mode, TotalQueries(r.records));
  json taus = json::array();
  for (const ThresholdRule& rule : r.rules) taus.push_back(Real(rule.tau));
  j["thresholds"] = taus;
  j["failures"] = r.failures;
  return j;
}

std::string VerdictName(const std::optional<Verdict>& v) {
  if (!v) return "";
  return *v == Verdict::kMember ? "member" : "nonmember";
}

void WriteRecordsCsv(const std::string& path,
                     std::span<const AttackRecord> records) {
  size_t width = 0;
  for (const AttackRecord& r : records) {
    if (r.scores) width = std::max(width, r.scores->size());
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "sample_id,reference_label,magnitude";
  for (size_t i = 0; i < width; ++i) out << ",score_" << i;
  out << ",verdict,membership,queries,failed\n";
  for (const AttackRecord& r : records) {
    out << r.sample_id << ',' << r.reference_label << ','
        << (r.magnitude ? CsvReal(*r.magnitude) : "");
    for (size_t i = 0; i < width; ++i) {
      out << ',';
      if (r.scores && i < r.scores->size()) out << CsvReal((*r.scores)[i]);
    }
    out << ',' << VerdictName(r.verdict) << ','
        << (r.truth == Membership::kMember ? "member" : "nonmember") << ','
        << r.queries << ',' << (r.failed ? 1 : 0) << '\n';
  }
}

void WriteAsrTableCsv(const std::string& path, const json& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "sigma2,asr,tpr,fpr,tnr,fnr,acc_member,acc_nonmember,queries\n";
  for (const json& r : rows) {
    out << CsvReal(r["sigma2"].get<double>()) << ','
        << CsvReal(r["asr"].get<double>()) << ','
        << CsvReal(r["rates"]["tpr"].get<double>()) << ','
        << CsvReal(r["rates"]["fpr"].get<double>()) << ','
        << CsvReal(r["rates"]["tnr"].get<double>()) << ','
        << CsvReal(r["rates"]["fnr"].get<double>()) << ','
        << CsvReal(r["acc_member"].get<double>()) << ','
        << CsvReal(r["acc_nonmember"].get<double>()) << ','
        << r["queries"].get<uint64_t>() << '\n';
  }
}

// Oracle accuracy over a pool, one query per sample.
double OracleAccuracy(LabelOracle& oracle, std::span<const Sample> samples,
                      uint64_t seed) {
  int64_t correct = 0;
  for (const Sample& s : samples) {
    QueryStream stream(oracle, DeriveSeed(seed, static_cast<uint64_t>(s.id)));
    if (stream.Label(s.features) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

json CurveJson(const HCurve& c) {
  if (c.family == HFamily::kH1) return {{"alpha", c.alpha}};
  return {{"L", c.big_l}, {"beta", c.beta}, {"c_h", c.c_h}};
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct Context {
  const ExperimentConfig& config;
  json report;
  std::vector<std::pair<std::string, const std::vector<AttackRecord>*>> csv;

  // Runs one stage with timing; failures become StageError with the partial
  // report attached (and written when an output path is configured).
  void Stage(const std::string& name, const std::function<void()>& body) {
    Stopwatch watch;
    try {
      body();
    } catch (const Error& e) {
      Fail(name, e.what());
    } catch (const std::exception& e) {
      Fail(name, e.what());
    }
    report["timing"][name] = watch.Seconds();
  }

  [[noreturn]] void Fail(const std::string& stage, const std::string& what) {
    report["status"] = "failed";
    report["failure"] = {{"stage", stage}, {"message", what}};
    if (!config.output.report.empty()) {
      try {
        WriteJson(report, config.output.report);
      } catch (const Error&) {
        // The original failure is more useful than this one.
      }
    }
    throw StageError(stage, what, report);
  }
};

}  // namespace

json RunExperiment(const ExperimentConfig& config, const RunOptions& options) {
  ValidateConfig(config);
  const uint64_t master = config.seed;
  const int threads = config.threads;
  const AdversaryMode mode = config.attacks.mode;

  Context ctx{config, json::object(), {}};
  json& report = ctx.report;
  report["format_version"] = 1;
  report["status"] = "ok";
  report["failure"] = nullptr;
  report["config"] = ConfigToJson(config);
  for (const char* key : {"dataset", "accuracy", "asr_gap", "defense", "sweep",
                          "fits"}) {
    report[key] = nullptr;
  }
  report["attacks"] = {{"gap", nullptr},        {"threshold", nullptr},
                       {"random_noise", nullptr}, {"substitute", nullptr},
                       {"fgs", nullptr}};
  report["queries"] = {{"total", 0}, {"by_stage", json::object()}};
  report["timing"] = json::object();
  uint64_t total_queries = 0;
  auto count = [&](const std::string& stage, uint64_t q) {
    report["queries"]["by_stage"][stage] = q;
    total_queries += q;
    report["queries"]["total"] = total_queries;
  };

  Dataset data;
  SplitResult split;
  std::shared_ptr<const Model> model;
  ctx.Stage("dataset", [&] {
    if (config.dataset.source == DatasetConfig::Source::kBlobs) {
      BlobsConfig b = config.dataset.blobs;
      b.seed = DeriveSeed(master, "dataset");
      data = GenerateBlobs(b);
    } else {
      data = LoadCsv(config.dataset.csv_path, config.dataset.label_column,
                     config.dataset.kind);
    }
    split = Split(data, SplitSpec{config.member_count, config.nonmember_count,
                                  DeriveSeed(master, "split")});
    report["dataset"] = {{"dim", data.dim},
                         {"num_classes", data.num_classes},
                         {"samples", data.size()},
                         {"feature_kind", FeatureKindName(data.kind)},
                         {"members", split.members.size()},
                         {"nonmembers", split.nonmembers.size()},
                         {"remainder", split.remainder.size()}};
  });

  ctx.Stage("model", [&] {
    if (!config.weights.empty()) {
      model = std::make_shared<const Model>(LoadModel(config.weights));
    } else {
      ModelSpec spec = config.model;
      spec.seed = DeriveSeed(master, "model");
      model = std::make_shared<const Model>(
          Train(split.members, spec, config.train));
    }
    if (model->input_dim() != data.dim ||
        model->num_classes() != data.num_classes) {
      throw ArgumentError("model shape does not match the dataset");
    }
    if (!config.output.model.empty()) SaveModel(*model, config.output.model);
    const double acc_mem = Accuracy(*model, split.members);
    const double acc_non = Accuracy(*model, split.nonmembers);
    report["accuracy"] = {{"member", acc_mem},
                          {"nonmember", acc_non},
                          {"train", model->train_accuracy()
                                        ? json(*model->train_accuracy())
                                        : json(nullptr)}};
    report["asr_gap"] = AsrGap(acc_mem, acc_non);
  });

  std::vector<Sample> pool = split.members.samples;
  pool.insert(pool.end(), split.nonmembers.samples.begin(),
              split.nonmembers.samples.end());

  const SmoothedClassifier target_classifier =
      config.defense
          ? SmoothedClassifier(model, config.defense->noise, config.defense->k,
                               DeriveSeed(master, "defense"), data.kind)
          : SmoothedClassifier::DefenseFree(model, data.kind);
  SmoothedOracle target(target_classifier);

  if (config.defense) {
    ctx.Stage("defense", [&] {
      const uint64_t before = target.queries();
      const uint64_t seed = DeriveSeed(master, "defense/accuracy");
      const double acc_mem = OracleAccuracy(target, split.members.samples, seed);
      const double acc_non =
          OracleAccuracy(target, split.nonmembers.samples, seed);
      json d = report["config"]["defense"];
      d["accuracy"] = {{"member", acc_mem}, {"nonmember", acc_non}};
      d["asr_gap"] = AsrGap(acc_mem, acc_non);
      report["defense"] = d;
      count("defense", target.queries() - before);
    });
  }

  std::vector<AttackRecord> gap_records, threshold_records, noise_records,
      substitute_records;
  if (options.attacks) {
    const AttackSelection& a = config.attacks;
    if (a.gap) {
      ctx.Stage("attack/gap", [&] {
        const uint64_t before = target.queries();
        gap_records = GapAttack(target, pool, mode, DeriveSeed(master, "attack/gap"));
        report["attacks"]["gap"] =
            SummaryJson(Tally(gap_records), mode, TotalQueries(gap_records));
        count("attack/gap", target.queries() - before);
      });
      ctx.csv.emplace_back("gap", &gap_records);
    }
    if (a.threshold) {
      ctx.Stage("attack/threshold", [&] {
        const uint64_t before = target.queries();
        auto records = RunHsj(target, pool, mode, a.threshold->hsj,
                              DeriveSeed(master, "attack/threshold"), threads);
        ThresholdAttackResult r =
            ThresholdAttack(std::move(records), a.threshold->folds);
        report["attacks"]["threshold"] = ThresholdSummary(r, mode);
        threshold_records = std::move(r.records);
        count("attack/threshold", target.queries() - before);
      });
      ctx.csv.emplace_back("threshold", &threshold_records);
    }
    if (a.random_noise) {
      ctx.Stage("attack/random_noise", [&] {
        const uint64_t before = target.queries();
        ScoreConfig score = a.random_noise->score;
        if (data.kind == FeatureKind::kDiscrete) {
          score.probe = NoiseKind::kBernoulliFlip;
        }
        auto records =
            RunScoreVectors(target, pool, score, mode,
                            DeriveSeed(master, "attack/random_noise"), threads,
                            data.kind);
        ThresholdAttackResult r =
            ThresholdAttack(std::move(records), a.random_noise->folds);
        report["attacks"]["random_noise"] = ThresholdSummary(r, mode);
        noise_records = std::move(r.records);
        count("attack/random_noise", target.queries() - before);
      });
      ctx.csv.emplace_back("random_noise", &noise_records);
    }
    if (a.substitute) {
      ctx.Stage("attack/substitute", [&] {
        const uint64_t before = target.queries();
        SubstituteResult r = SubstituteAttack(
            target, split.remainder, pool, config.model, *a.substitute, mode,
            DeriveSeed(master, "attack/substitute"), threads);
        json j = ThresholdSummary(r.target, mode);
        j["tau"] = Real(r.rule.tau);
        j["substitute_asr"] = r.substitute_asr;
        j["substitute_queries"] = TotalQueries(r.calibration_records);
        report["attacks"]["substitute"] = j;
        substitute_records = std::move(r.target.records);
        count("attack/substitute", target.queries() - before);
      });
      ctx.csv.emplace_back("substitute", &substitute_records);
    }
    if (a.fgs) {
      ctx.Stage("attack/fgs", [&] {
        const uint64_t before = target.queries();
        const uint64_t seed = DeriveSeed(master, "attack/fgs");
        json rows = json::array();
        for (size_t e = 0; e < a.fgs->epsilons.size(); ++e) {
          const double eps = a.fgs->epsilons[e];
          auto misclassified = [&](const Dataset& d) {
            int64_t wrong = 0;
            for (const Sample& s : d.samples) {
              QueryStream stream(target,
                                 DeriveSeed(DeriveSeed(seed, e), static_cast<uint64_t>(s.id)));
              if (stream.Label(FgsPerturb(*model, s, eps, mode)) != s.label) {
                ++wrong;
              }
            }
            return static_cast<double>(wrong) / static_cast<double>(d.size());
          };
          const double mem = misclassified(split.members);
          const double non = misclassified(split.nonmembers);
          rows.push_back({{"epsilon", eps},
                          {"member_misclassification", mem},
                          {"nonmember_misclassification", non},
                          {"gap", non - mem}});
        }
        report["attacks"]["fgs"] = {{"mode", AdversaryModeName(mode)},
                                    {"rows", rows}};
        count("attack/fgs", target.queries() - before);
      });
    }
  }

  if (options.sweep && config.sweep) {
    ctx.Stage("sweep", [&] {
      const SweepConfig& sw = *config.sweep;
      // Same attack seeds at every level so that differences between rows
      // come from the defense rather than from the attacker's randomness.
      const uint64_t attack_seed = DeriveSeed(master, "sweep/attack");
      json rows = json::array();
      uint64_t queries = 0;
      for (size_t i = 0; i < sw.sigma2.size(); ++i) {
        const double s2 = sw.sigma2[i];
        SmoothedOracle oracle(
            s2 == 0.0 ? SmoothedClassifier::DefenseFree(model)
                      : SmoothedClassifier(model, NoiseSpec::Gaussian(s2), sw.k,
                                           DeriveSeed(master, "sweep/defense", i)));
        ConfusionStats stats;
        if (sw.attack == SweepAttack::kGap) {
          stats = Tally(GapAttack(oracle, pool, mode, attack_seed));
        } else if (sw.attack == SweepAttack::kThreshold) {
          const ThresholdConfig tc =
              config.attacks.threshold.value_or(ThresholdConfig{});
          stats = ThresholdAttack(
                      RunHsj(oracle, pool, mode, tc.hsj, attack_seed, threads),
                      tc.folds)
                      .stats;
        } else {
          const RandomNoiseConfig rc =
              config.attacks.random_noise.value_or(RandomNoiseConfig{});
          stats = ThresholdAttack(RunScoreVectors(oracle, pool, rc.score, mode,
                                                  attack_seed, threads),
                                  rc.folds)
                      .stats;
        }
        const uint64_t acc_seed = DeriveSeed(master, "sweep/accuracy");
        const double acc_mem =
            OracleAccuracy(oracle, split.members.samples, acc_seed);
        const double acc_non =
            OracleAccuracy(oracle, split.nonmembers.samples, acc_seed);
        const Rates rates = ComputeRates(stats);
        rows.push_back({{"sigma2", s2},
                        {"asr", Asr(rates.tpr, rates.tnr)},
                        {"stats", StatsJson(stats)},
                        {"rates", RatesJson(rates)},
                        {"acc_member", acc_mem},
                        {"acc_nonmember", acc_non},
                        {"queries", oracle.queries()}});
        queries += oracle.queries();
      }
      report["sweep"] = {{"attack", SweepAttackName(sw.attack)},
                         {"k", sw.k},
                         {"mode", AdversaryModeName(mode)},
                         {"rows", rows}};
      count("sweep", queries);
    });
    if (options.fits) {
      ctx.Stage("fits", [&] { report = FitAsrReport(std::move(report)); });
    }
  }

  if (!config.output.csv_dir.empty()) {
    ctx.Stage("csv", [&] {
      std::filesystem::create_directories(config.output.csv_dir);
      const std::filesystem::path dir(config.output.csv_dir);
      for (const auto& [name, records] : ctx.csv) {
        WriteRecordsCsv((dir / ("records_" + name + ".csv")).string(), *records);
      }
      if (report["sweep"].is_object()) {
        WriteAsrTableCsv((dir / "asr_table.csv").string(),
                         report["sweep"]["rows"]);
      }
    });
  }
  if (!config.output.report.empty()) WriteJson(report, config.output.report);
  return report;
}

json FitAsrReport(json report) {
  if (!report.contains("sweep") || !report["sweep"].is_object()) {
    throw ArgumentError("fit-asr needs a report with a sweep table");
  }
  const json& rows = report["sweep"]["rows"];
  if (!rows.is_array() || rows.empty()) {
    throw ArgumentError("fit-asr: the sweep table is empty");
  }
  const json* base = &rows.front();
  for (const json& r : rows) {
    if (r.at("sigma2").get<double>() == 0.0) {
      base = &r;
      break;
    }
  }
  const double tpr = base->at("rates").at("tpr").get<double>();
  const double fpr = base->at("rates").at("fpr").get<double>();
  std::vector<AsrObservation> obs;
  json obs_json = json::array();
  for (const json& r : rows) {
    AsrObservation o{r.at("sigma2").get<double>(), r.at("asr").get<double>(),
                     tpr, fpr};
    obs.push_back(o);
    obs_json.push_back(
        {{"sigma2", o.sigma2}, {"asr", o.asr}, {"tpr", o.tpr}, {"fpr", o.fpr}});
  }
  json fits = json::object();
  for (HFamily family : {HFamily::kH1, HFamily::kH2}) {
    const std::string name = HFamilyName(family);
    try {
      const FitResult f = FitH(obs, family);
      json j = {{"family", name},
                {"params", CurveJson(f.curve)},
                {"residual_norm", f.residual_norm},
                {"degenerate", f.degenerate},
                {"best_start", f.best_start}};
      json h = json::array();
      for (const AsrObservation& o : obs) {
        h.push_back({{"sigma2", o.sigma2},
                     {"h_raw", HRaw(f.curve, o.sigma2)},
                     {"h", HEval(f.curve, o.sigma2)},
                     {"asr_model", AsrLdl(o.tpr, o.fpr, f.curve, o.sigma2)}});
      }
      j["curve"] = h;
      fits[name] = j;
    } catch (const FitError& e) {
      fits[name] = {{"family", name},
                    {"error", e.what()},
                    {"residual_norm", e.best_residual()}};
    } catch (const ArgumentError& e) {
      fits[name] = {{"family", name}, {"error", e.what()}};
    }
  }
  fits["observations"] = obs_json;
  report["fits"] = fits;
  return report;
}

json WithoutTiming(json report) {
  report.erase("timing");
  return report;
}

void WriteJson(const json& doc, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("error writing " + path);
}

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("file not found: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + " is not valid JSON: " + e.what());
  }
}

}  // namespace ldl
