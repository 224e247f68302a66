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


// Config-driven experiment runner and the ldl_lab command line.
//
// A run goes dataset -> split -> model -> (defense) -> attacks -> sweep ->
// fits. Every stochastic stage seeds from the master seed and the stage name,
// and per-sample work additionally from the sample id, so a report is a pure
// function of its config when run with one thread.

#ifndef LDL_HARNESS_H_
#define LDL_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldl/attacks.h"
#include "ldl/common.h"
#include "ldl/dataset.h"
#include "ldl/defense.h"
#include "ldl/model.h"

namespace ldl {

// Malformed or inconsistent configuration. The CLI maps it to exit code 1.
class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// A stage failed while running. Carries the partial report.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what,
             nlohmann::json partial)
      : Error(stage + ": " + what),
        stage_(stage),
        partial_(std::move(partial)) {}
  const std::string& stage() const { return stage_; }
  const nlohmann::json& partial_report() const { return partial_; }

 private:
  std::string stage_;
  nlohmann::json partial_;
};

struct DatasetConfig {
  enum class Source { kBlobs, kCsv };
  Source source = Source::kBlobs;
  BlobsConfig blobs;  // seed is taken from the master seed
  std::string csv_path;
  std::string label_column = "label";
  FeatureKind kind = FeatureKind::kContinuous;
};

struct DefenseConfig {
  NoiseSpec noise;
  int k = 1000;
};

struct ThresholdConfig {
  HsjConfig hsj;
  int folds = 2;
};

struct RandomNoiseConfig {
  ScoreConfig score;
  int folds = 2;
};

struct FgsConfig {
  std::vector<double> epsilons;
};

struct AttackSelection {
  AdversaryMode mode = AdversaryMode::kStrong;
  bool gap = true;
  std::optional<ThresholdConfig> threshold;
  std::optional<RandomNoiseConfig> random_noise;
  std::optional<SubstituteConfig> substitute;
  std::optional<FgsConfig> fgs;
};

enum class SweepAttack { kGap, kThreshold, kRandomNoise };

struct SweepConfig {
  std::vector<double> sigma2;  // strictly ascending
  int k = 100;
  SweepAttack attack = SweepAttack::kRandomNoise;
};

struct OutputConfig {
  std::string report;   // empty: not written
  std::string csv_dir;  // empty: no CSV exports
  std::string model;    // empty: trained model not saved
};

struct ExperimentConfig {
  uint64_t seed = 0;
  int threads = 1;
  DatasetConfig dataset;
  int member_count = 200;
  int nonmember_count = 200;
  ModelSpec model;      // seed is taken from the master seed
  std::string weights;  // load instead of training when set
  TrainConfig train;
  std::optional<DefenseConfig> defense;  // nullopt: defense-free
  AttackSelection attacks;
  std::optional<SweepConfig> sweep;
  OutputConfig output;
};

// Strict parse: unknown keys and wrong types raise ConfigError naming the key
// path. Missing keys take the defaults above.
ExperimentConfig ParseConfig(const nlohmann::json& doc);
ExperimentConfig LoadConfig(const std::string& path);
nlohmann::json ConfigToJson(const ExperimentConfig& config);
void ValidateConfig(const ExperimentConfig& config);

struct RunOptions {
  bool attacks = true;
  bool sweep = true;
  bool fits = true;
};

// Runs the configured stages and returns the report. Writes the report and
// CSV exports when the config names output paths. On a stage failure the
// partial report (status "failed") is written and StageError thrown.
nlohmann::json RunExperiment(const ExperimentConfig& config,
                             const RunOptions& options = {});

// Adds h1 and h2 fits of the report's sweep table under "fits". Observations
// use the measured ASR per row and the sigma2 = 0 row's TPR / FPR (the first
// row if no sigma2 = 0 row exists).
nlohmann::json FitAsrReport(nlohmann::json report);

// Copy of the report without its wall-clock section.
nlohmann::json WithoutTiming(nlohmann::json report);

void WriteJson(const nlohmann::json& doc, const std::string& path);
nlohmann::json ReadJson(const std::string& path);

// Entry point of ldl_lab. Returns 0 on success, 1 on usage or validation
// errors, 2 on runtime failures.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace ldl

#endif  // LDL_HARNESS_H_
