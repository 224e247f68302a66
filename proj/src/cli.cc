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


#include <exception>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ldl/harness.h"

namespace ldl {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Numbers rounded for the terminal; the report keeps full precision.
std::string Num(const nlohmann::json& v) {
  if (!v.is_number()) return v.dump();
  std::ostringstream s;
  s << std::setprecision(4) << v.get<double>();
  return s.str();
}

void PrintSummary(const nlohmann::json& report, std::ostream& out) {
  if (report["accuracy"].is_object()) {
    out << "accuracy member=" << Num(report["accuracy"]["member"])
        << " nonmember=" << Num(report["accuracy"]["nonmember"])
        << " asr_gap=" << Num(report["asr_gap"]) << '\n';
  }
  if (report["defense"].is_object()) {
    out << "defended accuracy member="
        << Num(report["defense"]["accuracy"]["member"])
        << " nonmember=" << Num(report["defense"]["accuracy"]["nonmember"])
        << '\n';
  }
  for (const auto& item : report["attacks"].items()) {
    if (item.value().is_object() && item.value().contains("asr")) {
      out << item.key() << " asr=" << Num(item.value()["asr"]) << '\n';
    }
  }
  if (report["attacks"]["fgs"].is_object()) {
    for (const auto& row : report["attacks"]["fgs"]["rows"]) {
      out << "fgs epsilon=" << Num(row["epsilon"])
          << " misclassified member=" << Num(row["member_misclassification"])
          << " nonmember=" << Num(row["nonmember_misclassification"]) << '\n';
    }
  }
  if (report["sweep"].is_object()) {
    for (const auto& row : report["sweep"]["rows"]) {
      out << "sigma2=" << Num(row["sigma2"]) << " asr=" << Num(row["asr"])
          << " acc_nonmember=" << Num(row["acc_nonmember"]) << '\n';
    }
  }
  if (report["fits"].is_object()) {
    for (const char* family : {"h1", "h2"}) {
      const auto& f = report["fits"][family];
      if (f.contains("params")) {
        out << family;
        for (const auto& p : f["params"].items()) {
          out << ' ' << p.key() << '=' << Num(p.value());
        }
        out << " residual=" << Num(f["residual_norm"]) << '\n';
      } else {
        out << family << " fit failed: " << f["error"] << '\n';
      }
    }
  }
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Label-only membership inference lab.", "ldl_lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::string output;
  std::optional<int> threads;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--seed", seed, "Override the config's master seed");
  app.add_option("--output", output,
                 "Report path (model path for 'train', in-place for 'fit-asr' "
                 "when omitted)");
  app.add_option("--threads", threads, "Worker threads for per-sample work")
      ->check(CLI::PositiveNumber);

  CLI::App* train = app.add_subcommand("train", "Train and save the target model");
  CLI::App* attack = app.add_subcommand("attack", "Train, then run the attacks");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Attacks, sweep and curve fits");
  CLI::App* sweep = app.add_subcommand("sweep", "sigma2 sweep plus curve fits");
  CLI::App* fit = app.add_subcommand("fit-asr", "Fit h1/h2 to a sweep report");
  std::string fit_input;
  fit->add_option("report", fit_input, "Report containing a sweep table")
      ->required();
  for (CLI::App* sub : {train, attack, evaluate, sweep, fit}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (fit->parsed()) {
      nlohmann::json report = ReadJson(fit_input);
      report = FitAsrReport(std::move(report));
      WriteJson(report, output.empty() ? fit_input : output);
      PrintSummary(report, out);
      return kExitOk;
    }

    if (config_path.empty()) {
      err << "error: --config is required\n\n" << app.help();
      return kExitUsage;
    }
    ExperimentConfig config = LoadConfig(config_path);
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    RunOptions options;
    if (train->parsed()) {
      options.attacks = false;
      options.sweep = false;
      if (!output.empty()) config.output.model = output;
      if (config.output.model.empty()) {
        err << "error: train needs --output or output.model\n";
        return kExitUsage;
      }
      config.output.report.clear();
      config.output.csv_dir.clear();
    } else {
      if (!output.empty()) config.output.report = output;
      if (attack->parsed()) options.sweep = false;
      if (sweep->parsed()) {
        options.attacks = false;
        if (!config.sweep) {
          err << "error: the config has no sweep section\n";
          return kExitUsage;
        }
      }
    }
    ValidateConfig(config);
    const nlohmann::json report = RunExperiment(config, options);
    PrintSummary(report, out);
    return kExitOk;
  } catch (const ArgumentError& e) {
    // Config problems and bad inputs detected before any stage ran.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StageError& e) {
    err << "error in stage " << e.stage() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace ldl
