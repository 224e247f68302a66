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

// Membership-verdict statistics and the attack-success-rate model under
// smoothing.
//
//   ASR      = (TPR + TNR) / 2
//   ASR_gap  = 0.5 + (Acc_mem - Acc_nonmem) / 2
//   ASR_LDL  = 0.5 + (1 - h(sigma2)) (TPR - FPR) / 2
//
// with h1(s) = 1 - exp(-alpha s) and h2(s) = L / (1 + exp(-beta (s - c_h))),
// h clamped to [0, 1].

#ifndef LDL_METRICS_H_
#define LDL_METRICS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ldl {

struct ConfusionStats {
  int64_t tp = 0;  // members judged member
  int64_t fn = 0;  // members judged nonmember
  int64_t tn = 0;  // nonmembers judged nonmember
  int64_t fp = 0;  // nonmembers judged member

  int64_t members() const { return tp + fn; }
  int64_t nonmembers() const { return tn + fp; }
};

struct Rates {
  double tpr = 0.0;
  double tnr = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

Rates ComputeRates(const ConfusionStats& stats);

double Asr(double tpr, double tnr);
double AsrGap(double acc_member, double acc_nonmember);

enum class HFamily { kH1, kH2 };

std::string HFamilyName(HFamily family);

struct HCurve {
  HFamily family = HFamily::kH1;
  double alpha = 1.0;  // h1
  double big_l = 1.0;  // h2 amplitude
  double beta = 1.0;   // h2 slope
  double c_h = 0.0;    // h2 logistic center

  static HCurve H1(double alpha) { return {HFamily::kH1, alpha, 1, 1, 0}; }
  static HCurve H2(double big_l, double beta, double c_h) {
    return {HFamily::kH2, 1, big_l, beta, c_h};
  }
  // Reference fits of the two families.
  static HCurve ReferenceH1() { return H1(4.88); }
  static HCurve ReferenceH2() { return H2(1.34, 12.93, 0.1); }

  void Validate() const;
};

// Unclamped family value.
double HRaw(const HCurve& curve, double sigma2);
// HRaw clamped to [0, 1]. Throws ArgumentError for sigma2 < 0.
double HEval(const HCurve& curve, double sigma2);

double AsrLdl(double tpr, double fpr, const HCurve& curve, double sigma2);

struct AsrObservation {
  double sigma2 = 0.0;
  double asr = 0.5;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct FitOptions {
  int max_iterations = 500;
  // Relative decrease in the sum of squares below which a start has converged.
  double tolerance = 1e-14;
};

struct FitResult {
  HCurve curve;
  double residual_norm = 0.0;  // sqrt of the sum of squared residuals
  // Every observation has TPR == FPR, which leaves the curve unidentifiable.
  bool degenerate = false;
  int best_start = 0;
  int iterations = 0;
  std::vector<double> start_residuals;  // residual norm at each start point
};

// Least-squares fit of h to measured ASR via Levenberg-Marquardt in log
// parameter space, from 8 fixed starting points; keeps the lowest residual
// (ties to the lower start index). Throws ArgumentError on too few or
// repeated sigma2 values, FitError if no start converges.
FitResult FitH(std::span<const AsrObservation> observations, HFamily family,
               const FitOptions& options = {});

}  // namespace ldl

#endif  // LDL_METRICS_H_
