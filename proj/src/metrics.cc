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

#include "ldl/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ldl/common.h"

namespace ldl {

namespace {

void CheckRate(double r, const char* what) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw ArgumentError(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

Rates ComputeRates(const ConfusionStats& stats) {
  if (stats.tp < 0 || stats.fn < 0 || stats.tn < 0 || stats.fp < 0) {
    throw ArgumentError("confusion counts must be nonnegative");
  }
  if (stats.members() == 0 || stats.nonmembers() == 0) {
    throw ArgumentError("rates need nonempty member and nonmember populations");
  }
  Rates r;
  r.tpr = static_cast<double>(stats.tp) / static_cast<double>(stats.members());
  r.tnr =
      static_cast<double>(stats.tn) / static_cast<double>(stats.nonmembers());
  r.fpr = 1.0 - r.tnr;
  r.fnr = 1.0 - r.tpr;
  return r;
}

double Asr(double tpr, double tnr) {
  CheckRate(tpr, "TPR");
  CheckRate(tnr, "TNR");
  return (tpr + tnr) / 2.0;
}

double AsrGap(double acc_member, double acc_nonmember) {
  CheckRate(acc_member, "member accuracy");
  CheckRate(acc_nonmember, "nonmember accuracy");
  return 0.5 + (acc_member - acc_nonmember) / 2.0;
}

std::string HFamilyName(HFamily family) {
  return family == HFamily::kH1 ? "h1" : "h2";
}

void HCurve::Validate() const {
  if (family == HFamily::kH1) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw ArgumentError("h1 needs alpha > 0");
    }
    return;
  }
  if (!(big_l > 0.0 && beta > 0.0 && c_h > 0.0) || !std::isfinite(big_l) ||
      !std::isfinite(beta) || !std::isfinite(c_h)) {
    throw ArgumentError("h2 needs L, beta, c_h > 0");
  }
}

double HRaw(const HCurve& curve, double sigma2) {
  if (!(sigma2 >= 0.0)) throw ArgumentError("h: sigma2 must be >= 0");
  if (curve.family == HFamily::kH1) {
    return 1.0 - std::exp(-curve.alpha * sigma2);
  }
  return curve.big_l / (1.0 + std::exp(-curve.beta * (sigma2 - curve.c_h)));
}

double HEval(const HCurve& curve, double sigma2) {
  return std::clamp(HRaw(curve, sigma2), 0.0, 1.0);
}

double AsrLdl(double tpr, double fpr, const HCurve& curve, double sigma2) {
  CheckRate(tpr, "TPR");
  CheckRate(fpr, "FPR");
  return 0.5 + (1.0 - HEval(curve, sigma2)) * (tpr - fpr) / 2.0;
}

namespace {

constexpr int kStarts = 8;
constexpr double kLogBound = 30.0;

HCurve CurveFromLog(HFamily family, const Eigen::VectorXd& theta) {
  if (family == HFamily::kH1) return HCurve::H1(std::exp(theta[0]));
  return HCurve::H2(std::exp(theta[0]), std::exp(theta[1]),
                    std::exp(theta[2]));
}

std::array<Eigen::VectorXd, kStarts> StartPoints(HFamily family) {
  std::array<Eigen::VectorXd, kStarts> starts;
  if (family == HFamily::kH1) {
    for (int i = 0; i < kStarts; ++i) {
      starts[i] = Eigen::VectorXd::Constant(1, std::log(0.25 * std::pow(2.0, i)));
    }
    return starts;
  }
  int i = 0;
  for (double big_l : {1.0, 1.5}) {
    for (double beta : {5.0, 20.0}) {
      for (double c_h : {0.05, 0.2}) {
        Eigen::VectorXd t(3);
        t << std::log(big_l), std::log(beta), std::log(c_h);
        starts[i++] = t;
      }
    }
  }
  return starts;
}

struct Problem {
  std::span<const AsrObservation> obs;
  HFamily family;

  Eigen::VectorXd Residuals(const Eigen::VectorXd& theta) const {
    const HCurve curve = CurveFromLog(family, theta);
    Eigen::VectorXd r(static_cast<Eigen::Index>(obs.size()));
    for (size_t i = 0; i < obs.size(); ++i) {
      r[i] = AsrLdl(obs[i].tpr, obs[i].fpr, curve, obs[i].sigma2) - obs[i].asr;
    }
    return r;
  }

  // d residual / d log-parameter. Zero where h is clamped.
  Eigen::MatrixXd Jacobian(const Eigen::VectorXd& theta) const {
    const HCurve curve = CurveFromLog(family, theta);
    Eigen::MatrixXd j(static_cast<Eigen::Index>(obs.size()), theta.size());
    for (size_t i = 0; i < obs.size(); ++i) {
      const double s = obs[i].sigma2;
      const double scale = -(obs[i].tpr - obs[i].fpr) / 2.0;
      const double raw = HRaw(curve, s);
      const bool clamped = raw > 1.0 || raw < 0.0;
      if (family == HFamily::kH1) {
        const double dh = curve.alpha * s * std::exp(-curve.alpha * s);
        j(i, 0) = clamped ? 0.0 : scale * dh;
        continue;
      }
      const double sig = 1.0 / (1.0 + std::exp(-curve.beta * (s - curve.c_h)));
      const double dsig = sig * (1.0 - sig);
      const double dl = curve.big_l * sig;
      const double db = curve.big_l * dsig * (s - curve.c_h) * curve.beta;
      const double dc = -curve.big_l * dsig * curve.beta * curve.c_h;
      j(i, 0) = clamped ? 0.0 : scale * dl;
      j(i, 1) = clamped ? 0.0 : scale * db;
      j(i, 2) = clamped ? 0.0 : scale * dc;
    }
    return j;
  }
};

struct StartOutcome {
  Eigen::VectorXd theta;
  double cost = 0.0;  // sum of squares
  bool converged = false;
  int iterations = 0;
};

StartOutcome LevenbergMarquardt(const Problem& problem, Eigen::VectorXd theta,
                                const FitOptions& options) {
  Eigen::VectorXd r = problem.Residuals(theta);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  StartOutcome out;
  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd j = problem.Jacobian(theta);
    const Eigen::VectorXd grad = j.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-15 || cost == 0.0) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd jtj = j.transpose() * j;
    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index k = 0; k < damped.rows(); ++k) {
        damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      }
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      Eigen::VectorXd candidate =
          (theta + step).cwiseMax(-kLogBound).cwiseMin(kLogBound);
      const Eigen::VectorXd r_new = problem.Residuals(candidate);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        const double rel = (cost - cost_new) / std::max(cost, 1e-300);
        theta = std::move(candidate);
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel < options.tolerance) out.converged = true;
        break;
      }
      lambda *= 2.0;
    }
    // No downhill step at any damping: theta is a local minimum to working
    // precision.
    if (!accepted) out.converged = true;
    if (out.converged) break;
  }
  out.theta = theta;
  out.cost = cost;
  return out;
}

}  // namespace

FitResult FitH(std::span<const AsrObservation> observations, HFamily family,
               const FitOptions& options) {
  const size_t needed = family == HFamily::kH1 ? 3 : 5;
  if (observations.size() < needed) {
    throw ArgumentError("fit_h: " + HFamilyName(family) + " needs at least " +
                        std::to_string(needed) + " observations");
  }
  std::vector<double> s2;
  bool degenerate = true;
  for (const AsrObservation& o : observations) {
    if (!(o.sigma2 >= 0.0) || !std::isfinite(o.asr)) {
      throw ArgumentError("fit_h: observations need sigma2 >= 0 and finite ASR");
    }
    CheckRate(o.tpr, "TPR");
    CheckRate(o.fpr, "FPR");
    s2.push_back(o.sigma2);
    if (o.tpr != o.fpr) degenerate = false;
  }
  std::sort(s2.begin(), s2.end());
  if (std::adjacent_find(s2.begin(), s2.end()) != s2.end()) {
    throw ArgumentError("fit_h: sigma2 values must be distinct");
  }

  const Problem problem{observations, family};
  const auto starts = StartPoints(family);
  FitResult result;
  double best_cost = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (int i = 0; i < kStarts; ++i) {
    result.start_residuals.push_back(
        std::sqrt(problem.Residuals(starts[i]).squaredNorm()));
    const StartOutcome o = LevenbergMarquardt(problem, starts[i], options);
    any_converged = any_converged || o.converged;
    if (o.cost < best_cost) {
      best_cost = o.cost;
      result.curve = CurveFromLog(family, o.theta);
      result.best_start = i;
      result.iterations = o.iterations;
    }
  }
  result.residual_norm = std::sqrt(best_cost);
  result.degenerate = degenerate;
  if (!any_converged) {
    throw FitError("fit_h: no start converged within " +
                       std::to_string(options.max_iterations) + " iterations",
                   result.residual_norm);
  }
  return result;
}

}  // namespace ldl
