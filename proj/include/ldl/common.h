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

#ifndef LDL_COMMON_H_
#define LDL_COMMON_H_

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ldl {

// Row-major so that one row is one sample / one perturbed variant.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad counts, shapes, flags or out-of-range rates supplied by the caller.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Values outside the mathematical domain of an operation (non-finite logits,
// non-binary discrete features, zero weight vectors, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Unparseable files or documents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

// SplitMix64 finalizer. Used to turn structured keys into independent seeds.
uint64_t Mix64(uint64_t x);

// Derives an independent stream seed from a parent seed and a stage label.
uint64_t DeriveSeed(uint64_t seed, std::string_view label);
uint64_t DeriveSeed(uint64_t seed, uint64_t id);
uint64_t DeriveSeed(uint64_t seed, std::string_view label, uint64_t id);

// Runs body(i) for i in [0, n). Work is split into contiguous blocks over
// `threads` workers; with threads <= 1 everything runs on the caller.
void ParallelFor(int64_t n, int threads,
                 const std::function<void(int64_t)>& body);

}  // namespace ldl

#endif  // LDL_COMMON_H_
