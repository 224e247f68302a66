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

#ifndef LDL_DATASET_H_
#define LDL_DATASET_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldl/common.h"

namespace ldl {

enum class FeatureKind { kContinuous, kDiscrete };
enum class Membership { kMember, kNonmember };

struct Sample {
  // Identity of the sample within its source dataset. Stable across splits
  // and used to derive per-sample random streams.
  int64_t id = 0;
  std::vector<double> features;
  int label = 0;
  Membership membership = Membership::kNonmember;
};

struct Dataset {
  std::vector<Sample> samples;
  int dim = 0;
  int num_classes = 0;
  FeatureKind kind = FeatureKind::kContinuous;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  // Throws ArgumentError / DomainError if any sample breaks dim, num_classes
  // or the feature kind.
  void Validate() const;

  // Features stacked row-wise.
  Matrix FeatureMatrix() const;
  std::vector<int> Labels() const;
};

struct BlobsConfig {
  int dim = 2;
  int num_classes = 2;
  int num_samples = 100;
  double spread = 1.0;
  double label_noise = 0.0;
  uint64_t seed = 0;
};

// Isotropic Gaussian clusters, one per class, with centroids drawn uniformly
// in the unit cube from the seed. Samples are assigned to classes round-robin.
// A round(label_noise * n) subset of labels is redrawn uniformly over all
// classes. Features are min-max normalized to [0, 1] per dimension.
Dataset GenerateBlobs(const BlobsConfig& config);

// Reads a comma-separated file with a header row. The label column is named by
// `label_column`; every other column is a feature. Labels must be integers and
// are remapped to [0, c) in ascending order. Continuous features are min-max
// normalized; discrete features must be 0 or 1.
Dataset LoadCsv(const std::string& path, const std::string& label_column,
                FeatureKind kind);

// Rescales each feature column to [0, 1]. Constant columns map to 0.
void MinMaxNormalize(Dataset& dataset);

struct SplitSpec {
  int member_count = 1;
  int nonmember_count = 1;
  uint64_t seed = 0;
};

struct SplitResult {
  Dataset members;
  Dataset nonmembers;
  // Whatever was not drawn into either pool, in original order. Handy as an
  // adversary's auxiliary data since it is disjoint from both pools.
  Dataset remainder;
};

// Draws disjoint member and nonmember pools without replacement.
SplitResult Split(const Dataset& dataset, const SplitSpec& spec);

}  // namespace ldl

#endif  // LDL_DATASET_H_
