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

// Dense feedforward classifier with exact backpropagation.
//
// A model maps a feature vector x to logits z = W_L a_{L-1} + b_L where
// a_l = act(W_l a_{l-1} + b_l) and a_0 = x. Weight matrices are stored
// out x in, row-major, one per layer.

#ifndef LDL_MODEL_H_
#define LDL_MODEL_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldl/common.h"
#include "ldl/dataset.h"

namespace ldl {

enum class Activation { kRelu, kTanh };

std::string ActivationName(Activation a);
Activation ParseActivation(const std::string& name);

struct ModelSpec {
  // [d, h_1, ..., c]
  std::vector<int> layer_dims;
  // One per hidden layer.
  std::vector<Activation> activations;
  uint64_t seed = 0;

  void Validate() const;
  int input_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
  int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
};

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

class Model {
 public:
  // Glorot-uniform weights, zero biases, drawn from spec.seed.
  static Model Initialize(const ModelSpec& spec);

  // Validates shapes and finiteness.
  Model(ModelSpec spec, std::vector<Layer> layers);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  int input_dim() const { return spec_.input_dim(); }
  int num_classes() const { return spec_.num_classes(); }

  // Training accuracy recorded by Train(); absent for hand-built models.
  std::optional<double> train_accuracy() const { return train_accuracy_; }
  void set_train_accuracy(double a) { train_accuracy_ = a; }

  Vector Logits(std::span<const double> features) const;
  // One row of logits per input row.
  Matrix LogitsBatch(const Matrix& inputs) const;
  int Predict(std::span<const double> features) const;

  bool operator==(const Model& other) const;

 private:
  ModelSpec spec_;
  std::vector<Layer> layers_;
  std::optional<double> train_accuracy_;
};

// Lowest index wins ties.
int Argmax(std::span<const double> values);
int Argmax(const Vector& values);

// Max-shifted softmax. Throws DomainError on non-finite input.
std::vector<double> Softmax(std::span<const double> logits);

// -log(max(probs[true_class], 1e-12)). Throws DomainError unless probs is a
// distribution (entries in [0, 1], sum within 1e-9 of 1).
double CrossEntropy(std::span<const double> probs, int true_class);

inline constexpr double kProbabilityFloor = 1e-12;

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  double loss = 0.0;  // mean cross-entropy over the batch
};

// Analytic gradient of the mean cross-entropy over the batch.
Gradients ComputeGradients(const Model& model, const Matrix& inputs,
                           std::span<const int> labels);
Gradients ComputeGradients(const Model& model, std::span<const Sample> batch);

// Gradient of the cross-entropy at (features, label) with respect to the
// features.
std::vector<double> InputGradient(const Model& model,
                                  std::span<const double> features, int label);

enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double weight_decay = 0.0;
  Optimizer optimizer = Optimizer::kAdam;

  void Validate() const;
};

// Mini-batch training on the member set. Deterministic given spec.seed and
// config. Throws TrainingError if the loss becomes non-finite.
Model Train(const Dataset& members, const ModelSpec& spec,
            const TrainConfig& config);

// One plain SGD update of every parameter: w <- w * (1 - lr * wd) - lr * g.
void SgdStep(Model& model, const Gradients& grads, double learning_rate,
             double weight_decay);

double Accuracy(const Model& model, std::span<const Sample> samples);
double Accuracy(const Model& model, const Dataset& dataset);

// Signed distance (w.x + b) / ||w|| of x to the hyperplane w.x + b = 0.
double BoundaryDistanceLinear(std::span<const double> weights, double bias,
                              std::span<const double> x);

// Weight file.
nlohmann::json ModelToJson(const Model& model);
Model ModelFromJson(const nlohmann::json& doc);
void SaveModel(const Model& model, const std::string& path);
Model LoadModel(const std::string& path);

inline constexpr int kModelFormatVersion = 1;

}  // namespace ldl

#endif  // LDL_MODEL_H_
