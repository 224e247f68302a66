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

#include "ldl/model.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace ldl {

std::string ActivationName(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation ParseActivation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ArgumentError("unknown activation '" + name + "'");
}

void ModelSpec::Validate() const {
  if (layer_dims.size() < 2) {
    throw ArgumentError("model needs at least an input and an output dim");
  }
  for (int d : layer_dims) {
    if (d <= 0) throw ArgumentError("model layer dims must be positive");
  }
  if (activations.size() != layer_dims.size() - 2) {
    throw ArgumentError("model needs one activation per hidden layer (" +
                        std::to_string(layer_dims.size() - 2) + "), got " +
                        std::to_string(activations.size()));
  }
}

Model Model::Initialize(const ModelSpec& spec) {
  spec.Validate();
  Rng rng(DeriveSeed(spec.seed, "model/init"));
  std::vector<Layer> layers;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int fan_in = spec.layer_dims[l];
    const int fan_out = spec.layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) layer.weights(i, j) = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return Model(spec, std::move(layers));
}

Model::Model(ModelSpec spec, std::vector<Layer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.Validate();
  if (static_cast<int>(layers_.size()) != spec_.num_layers()) {
    throw ArgumentError("model has " + std::to_string(layers_.size()) +
                        " layers, spec declares " +
                        std::to_string(spec_.num_layers()));
  }
  for (int l = 0; l < spec_.num_layers(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.weights.rows() != spec_.layer_dims[l + 1] ||
        layer.weights.cols() != spec_.layer_dims[l] ||
        layer.bias.size() != spec_.layer_dims[l + 1]) {
      throw ArgumentError("layer " + std::to_string(l) +
                          " shape does not match layer_dims");
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw DomainError("layer " + std::to_string(l) +
                        " has non-finite parameters");
    }
  }
}

namespace {

void ApplyActivation(Activation a, Matrix& z) {
  if (a == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Derivative of the activation expressed through its output.
Matrix ActivationDerivative(Activation a, const Matrix& out) {
  if (a == Activation::kRelu) {
    return (out.array() > 0.0).cast<double>().matrix();
  }
  return (1.0 - out.array().square()).matrix();
}

void CheckInputDim(const Model& model, Eigen::Index cols) {
  if (cols != model.input_dim()) {
    throw ArgumentError("input has " + std::to_string(cols) +
                        " features, model expects " +
                        std::to_string(model.input_dim()));
  }
}

}  // namespace

Matrix Model::LogitsBatch(const Matrix& inputs) const {
  CheckInputDim(*this, inputs.cols());
  Matrix a = inputs;
  for (int l = 0; l < spec_.num_layers(); ++l) {
    Matrix z = a * layers_[l].weights.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    if (l + 1 < spec_.num_layers()) ApplyActivation(spec_.activations[l], z);
    a = std::move(z);
  }
  return a;
}

Vector Model::Logits(std::span<const double> features) const {
  CheckInputDim(*this, static_cast<Eigen::Index>(features.size()));
  Vector a = Eigen::Map<const Vector>(features.data(),
                                      static_cast<Eigen::Index>(features.size()));
  for (int l = 0; l < spec_.num_layers(); ++l) {
    Vector z = layers_[l].weights * a + layers_[l].bias;
    if (l + 1 < spec_.num_layers()) {
      if (spec_.activations[l] == Activation::kRelu) {
        z = z.cwiseMax(0.0);
      } else {
        z = z.array().tanh().matrix();
      }
    }
    a = std::move(z);
  }
  return a;
}

int Model::Predict(std::span<const double> features) const {
  return Argmax(Logits(features));
}

bool Model::operator==(const Model& other) const {
  if (spec_.layer_dims != other.spec_.layer_dims ||
      spec_.activations != other.spec_.activations ||
      layers_.size() != other.layers_.size()) {
    return false;
  }
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weights != other.layers_[l].weights ||
        layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

int Argmax(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("argmax of an empty vector");
  int best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

int Argmax(const Vector& values) {
  return Argmax(std::span<const double>(values.data(), values.size()));
}

std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("softmax of an empty vector");
  for (double z : logits) {
    if (!std::isfinite(z)) throw DomainError("softmax: non-finite logit");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double CrossEntropy(std::span<const double> probs, int true_class) {
  if (true_class < 0 || static_cast<size_t>(true_class) >= probs.size()) {
    throw ArgumentError("cross_entropy: class index out of range");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DomainError("cross_entropy: probability outside [0, 1]");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("cross_entropy: probabilities do not sum to 1");
  }
  return -std::log(std::max(probs[true_class], kProbabilityFloor));
}

namespace {

// Row-wise max-shifted softmax.
Matrix SoftmaxRows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double shift = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - shift).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct ForwardTrace {
  // activations[0] is the input; activations[L] the logits.
  std::vector<Matrix> activations;
};

ForwardTrace Trace(const Model& model, const Matrix& inputs) {
  CheckInputDim(model, inputs.cols());
  const ModelSpec& spec = model.spec();
  ForwardTrace trace;
  trace.activations.reserve(spec.num_layers() + 1);
  trace.activations.push_back(inputs);
  for (int l = 0; l < spec.num_layers(); ++l) {
    Matrix z = trace.activations.back() * model.layers()[l].weights.transpose();
    z.rowwise() += model.layers()[l].bias.transpose();
    if (l + 1 < spec.num_layers()) ApplyActivation(spec.activations[l], z);
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

// Returns dLoss/dInput and fills parameter gradients when `grads` is set.
Matrix Backward(const Model& model, const ForwardTrace& trace,
                std::span<const int> labels, Gradients* grads) {
  const ModelSpec& spec = model.spec();
  const int num_layers = spec.num_layers();
  const Eigen::Index n = trace.activations[0].rows();
  const Matrix probs = SoftmaxRows(trace.activations.back());

  double loss = 0.0;
  Matrix delta = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= spec.num_classes()) {
      throw ArgumentError("label " + std::to_string(y) + " out of range");
    }
    loss -= std::log(std::max(probs(i, y), kProbabilityFloor));
    delta(i, y) -= 1.0;
  }
  delta /= static_cast<double>(n);

  if (grads != nullptr) {
    grads->loss = loss / static_cast<double>(n);
    grads->weights.assign(num_layers, Matrix());
    grads->biases.assign(num_layers, Vector());
  }
  for (int l = num_layers - 1; l >= 0; --l) {
    if (grads != nullptr) {
      grads->weights[l] = delta.transpose() * trace.activations[l];
      grads->biases[l] = delta.colwise().sum().transpose();
    }
    Matrix upstream = delta * model.layers()[l].weights;
    if (l > 0) {
      upstream.array() *=
          ActivationDerivative(spec.activations[l - 1], trace.activations[l])
              .array();
    }
    delta = std::move(upstream);
  }
  return delta;
}

Matrix StackFeatures(std::span<const Sample> batch, int dim) {
  Matrix x(static_cast<Eigen::Index>(batch.size()), dim);
  for (size_t i = 0; i < batch.size(); ++i) {
    if (static_cast<int>(batch[i].features.size()) != dim) {
      throw ArgumentError("sample " + std::to_string(batch[i].id) +
                          " has the wrong feature count");
    }
    for (int j = 0; j < dim; ++j) x(i, j) = batch[i].features[j];
  }
  return x;
}

}  // namespace

Gradients ComputeGradients(const Model& model, const Matrix& inputs,
                           std::span<const int> labels) {
  if (inputs.rows() == 0) throw ArgumentError("gradients: empty batch");
  if (static_cast<size_t>(inputs.rows()) != labels.size()) {
    throw ArgumentError("gradients: label count does not match batch size");
  }
  Gradients grads;
  Backward(model, Trace(model, inputs), labels, &grads);
  return grads;
}

Gradients ComputeGradients(const Model& model, std::span<const Sample> batch) {
  if (batch.empty()) throw ArgumentError("gradients: empty batch");
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const Sample& s : batch) labels.push_back(s.label);
  return ComputeGradients(model, StackFeatures(batch, model.input_dim()),
                          labels);
}

std::vector<double> InputGradient(const Model& model,
                                  std::span<const double> features,
                                  int label) {
  CheckInputDim(model, static_cast<Eigen::Index>(features.size()));
  Matrix x(1, static_cast<Eigen::Index>(features.size()));
  for (size_t j = 0; j < features.size(); ++j) x(0, j) = features[j];
  const int labels[1] = {label};
  const Matrix g = Backward(model, Trace(model, x), labels, nullptr);
  return std::vector<double>(g.data(), g.data() + g.size());
}

void TrainConfig::Validate() const {
  if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw ArgumentError("train: learning_rate must be > 0");
  }
  if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) {
    throw ArgumentError("train: weight_decay must be >= 0");
  }
}

void SgdStep(Model& model, const Gradients& grads, double learning_rate,
             double weight_decay) {
  const double shrink = 1.0 - learning_rate * weight_decay;
  auto& layers = model.mutable_layers();
  for (size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights = layers[l].weights * shrink - learning_rate * grads.weights[l];
    layers[l].bias = layers[l].bias * shrink - learning_rate * grads.biases[l];
  }
}

namespace {

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
  int64_t step = 0;

  explicit AdamState(const Model& model) {
    for (const Layer& layer : model.layers()) {
      m_w.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
      v_w.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
      m_b.push_back(Vector::Zero(layer.bias.size()));
      v_b.push_back(Vector::Zero(layer.bias.size()));
    }
  }

  template <typename Param, typename Grad, typename Moment>
  static void Update(Param& theta, const Grad& raw_grad, Moment& m, Moment& v,
                     double lr, double wd, double c1, double c2) {
    const auto g = (raw_grad + wd * theta).eval();
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = (kBeta2 * v.array() + (1.0 - kBeta2) * g.array().square()).matrix();
    theta.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEpsilon);
  }

  void Apply(Model& model, const Gradients& grads, double lr, double wd) {
    ++step;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    auto& layers = model.mutable_layers();
    for (size_t l = 0; l < layers.size(); ++l) {
      Update(layers[l].weights, grads.weights[l], m_w[l], v_w[l], lr, wd, c1,
             c2);
      Update(layers[l].bias, grads.biases[l], m_b[l], v_b[l], lr, wd, c1, c2);
    }
  }
};

}  // namespace

Model Train(const Dataset& members, const ModelSpec& spec,
            const TrainConfig& config) {
  config.Validate();
  spec.Validate();
  if (members.empty()) throw ArgumentError("train: empty dataset");
  if (members.dim != spec.input_dim()) {
    throw ArgumentError("train: dataset dim " + std::to_string(members.dim) +
                        " != model input dim " +
                        std::to_string(spec.input_dim()));
  }
  if (members.num_classes > spec.num_classes()) {
    throw ArgumentError("train: dataset has more classes than the model");
  }

  Model model = Model::Initialize(spec);
  AdamState adam(model);
  Rng shuffle_rng(DeriveSeed(spec.seed, "model/shuffle"));
  const Matrix all_x = members.FeatureMatrix();
  const std::vector<int> all_y = members.Labels();
  std::vector<Eigen::Index> order(members.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      Matrix x(static_cast<Eigen::Index>(end - start), all_x.cols());
      std::vector<int> y(end - start);
      for (size_t i = start; i < end; ++i) {
        x.row(i - start) = all_x.row(order[i]);
        y[i - start] = all_y[order[i]];
      }
      const Gradients grads = ComputeGradients(model, x, y);
      if (!std::isfinite(grads.loss)) {
        throw TrainingError(
            "training diverged: non-finite loss at epoch " +
                std::to_string(epoch + 1),
            epoch + 1);
      }
      if (config.optimizer == Optimizer::kSgd) {
        SgdStep(model, grads, config.learning_rate, config.weight_decay);
      } else {
        adam.Apply(model, grads, config.learning_rate, config.weight_decay);
      }
    }
    for (const Layer& layer : model.layers()) {
      if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
        throw TrainingError("training diverged: non-finite parameters at epoch " +
                                std::to_string(epoch + 1),
                            epoch + 1);
      }
    }
  }
  model.set_train_accuracy(Accuracy(model, members));
  return model;
}

double Accuracy(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) throw ArgumentError("accuracy: empty dataset");
  const Matrix logits =
      model.LogitsBatch(StackFeatures(samples, model.input_dim()));
  int64_t correct = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Vector row = logits.row(static_cast<Eigen::Index>(i)).transpose();
    if (Argmax(row) == samples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double Accuracy(const Model& model, const Dataset& dataset) {
  return Accuracy(model, std::span<const Sample>(dataset.samples));
}

double BoundaryDistanceLinear(std::span<const double> weights, double bias,
                              std::span<const double> x) {
  if (weights.size() != x.size()) {
    throw ArgumentError("boundary_distance_linear: dimension mismatch");
  }
  double dot = 0.0;
  double norm2 = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    dot += weights[i] * x[i];
    norm2 += weights[i] * weights[i];
  }
  if (!(norm2 > 0.0)) {
    throw DomainError("boundary_distance_linear: zero weight vector");
  }
  return (dot + bias) / std::sqrt(norm2);
}

nlohmann::json ModelToJson(const Model& model) {
  nlohmann::json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["layer_dims"] = model.spec().layer_dims;
  std::vector<std::string> acts;
  for (Activation a : model.spec().activations) acts.push_back(ActivationName(a));
  doc["activations"] = acts;
  doc["seed"] = model.spec().seed;
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const Layer& layer : model.layers()) {
    weights.push_back(std::vector<double>(
        layer.weights.data(), layer.weights.data() + layer.weights.size()));
    biases.push_back(std::vector<double>(layer.bias.data(),
                                         layer.bias.data() + layer.bias.size()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  if (model.train_accuracy()) {
    doc["train_accuracy"] = *model.train_accuracy();
  } else {
    doc["train_accuracy"] = nullptr;
  }
  return doc;
}

Model ModelFromJson(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw FormatError("unsupported weight file format_version");
    }
    ModelSpec spec;
    spec.layer_dims = doc.at("layer_dims").get<std::vector<int>>();
    for (const auto& a : doc.at("activations")) {
      spec.activations.push_back(ParseActivation(a.get<std::string>()));
    }
    spec.seed = doc.at("seed").get<uint64_t>();
    spec.Validate();
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (static_cast<int>(weights.size()) != spec.num_layers() ||
        static_cast<int>(biases.size()) != spec.num_layers()) {
      throw FormatError("weight file layer count does not match layer_dims");
    }
    std::vector<Layer> layers;
    for (int l = 0; l < spec.num_layers(); ++l) {
      const auto w = weights[l].get<std::vector<double>>();
      const auto b = biases[l].get<std::vector<double>>();
      const int rows = spec.layer_dims[l + 1];
      const int cols = spec.layer_dims[l];
      if (static_cast<int>(w.size()) != rows * cols ||
          static_cast<int>(b.size()) != rows) {
        throw FormatError("weight file layer " + std::to_string(l) +
                          " has the wrong number of entries");
      }
      Layer layer{Matrix(rows, cols), Vector(rows)};
      std::copy(w.begin(), w.end(), layer.weights.data());
      std::copy(b.begin(), b.end(), layer.bias.data());
      layers.push_back(std::move(layer));
    }
    Model model(std::move(spec), std::move(layers));
    if (doc.contains("train_accuracy") && !doc["train_accuracy"].is_null()) {
      model.set_train_accuracy(doc["train_accuracy"].get<double>());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed weight file: ") + e.what());
  }
}

void SaveModel(const Model& model, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write weight file '" + path + "'");
  out << ModelToJson(model).dump(1) << "\n";
}

Model LoadModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open weight file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("weight file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return ModelFromJson(doc);
}

}  // namespace ldl
