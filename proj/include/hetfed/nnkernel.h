/**
 * Copyright 2026 The HetFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HETFED_NNKERNEL_H_
#define HETFED_NNKERNEL_H_

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "hetfed/common.h"

namespace hetfed::nn {

inline constexpr double kProbFloor = 1e-12;

struct LayerDims {
  size_t in = 0;
  size_t out = 0;
  bool operator==(const LayerDims &) const = default;
};

using Architecture = std::vector<LayerDims>;

// Builds {in -> h0 -> h1 -> ... -> classes}.
Architecture MakeMlp(size_t inputs, std::span<const size_t> hidden, size_t classes);

// Parameter count of an architecture: sum of in*out + out over layers.
size_t ParameterCount(const Architecture &arch);

// Flat parameter vector for one network. Per layer, the in x out weight
// block (row-major, so logits = x * W + b) is followed by the out biases.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(Architecture layers, std::vector<double> values);

  // Zero-valued parameters for the given architecture.
  static ModelParams Zeros(Architecture layers);

  // Uniform fan-based init in [-sqrt(6/(in+out)), +sqrt(6/(in+out))],
  // zero biases.
  static ModelParams Init(Architecture layers, uint64_t seed);

  const Architecture &layers() const { return layers_; }
  const std::vector<double> &values() const { return values_; }
  std::vector<double> &mutable_values() { return values_; }

  size_t input_dim() const { return layers_.front().in; }
  size_t output_dim() const { return layers_.back().out; }

  // Offset of layer l's weight block inside values().
  size_t WeightOffset(size_t layer) const;
  size_t BiasOffset(size_t layer) const { return WeightOffset(layer) + layers_[layer].in * layers_[layer].out; }

  bool operator==(const ModelParams &) const = default;

 private:
  Architecture layers_;
  std::vector<double> values_;
};

// Probability vector over C classes.
struct ProbDist {
  std::vector<double> probs;

  static ProbDist OneHot(size_t cls, size_t classes);
  static ProbDist Uniform(size_t classes);

  size_t size() const { return probs.size(); }
  double operator[](size_t i) const { return probs[i]; }

  // Throws NumericError unless entries lie in [0,1] and sum to 1 within tol.
  void Validate(double tol = 1e-9) const;
};

struct Hyperparams {
  double lambda = 0.4;
  double gamma = 0.9;
  double temperature = 4.0;
  double lr = 0.001;
  double zeta = 10.0;
  double eta_conf = 1.2;
  double rce_log_floor = -4.0;

  void Validate() const;
};

// Logits for every row of batch. Hidden layers use ReLU, the output is linear.
Matrix MlpForward(const ModelParams &params, const Matrix &batch);

ProbDist SoftmaxT(std::span<const double> logits, double tau);

// Row-wise tempered softmax.
Matrix SoftmaxRows(const Matrix &logits, double tau);

double CeLoss(const ProbDist &pred, const ProbDist &target);

// ln(target[k]) is taken as max(ln(target[k]), floor), which maps target
// zeros to floor.
double RceLoss(const ProbDist &pred, const ProbDist &target, double floor);

double SlLoss(const ProbDist &pred, const ProbDist &target, const Hyperparams &h);

double KlDiv(const ProbDist &p, const ProbDist &q);

// Loss selectors for Backward. Targets are N x C row distributions.
struct SlSpec {
  Matrix targets;
  double lambda = 0.4;
  double gamma = 0.9;
  double rce_log_floor = -4.0;
  double tau = 1.0;
};

struct CeSpec {
  Matrix targets;
  double tau = 1.0;
};

// KL(target_row || softmax(logits/tau)). With a mixture target this has the
// same gradient as the weighted sum of per-peer KL terms.
struct KlSpec {
  Matrix targets;
  double tau = 1.0;
};

using LossSpec = std::variant<SlSpec, CeSpec, KlSpec>;

struct GradResult {
  std::vector<double> grad;  // same layout as ModelParams::values
  double loss = 0.0;         // mean over the batch
};

// Mean loss over the batch and its gradient w.r.t. all parameters.
GradResult Backward(const ModelParams &params, const Matrix &batch, const LossSpec &spec);

// Mean loss only; shares the loss definition with Backward.
double EvaluateLoss(const ModelParams &params, const Matrix &batch, const LossSpec &spec);

ModelParams SgdStep(const ModelParams &params, std::span<const double> grad, double alpha);

double L2Norm(std::span<const double> v);

}  // namespace hetfed::nn

#endif  // HETFED_NNKERNEL_H_
