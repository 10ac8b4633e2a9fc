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

#include "hetfed/nnkernel.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>

namespace hetfed::nn {

namespace {

void CheckSameSize(size_t a, size_t b, const char *what) {
  if (a != b) {
    throw ConfigError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                      ")");
  }
}

double ClampedLog(double p) { return std::log(std::max(p, kProbFloor)); }

// Inputs seen by each layer, kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[l] is the input to layer l
  Matrix logits;
};

ForwardCache ForwardWithCache(const ModelParams &params, const Matrix &batch) {
  const auto &layers = params.layers();
  if (layers.empty()) {
    throw ConfigError("model has no layers");
  }
  if (batch.cols() != layers.front().in) {
    throw ConfigError("batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                      std::to_string(layers.front().in));
  }
  const auto &v = params.values();
  ForwardCache cache;
  cache.inputs.reserve(layers.size());
  Matrix current = batch;
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto [in, out] = layers[l];
    const double *w = v.data() + params.WeightOffset(l);
    const double *b = v.data() + params.BiasOffset(l);
    Matrix next(current.rows(), out);
    for (size_t r = 0; r < current.rows(); ++r) {
      auto x = current.row(r);
      auto y = next.row(r);
      for (size_t j = 0; j < out; ++j) {
        y[j] = b[j];
      }
      for (size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) {
          continue;
        }
        const double *wrow = w + i * out;
        for (size_t j = 0; j < out; ++j) {
          y[j] += xi * wrow[j];
        }
      }
      if (l + 1 < layers.size()) {
        for (double &e : y) {
          e = e > 0.0 ? e : 0.0;
        }
      }
    }
    cache.inputs.push_back(std::move(current));
    current = std::move(next);
  }
  cache.logits = std::move(current);
  return cache;
}

// Loss of one row and (optionally) its gradient w.r.t. the logits.
struct RowLoss {
  const LossSpec &spec;

  const Matrix &targets() const {
    return std::visit([](const auto &s) -> const Matrix & { return s.targets; }, spec);
  }
  double tau() const {
    return std::visit([](const auto &s) { return s.tau; }, spec);
  }

  double operator()(size_t row, std::span<const double> logits, std::span<double> dlogits) const {
    const double t = tau();
    const ProbDist q = SoftmaxT(logits, t);
    auto target_row = targets().row(row);
    ProbDist target{std::vector<double>(target_row.begin(), target_row.end())};
    const size_t c = q.size();
    const double tsum = std::accumulate(target.probs.begin(), target.probs.end(), 0.0);

    double loss = 0.0;
    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    auto add_ce_grad = [&](double weight) {
      for (size_t j = 0; j < c; ++j) {
        dlogits[j] += weight * (q[j] * tsum - target[j]) / t;
      }
    };

    if (const auto *sl = std::get_if<SlSpec>(&spec)) {
      const double ce = CeLoss(q, target);
      const double rce = RceLoss(q, target, sl->rce_log_floor);
      loss = sl->lambda * ce + sl->gamma * rce;
      add_ce_grad(sl->lambda);
      double mean_log = 0.0;
      std::vector<double> logt(c);
      for (size_t k = 0; k < c; ++k) {
        logt[k] = target[k] > 0.0 ? std::max(std::log(target[k]), sl->rce_log_floor) : sl->rce_log_floor;
        mean_log += q[k] * logt[k];
      }
      for (size_t j = 0; j < c; ++j) {
        dlogits[j] += -sl->gamma * q[j] * (logt[j] - mean_log) / t;
      }
    } else if (std::holds_alternative<CeSpec>(spec)) {
      loss = CeLoss(q, target);
      add_ce_grad(1.0);
    } else {
      loss = KlDiv(target, q);
      add_ce_grad(1.0);
    }
    return loss;
  }
};

void CheckTargets(const Matrix &batch, const Matrix &targets, size_t classes) {
  if (batch.rows() == 0) {
    throw ConfigError("empty batch");
  }
  if (targets.rows() != batch.rows() || targets.cols() != classes) {
    throw ConfigError("target matrix is " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
                      ", expected " + std::to_string(batch.rows()) + "x" + std::to_string(classes));
  }
}

}  // namespace

Architecture MakeMlp(size_t inputs, std::span<const size_t> hidden, size_t classes) {
  Architecture arch;
  size_t prev = inputs;
  for (size_t h : hidden) {
    arch.push_back({prev, h});
    prev = h;
  }
  arch.push_back({prev, classes});
  return arch;
}

size_t ParameterCount(const Architecture &arch) {
  size_t n = 0;
  for (const auto &l : arch) {
    n += l.in * l.out + l.out;
  }
  return n;
}

ModelParams::ModelParams(Architecture layers, std::vector<double> values)
    : layers_(std::move(layers)), values_(std::move(values)) {
  if (layers_.empty()) {
    throw ConfigError("model has no layers");
  }
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].in == 0 || layers_[l].out == 0) {
      throw ConfigError("layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && layers_[l].in != layers_[l - 1].out) {
      throw ConfigError("layer " + std::to_string(l) + " input does not match previous output");
    }
  }
  CheckSameSize(values_.size(), ParameterCount(layers_), "model parameters");
  for (double x : values_) {
    if (!std::isfinite(x)) {
      throw NumericError("non-finite model parameter");
    }
  }
}

ModelParams ModelParams::Zeros(Architecture layers) {
  const size_t n = ParameterCount(layers);
  return ModelParams(std::move(layers), std::vector<double>(n, 0.0));
}

ModelParams ModelParams::Init(Architecture layers, uint64_t seed) {
  ModelParams p = Zeros(std::move(layers));
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l < p.layers_.size(); ++l) {
    const auto [in, out] = p.layers_[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const size_t off = p.WeightOffset(l);
    for (size_t i = 0; i < in * out; ++i) {
      p.values_[off + i] = dist(rng);
    }
  }
  return p;
}

size_t ModelParams::WeightOffset(size_t layer) const {
  size_t off = 0;
  for (size_t l = 0; l < layer; ++l) {
    off += layers_[l].in * layers_[l].out + layers_[l].out;
  }
  return off;
}

ProbDist ProbDist::OneHot(size_t cls, size_t classes) {
  if (cls >= classes) {
    throw ConfigError("one-hot class " + std::to_string(cls) + " out of range");
  }
  ProbDist d{std::vector<double>(classes, 0.0)};
  d.probs[cls] = 1.0;
  return d;
}

ProbDist ProbDist::Uniform(size_t classes) {
  return ProbDist{std::vector<double>(classes, 1.0 / static_cast<double>(classes))};
}

void ProbDist::Validate(double tol) const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw NumericError("probability entry outside [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw NumericError("probabilities sum to " + std::to_string(sum));
  }
}

void Hyperparams::Validate() const {
  if (!(lambda > 0 && gamma > 0 && temperature > 0 && lr > 0 && zeta > 0 && eta_conf > 0)) {
    throw ConfigError("hyperparameters lambda, gamma, temperature, lr, zeta, eta_conf must be positive");
  }
  if (!(rce_log_floor < 0)) {
    throw ConfigError("rce_log_floor must be strictly negative");
  }
}

Matrix MlpForward(const ModelParams &params, const Matrix &batch) { return ForwardWithCache(params, batch).logits; }

ProbDist SoftmaxT(std::span<const double> logits, double tau) {
  if (!(tau > 0)) {
    throw ConfigError("temperature must be positive");
  }
  if (logits.empty()) {
    throw ConfigError("softmax of empty logits");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw NumericError("non-finite logit");
    }
    m = std::max(m, z);
  }
  m /= tau;
  ProbDist out{std::vector<double>(logits.size())};
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] / tau - m);
    sum += out.probs[i];
  }
  for (double &p : out.probs) {
    p /= sum;
  }
  return out;
}

Matrix SoftmaxRows(const Matrix &logits, double tau) {
  Matrix out(logits.rows(), logits.cols());
  for (size_t r = 0; r < logits.rows(); ++r) {
    auto p = SoftmaxT(logits.row(r), tau);
    std::copy(p.probs.begin(), p.probs.end(), out.row(r).begin());
  }
  return out;
}

double CeLoss(const ProbDist &pred, const ProbDist &target) {
  CheckSameSize(pred.size(), target.size(), "ce_loss");
  double loss = 0.0;
  for (size_t k = 0; k < pred.size(); ++k) {
    if (target[k] != 0.0) {
      loss -= target[k] * ClampedLog(pred[k]);
    }
  }
  return loss;
}

double RceLoss(const ProbDist &pred, const ProbDist &target, double floor) {
  CheckSameSize(pred.size(), target.size(), "rce_loss");
  if (!(floor < 0)) {
    throw ConfigError("rce log floor must be negative");
  }
  double loss = 0.0;
  for (size_t k = 0; k < pred.size(); ++k) {
    const double lt = target[k] > 0.0 ? std::max(std::log(target[k]), floor) : floor;
    loss -= pred[k] * lt;
  }
  return loss;
}

double SlLoss(const ProbDist &pred, const ProbDist &target, const Hyperparams &h) {
  return h.lambda * CeLoss(pred, target) + h.gamma * RceLoss(pred, target, h.rce_log_floor);
}

double KlDiv(const ProbDist &p, const ProbDist &q) {
  CheckSameSize(p.size(), q.size(), "kl_div");
  double kl = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) {
      kl += p[k] * (std::log(p[k]) - ClampedLog(q[k]));
    }
  }
  // Rounding can leave tiny negatives for identical inputs.
  return std::max(kl, 0.0);
}

GradResult Backward(const ModelParams &params, const Matrix &batch, const LossSpec &spec) {
  const RowLoss row_loss{spec};
  CheckTargets(batch, row_loss.targets(), params.output_dim());
  ForwardCache cache = ForwardWithCache(params, batch);
  const auto &layers = params.layers();
  const auto &v = params.values();
  const size_t n = batch.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  GradResult result;
  result.grad.assign(v.size(), 0.0);

  Matrix delta(n, params.output_dim());
  for (size_t r = 0; r < n; ++r) {
    result.loss += row_loss(r, cache.logits.row(r), delta.row(r));
    for (double &d : delta.row(r)) {
      d *= inv_n;
    }
  }
  result.loss *= inv_n;

  for (size_t l = layers.size(); l-- > 0;) {
    const auto [in, out] = layers[l];
    const Matrix &input = cache.inputs[l];
    double *gw = result.grad.data() + params.WeightOffset(l);
    double *gb = result.grad.data() + params.BiasOffset(l);
    const double *w = v.data() + params.WeightOffset(l);
    Matrix prev_delta(l > 0 ? n : 0, in);
    for (size_t r = 0; r < n; ++r) {
      auto x = input.row(r);
      auto d = delta.row(r);
      for (size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        double *gwrow = gw + i * out;
        for (size_t j = 0; j < out; ++j) {
          gwrow[j] += xi * d[j];
        }
      }
      for (size_t j = 0; j < out; ++j) {
        gb[j] += d[j];
      }
      if (l > 0) {
        auto pd = prev_delta.row(r);
        for (size_t i = 0; i < in; ++i) {
          // ReLU derivative: inputs to this layer are post-activation values.
          if (x[i] <= 0.0) {
            continue;
          }
          const double *wrow = w + i * out;
          double acc = 0.0;
          for (size_t j = 0; j < out; ++j) {
            acc += wrow[j] * d[j];
          }
          pd[i] = acc;
        }
      }
    }
    delta = std::move(prev_delta);
  }
  return result;
}

double EvaluateLoss(const ModelParams &params, const Matrix &batch, const LossSpec &spec) {
  const RowLoss row_loss{spec};
  CheckTargets(batch, row_loss.targets(), params.output_dim());
  const Matrix logits = MlpForward(params, batch);
  std::vector<double> scratch(params.output_dim());
  double loss = 0.0;
  for (size_t r = 0; r < batch.rows(); ++r) {
    loss += row_loss(r, logits.row(r), scratch);
  }
  return loss / static_cast<double>(batch.rows());
}

ModelParams SgdStep(const ModelParams &params, std::span<const double> grad, double alpha) {
  CheckSameSize(grad.size(), params.values().size(), "sgd_step");
  std::vector<double> next = params.values();
  for (size_t i = 0; i < next.size(); ++i) {
    next[i] -= alpha * grad[i];
  }
  return ModelParams(params.layers(), std::move(next));
}

double L2Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) {
    s += x * x;
  }
  return std::sqrt(s);
}

}  // namespace hetfed::nn
