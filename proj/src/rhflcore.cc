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

#include "hetfed/rhflcore.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hetfed::rhfl {

namespace {

void CheckShapes(std::span<const Matrix> all_logits, size_t self, size_t weights) {
  if (all_logits.empty() || self >= all_logits.size()) {
    throw ConfigError("collaborative loss: client index out of range");
  }
  if (weights != all_logits.size()) {
    throw ConfigError("collaborative loss: " + std::to_string(weights) + " weights for " +
                      std::to_string(all_logits.size()) + " clients");
  }
  const size_t rows = all_logits.front().rows();
  const size_t cols = all_logits.front().cols();
  for (const auto &m : all_logits) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ConfigError("collaborative loss: logit matrices differ in shape");
    }
  }
}

}  // namespace

double DlrWeight(long epoch, const DlrSchedule &sched) {
  if (epoch < 0) {
    throw ConfigError("DLR epoch must be non-negative");
  }
  if (!(sched.zeta > 0) || sched.total_epochs <= 0) {
    throw ConfigError("DLR schedule needs zeta > 0 and total_epochs > 0");
  }
  const double t = static_cast<double>(epoch);
  return t / (sched.zeta * static_cast<double>(sched.total_epochs) + t);
}

nn::ProbDist DlrRefine(const nn::ProbDist &noisy_onehot, const nn::ProbDist &pred, double s) {
  if (!(s >= 0.0 && s < 1.0)) {
    throw ConfigError("DLR weight " + std::to_string(s) + " outside [0,1)");
  }
  if (noisy_onehot.size() != pred.size()) {
    throw ConfigError("DLR inputs differ in length");
  }
  nn::ProbDist out{std::vector<double>(pred.size())};
  for (size_t k = 0; k < pred.size(); ++k) {
    out.probs[k] = (1.0 - s) * noisy_onehot[k] + s * pred[k];
  }
  return out;
}

double LabelQuality(std::span<const double> sl_losses) {
  if (sl_losses.empty()) {
    throw ConfigError("label quality of an empty loss vector");
  }
  const double mean = std::accumulate(sl_losses.begin(), sl_losses.end(), 0.0) / sl_losses.size();
  return 1.0 / std::max(mean, kMinMeanLoss);
}

double LearningEfficiency(double delta_sl, double update_ratio) {
  if (!(update_ratio >= 0.0)) {
    throw ConfigError("update ratio must be non-negative");
  }
  return delta_sl / (update_ratio + 1.0);
}

double ClientConfidenceEccr(double q_norm, double p) { return q_norm * p; }

double ClientConfidenceCcr(double q_norm, double delta_sl) { return q_norm * delta_sl; }

WeightVector UniformWeights(size_t k) {
  WeightVector w;
  w.weights.assign(k, 1.0 / static_cast<double>(k));
  return w;
}

WeightVector ConfidenceWeights(std::span<const double> f, double eta_conf) {
  const size_t k = f.size();
  if (k == 0) {
    throw ConfigError("confidence weights need at least one client");
  }
  if (k == 1) {
    return UniformWeights(1);
  }
  double abs_sum = 0.0;
  for (double x : f) {
    if (!std::isfinite(x)) {
      throw NumericError("non-finite client confidence");
    }
    abs_sum += std::abs(x);
  }
  if (abs_sum == 0.0) {
    WeightVector w = UniformWeights(k);
    w.uniform_fallback = true;
    return w;
  }
  WeightVector w;
  w.weights.resize(k);
  const double base = 1.0 / static_cast<double>(k - 1);
  double total = 0.0;
  for (size_t i = 0; i < k; ++i) {
    double raw = base + eta_conf * f[i] / abs_sum;
    if (raw < 0.0) {
      raw = 0.0;
      ++w.clamp_events;
    }
    w.weights[i] = raw;
    total += raw;
  }
  if (total <= 0.0) {
    WeightVector u = UniformWeights(k);
    u.clamp_events = w.clamp_events;
    u.uniform_fallback = true;
    return u;
  }
  for (double &x : w.weights) {
    x /= total;
  }
  return w;
}

std::vector<double> NormalizeQuality(std::span<const double> q) {
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  std::vector<double> out(q.size(), 0.0);
  if (total > 0.0) {
    for (size_t i = 0; i < q.size(); ++i) out[i] = q[i] / total;
  }
  return out;
}

void ScoreReports(std::vector<ConfidenceReport> &reports, ConfidenceMode mode) {
  std::vector<double> q;
  for (const auto &r : reports) q.push_back(r.q);
  const auto q_norm = NormalizeQuality(q);
  for (size_t i = 0; i < reports.size(); ++i) {
    auto &r = reports[i];
    r.p = LearningEfficiency(r.delta_sl, r.update_ratio);
    r.f = mode == ConfidenceMode::kEccr ? ClientConfidenceEccr(q_norm[i], r.p)
                                        : ClientConfidenceCcr(q_norm[i], r.delta_sl);
  }
}

std::vector<double> PeerWeights(std::span<const double> w, size_t self) {
  std::vector<double> out(w.size(), 0.0);
  double total = 0.0;
  for (size_t j = 0; j < w.size(); ++j) {
    if (j != self) total += w[j];
  }
  if (total > 0.0) {
    for (size_t j = 0; j < w.size(); ++j) {
      if (j != self) out[j] = w[j] / total;
    }
  }
  return out;
}

double CollaborativeLoss(const Matrix &own_logits, std::span<const Matrix> all_logits, size_t self,
                         const WeightVector &w, double tau) {
  CheckShapes(all_logits, self, w.weights.size());
  if (own_logits.rows() != all_logits.front().rows() || own_logits.cols() != all_logits.front().cols()) {
    throw ConfigError("collaborative loss: own logits differ in shape");
  }
  const auto peer_w = PeerWeights(w.weights, self);
  const size_t n = own_logits.rows();
  if (n == 0) {
    throw ConfigError("collaborative loss over an empty public set");
  }
  double total = 0.0;
  for (size_t r = 0; r < n; ++r) {
    const nn::ProbDist own = nn::SoftmaxT(own_logits.row(r), tau);
    for (size_t j = 0; j < all_logits.size(); ++j) {
      if (j == self || peer_w[j] == 0.0) continue;
      total += peer_w[j] * nn::KlDiv(nn::SoftmaxT(all_logits[j].row(r), tau), own);
    }
  }
  return total / static_cast<double>(n);
}

Matrix CollaborativeTarget(std::span<const Matrix> all_logits, size_t self, const WeightVector &w, double tau) {
  CheckShapes(all_logits, self, w.weights.size());
  const auto peer_w = PeerWeights(w.weights, self);
  const Matrix &shape = all_logits.front();
  Matrix target(shape.rows(), shape.cols(), 0.0);
  for (size_t j = 0; j < all_logits.size(); ++j) {
    if (j == self || peer_w[j] == 0.0) continue;
    for (size_t r = 0; r < shape.rows(); ++r) {
      const nn::ProbDist p = nn::SoftmaxT(all_logits[j].row(r), tau);
      auto t = target.row(r);
      for (size_t c = 0; c < p.size(); ++c) t[c] += peer_w[j] * p[c];
    }
  }
  return target;
}

}  // namespace hetfed::rhfl
