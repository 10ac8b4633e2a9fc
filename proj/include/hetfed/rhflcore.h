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

// Robust heterogeneous FL building blocks: dynamic label refinement, client
// confidence scoring and the confidence-weighted distillation loss.

#ifndef HETFED_RHFLCORE_H_
#define HETFED_RHFLCORE_H_

#include <span>
#include <vector>

#include "hetfed/common.h"
#include "hetfed/nnkernel.h"

namespace hetfed::rhfl {

struct DlrSchedule {
  double zeta = 10.0;
  long total_epochs = 1;
};

// Mixing weight s(t) = t / (zeta * T + t).
double DlrWeight(long epoch, const DlrSchedule &sched);

// (1 - s) * noisy + s * pred.
nn::ProbDist DlrRefine(const nn::ProbDist &noisy_onehot, const nn::ProbDist &pred, double s);

inline constexpr double kMinMeanLoss = 1e-9;

// Reciprocal of the mean per-sample SL loss. A mean at or below 1e-9 is
// clamped, giving 1e9.
double LabelQuality(std::span<const double> sl_losses);

// delta_sl / (update_ratio + 1).
double LearningEfficiency(double delta_sl, double update_ratio);

double ClientConfidenceEccr(double q_norm, double p);
double ClientConfidenceCcr(double q_norm, double delta_sl);

struct ConfidenceReport {
  int client_id = 0;
  double q = 0.0;
  double p = 0.0;
  double f = 0.0;
  double delta_sl = 0.0;
  double update_ratio = 0.0;
};

struct WeightVector {
  std::vector<double> weights;
  // Raw weights that went negative and were clamped to zero.
  int clamp_events = 0;
  // True when every F was zero and the uniform fallback was used.
  bool uniform_fallback = false;
};

WeightVector UniformWeights(size_t k);

// Raw w_k = 1/(K-1) + eta * F_k / sum|F|, clamped at 0, then normalized to
// sum to 1. All-zero F falls back to uniform 1/K. K = 1 returns {1}.
WeightVector ConfidenceWeights(std::span<const double> f, double eta_conf);

// Divides each Q by the sum of all Q.
std::vector<double> NormalizeQuality(std::span<const double> q);

enum class ConfidenceMode { kCcr, kEccr };

// Fills p and f of every report from its q, delta_sl and update_ratio.
void ScoreReports(std::vector<ConfidenceReport> &reports, ConfidenceMode mode);

// Peer weights for client `self`: self excluded, the rest renormalized to sum
// to 1. All-zero peers give all-zero weights.
std::vector<double> PeerWeights(std::span<const double> w, size_t self);

// Mean over public samples of sum_{j != self} W'_j * KL(softmax(peer_j / tau) || softmax(own / tau))
// with W' the renormalized peer weights.
double CollaborativeLoss(const Matrix &own_logits, std::span<const Matrix> all_logits, size_t self,
                         const WeightVector &w, double tau);

// Row-wise weighted mixture of tempered peer distributions. Descending
// KL(mixture || own) has the same gradient as CollaborativeLoss.
Matrix CollaborativeTarget(std::span<const Matrix> all_logits, size_t self, const WeightVector &w, double tau);

}  // namespace hetfed::rhfl

#endif  // HETFED_RHFLCORE_H_
