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

#ifndef HETFED_METRICS_H_
#define HETFED_METRICS_H_

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "hetfed/common.h"

namespace hetfed::metrics {

double Accuracy(std::span<const int> pred_labels, std::span<const int> clean_labels);

/**
 * Mann-Whitney estimate of P(score_pos > score_neg), ties counted 1/2.
 * Returns nullopt when labels contain a single class.
 */
std::optional<double> RocAuc(std::span<const double> scores, std::span<const int> labels);

/**
 * Average precision: sum over distinct descending thresholds of
 * (R_n - R_{n-1}) * P_n. Tied scores form one threshold. Returns nullopt
 * when there are no positives.
 */
std::optional<double> PrAuc(std::span<const double> scores, std::span<const int> labels);

// Unweighted macro mean of one-vs-rest RocAuc. Returns nullopt when any
// class is absent from labels (or every sample belongs to one class).
std::optional<double> MulticlassRocAuc(const Matrix &probs, std::span<const int> labels);

// Macro mean of one-vs-rest PrAuc over classes present in labels.
std::optional<double> MulticlassPrAuc(const Matrix &probs, std::span<const int> labels);

// Row-wise argmax, first index wins on ties.
std::vector<int> ArgmaxRows(const Matrix &m);

struct ClientEval {
  double accuracy = 0.0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  double mean_sl_loss = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  double mean_sl_loss = 0.0;
  std::map<int, ClientEval> per_client;
};

// Evaluates class probabilities against clean labels.
ClientEval EvaluateProbs(const Matrix &probs, std::span<const int> clean_labels);

// Unweighted client means; absent metrics are skipped.
EvalResult Aggregate(std::map<int, ClientEval> per_client);

}  // namespace hetfed::metrics

#endif  // HETFED_METRICS_H_
