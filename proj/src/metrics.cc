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

#include "hetfed/metrics.h"

#include <algorithm>
#include <numeric>
#include <string>

namespace hetfed::metrics {

namespace {

void CheckBinary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ConfigError("scores and labels differ in length");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ConfigError("binary metric got label " + std::to_string(y));
    }
  }
}

std::vector<size_t> OrderBy(std::span<const double> scores, bool descending) {
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

template <typename BinaryMetric>
std::vector<std::optional<double>> OneVsRest(const Matrix &probs, std::span<const int> labels, BinaryMetric metric) {
  if (probs.rows() != labels.size()) {
    throw ConfigError("probability rows and labels differ in length");
  }
  std::vector<std::optional<double>> out;
  std::vector<double> scores(probs.rows());
  std::vector<int> binary(probs.rows());
  for (size_t c = 0; c < probs.cols(); ++c) {
    for (size_t r = 0; r < probs.rows(); ++r) {
      scores[r] = probs(r, c);
      binary[r] = labels[r] == static_cast<int>(c) ? 1 : 0;
    }
    out.push_back(metric(scores, binary));
  }
  return out;
}

}  // namespace

double Accuracy(std::span<const int> pred_labels, std::span<const int> clean_labels) {
  if (pred_labels.size() != clean_labels.size()) {
    throw ConfigError("prediction and label vectors differ in length");
  }
  if (pred_labels.empty()) {
    throw ConfigError("accuracy of an empty vector");
  }
  size_t hits = 0;
  for (size_t i = 0; i < pred_labels.size(); ++i) {
    hits += pred_labels[i] == clean_labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(pred_labels.size());
}

std::optional<double> RocAuc(std::span<const double> scores, std::span<const int> labels) {
  CheckBinary(scores, labels);
  const size_t pos = std::count(labels.begin(), labels.end(), 1);
  const size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    return std::nullopt;
  }
  // Rank-sum with average ranks over tie groups.
  const auto idx = OrderBy(scores, false);
  double pos_rank_sum = 0.0;
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t t = i; t < j; ++t) {
      if (labels[idx[t]] == 1) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::optional<double> PrAuc(std::span<const double> scores, std::span<const int> labels) {
  CheckBinary(scores, labels);
  const size_t pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0) {
    return std::nullopt;
  }
  const auto idx = OrderBy(scores, true);
  double ap = 0.0;
  double prev_recall = 0.0;
  size_t tp = 0;
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += labels[idx[j]] == 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::optional<double> MulticlassRocAuc(const Matrix &probs, std::span<const int> labels) {
  const auto per_class = OneVsRest(probs, labels, RocAuc);
  double sum = 0.0;
  for (const auto &v : per_class) {
    if (!v) return std::nullopt;
    sum += *v;
  }
  return per_class.empty() ? std::nullopt : std::optional<double>(sum / per_class.size());
}

std::optional<double> MulticlassPrAuc(const Matrix &probs, std::span<const int> labels) {
  const auto per_class = OneVsRest(probs, labels, PrAuc);
  double sum = 0.0;
  size_t count = 0;
  for (const auto &v : per_class) {
    if (v) {
      sum += *v;
      ++count;
    }
  }
  return count == 0 ? std::nullopt : std::optional<double>(sum / count);
}

std::vector<int> ArgmaxRows(const Matrix &m) {
  std::vector<int> out(m.rows());
  for (size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

ClientEval EvaluateProbs(const Matrix &probs, std::span<const int> clean_labels) {
  ClientEval e;
  e.accuracy = Accuracy(ArgmaxRows(probs), clean_labels);
  if (probs.cols() == 2) {
    std::vector<double> scores(probs.rows());
    for (size_t r = 0; r < probs.rows(); ++r) scores[r] = probs(r, 1);
    e.roc_auc = RocAuc(scores, clean_labels);
    e.pr_auc = PrAuc(scores, clean_labels);
  } else {
    e.roc_auc = MulticlassRocAuc(probs, clean_labels);
    e.pr_auc = MulticlassPrAuc(probs, clean_labels);
  }
  return e;
}

EvalResult Aggregate(std::map<int, ClientEval> per_client) {
  EvalResult out;
  if (per_client.empty()) {
    return out;
  }
  double roc = 0.0, pr = 0.0;
  size_t roc_n = 0, pr_n = 0;
  for (const auto &[id, e] : per_client) {
    out.accuracy += e.accuracy;
    out.mean_sl_loss += e.mean_sl_loss;
    if (e.roc_auc) {
      roc += *e.roc_auc;
      ++roc_n;
    }
    if (e.pr_auc) {
      pr += *e.pr_auc;
      ++pr_n;
    }
  }
  const double k = static_cast<double>(per_client.size());
  out.accuracy /= k;
  out.mean_sl_loss /= k;
  if (roc_n) out.roc_auc = roc / roc_n;
  if (pr_n) out.pr_auc = pr / pr_n;
  out.per_client = std::move(per_client);
  return out;
}

}  // namespace hetfed::metrics
