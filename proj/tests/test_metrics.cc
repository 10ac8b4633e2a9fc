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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hetfed/metrics.h"
#include "oracles.h"

namespace hetfed::metrics {
namespace {

TEST(Accuracy, Examples) {
  const std::vector<int> a{0, 1, 2, 1};
  EXPECT_EQ(Accuracy(a, a), 1.0);
  EXPECT_EQ(Accuracy(std::vector<int>{1, 0}, std::vector<int>{0, 1}), 0.0);
  EXPECT_EQ(Accuracy(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 0, 0}), 0.75);
  EXPECT_THROW(Accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), ConfigError);
  EXPECT_THROW(Accuracy(std::vector<int>{}, std::vector<int>{}), ConfigError);
}

TEST(Accuracy, PermutationInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int it = 0; it < 200; ++it) {
    std::vector<int> p(30), y(30);
    for (int i = 0; i < 30; ++i) {
      p[i] = cls(rng);
      y[i] = cls(rng);
    }
    std::vector<size_t> perm(30);
    std::iota(perm.begin(), perm.end(), size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> pp(30), yp(30);
    for (int i = 0; i < 30; ++i) {
      pp[i] = p[perm[i]];
      yp[i] = y[perm[i]];
    }
    EXPECT_EQ(Accuracy(p, y), Accuracy(pp, yp));
  }
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(*RocAuc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(*RocAuc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{0, 1, 0, 1}), 0.5);
  EXPECT_EQ(*RocAuc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_FALSE(RocAuc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}).has_value());
  EXPECT_FALSE(RocAuc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}).has_value());
  EXPECT_THROW(RocAuc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), ConfigError);
}

// Random scores drawn from a small grid so that ties are common.
void RandomBinary(std::mt19937_64 &rng, std::vector<double> &scores, std::vector<int> &labels, bool ties) {
  std::uniform_int_distribution<size_t> nd(2, 50);
  std::uniform_int_distribution<int> grid(0, 6), bit(0, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const size_t n = nd(rng);
  scores.resize(n);
  labels.resize(n);
  do {
    for (size_t i = 0; i < n; ++i) {
      scores[i] = ties ? grid(rng) / 6.0 : u(rng);
      labels[i] = bit(rng);
    }
  } while (std::count(labels.begin(), labels.end(), 1) == 0 ||
           std::count(labels.begin(), labels.end(), 0) == 0);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(2);
  std::vector<double> s;
  std::vector<int> y;
  for (int it = 0; it < 200; ++it) {
    RandomBinary(rng, s, y, it % 2 == 0);
    EXPECT_NEAR(*RocAuc(s, y), oracle::PairwiseRocAuc(s, y), 1e-9);
  }
}

TEST(RocAuc, MonotoneInvarianceAndComplement) {
  std::mt19937_64 rng(3);
  std::vector<double> s;
  std::vector<int> y;
  for (int it = 0; it < 200; ++it) {
    RandomBinary(rng, s, y, false);
    const double base = *RocAuc(s, y);
    std::vector<double> lin(s), ex(s), neg(s);
    for (size_t i = 0; i < s.size(); ++i) {
      lin[i] = 2.0 * s[i] + 1.0;
      ex[i] = std::exp(s[i]);
      neg[i] = -s[i];
    }
    EXPECT_EQ(*RocAuc(lin, y), base);
    EXPECT_EQ(*RocAuc(ex, y), base);
    EXPECT_NEAR(*RocAuc(neg, y) + base, 1.0, 1e-12);
  }
}

TEST(PrAuc, Examples) {
  EXPECT_EQ(*PrAuc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(*PrAuc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}), 0.25);
  EXPECT_EQ(*PrAuc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_FALSE(PrAuc(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 0}).has_value());
  // Constant scores: AP equals the positive prevalence.
  EXPECT_DOUBLE_EQ(*PrAuc(std::vector<double>{0.3, 0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 0, 1, 0}), 0.4);
}

TEST(PrAuc, MatchesSweptOracle) {
  std::mt19937_64 rng(4);
  std::vector<double> s;
  std::vector<int> y;
  for (int it = 0; it < 200; ++it) {
    RandomBinary(rng, s, y, it % 2 == 0);
    const double ap = *PrAuc(s, y);
    EXPECT_NEAR(ap, oracle::SweptAveragePrecision(s, y), 1e-12);
    EXPECT_GT(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(MulticlassRocAuc, Examples) {
  const Matrix perfect{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
  const std::vector<int> y{0, 1, 2, 0};
  EXPECT_EQ(*MulticlassRocAuc(perfect, y), 1.0);
  const Matrix uniform(4, 3, 1.0 / 3.0);
  EXPECT_EQ(*MulticlassRocAuc(uniform, y), 0.5);
  EXPECT_FALSE(MulticlassRocAuc(uniform, std::vector<int>{0, 1, 1, 0}).has_value());
}

TEST(MulticlassRocAuc, HandCaseMatchesOraclePerClass) {
  const Matrix p{{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.2, 0.7},
                 {0.4, 0.4, 0.2}, {0.3, 0.3, 0.4}, {0.5, 0.1, 0.4}};
  const std::vector<int> y{0, 1, 2, 1, 2, 0};
  double macro = 0.0;
  for (size_t c = 0; c < 3; ++c) {
    std::vector<double> s;
    std::vector<int> b;
    for (size_t r = 0; r < 6; ++r) {
      s.push_back(p(r, c));
      b.push_back(y[r] == static_cast<int>(c));
    }
    const double ref = oracle::PairwiseRocAuc(s, b);
    EXPECT_NEAR(*RocAuc(s, b), ref, 1e-12);
    macro += ref / 3.0;
  }
  EXPECT_NEAR(*MulticlassRocAuc(p, y), macro, 1e-12);
}

TEST(MulticlassRocAuc, MatchesOracleOnRandomInstances) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<size_t> nd(6, 50);
  for (int it = 0; it < 200; ++it) {
    const size_t n = nd(rng), c = 3 + it % 3;
    Matrix p(n, c);
    std::vector<int> y(n);
    for (size_t r = 0; r < n; ++r) {
      const auto row = oracle::RandomSimplex(c, rng);
      std::copy(row.begin(), row.end(), p.row(r).begin());
      y[r] = static_cast<int>(r < c ? r : rng() % c);
    }
    double macro = 0.0;
    for (size_t k = 0; k < c; ++k) {
      std::vector<double> s(n);
      std::vector<int> b(n);
      for (size_t r = 0; r < n; ++r) {
        s[r] = p(r, k);
        b[r] = y[r] == static_cast<int>(k);
      }
      macro += oracle::PairwiseRocAuc(s, b) / static_cast<double>(c);
    }
    EXPECT_NEAR(*MulticlassRocAuc(p, y), macro, 1e-9);
  }
}

TEST(EvaluateProbs, BinaryUsesPositiveColumn) {
  const Matrix p{{0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}, {0.1, 0.9}};
  const std::vector<int> y{0, 1, 1, 1};
  const auto e = EvaluateProbs(p, y);
  EXPECT_EQ(e.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(*e.roc_auc, *RocAuc(std::vector<double>{0.2, 0.7, 0.4, 0.9}, y));
}

TEST(Aggregate, MeansSkipAbsentMetrics) {
  std::map<int, ClientEval> per;
  per[0] = {0.5, 0.8, std::nullopt, 1.0};
  per[1] = {0.7, std::nullopt, std::nullopt, 2.0};
  per[2] = {0.9, 0.6, 0.4, 3.0};
  const auto r = Aggregate(per);
  EXPECT_NEAR(r.accuracy, 0.7, 1e-12);
  EXPECT_NEAR(*r.roc_auc, 0.7, 1e-12);
  EXPECT_NEAR(*r.pr_auc, 0.4, 1e-12);
  EXPECT_NEAR(r.mean_sl_loss, 2.0, 1e-12);
  EXPECT_EQ(r.per_client.size(), 3u);
  per[2].pr_auc.reset();
  EXPECT_FALSE(Aggregate(per).pr_auc.has_value());
}

}  // namespace
}  // namespace hetfed::metrics
