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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "hetfed/datahub.h"

namespace hetfed::data {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("hetfed_datahub_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string &name) const { return path_ / name; }

 private:
  fs::path path_;
};

void WriteBytes(const fs::path &p, const std::vector<uint8_t> &bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void WriteText(const fs::path &p, const std::string &text) { std::ofstream(p) << text; }

void AppendBe32(std::vector<uint8_t> &b, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<uint8_t>(v >> s));
}

Dataset LinearLabels(size_t n, int classes) {
  Dataset ds;
  ds.features = Matrix(n, 1);
  ds.class_count = classes;
  for (size_t i = 0; i < n; ++i) {
    ds.features(i, 0) = static_cast<double>(i);
    ds.labels.push_back(static_cast<int>(i % classes));
  }
  return ds;
}

TEST(GenBlobs, ShapeAndLabels) {
  const auto ds = GenBlobs(2, 3, 5, 0.5, 1);
  ASSERT_EQ(ds.size(), 10u);
  EXPECT_EQ(ds.dims(), 3u);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}));
  EXPECT_NO_THROW(ds.Validate());
}

TEST(GenBlobs, Deterministic) {
  EXPECT_EQ(GenBlobs(3, 2, 50, 0.7, 9).features, GenBlobs(3, 2, 50, 0.7, 9).features);
  EXPECT_NE(GenBlobs(3, 2, 50, 0.7, 9).features, GenBlobs(3, 2, 50, 0.7, 10).features);
}

TEST(GenBlobs, ZeroSpreadIsPerfectlySeparable) {
  for (int dims : {1, 2, 4}) {
    const auto ds = GenBlobs(4, dims, 20, 0.0, 3);
    // Centroids are the first row of each class.
    std::vector<std::vector<double>> centroids;
    for (int c = 0; c < 4; ++c) {
      const auto r = ds.features.row(c * 20);
      centroids.emplace_back(r.begin(), r.end());
    }
    size_t hits = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
      int best = 0;
      double best_d = INFINITY;
      for (int c = 0; c < 4; ++c) {
        double d = 0.0;
        for (size_t k = 0; k < ds.dims(); ++k) d += std::pow(ds.features(i, k) - centroids[c][k], 2);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      hits += best == ds.labels[i];
    }
    EXPECT_EQ(hits, ds.size()) << "dims=" << dims;
  }
}

TEST(GenBlobs, RejectsBadSizes) {
  EXPECT_THROW(GenBlobs(1, 2, 5, 0.5, 1), ConfigError);
  EXPECT_THROW(GenBlobs(3, 2, 0, 0.5, 1), ConfigError);
  EXPECT_THROW(GenBlobs(3, 0, 5, 0.5, 1), ConfigError);
}

std::vector<uint8_t> IdxImages(uint32_t magic, uint32_t n, uint32_t rows, uint32_t cols,
                               const std::vector<uint8_t> &pixels) {
  std::vector<uint8_t> b;
  AppendBe32(b, magic);
  AppendBe32(b, n);
  AppendBe32(b, rows);
  AppendBe32(b, cols);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<uint8_t> IdxLabels(uint32_t magic, const std::vector<uint8_t> &labels) {
  std::vector<uint8_t> b;
  AppendBe32(b, magic);
  AppendBe32(b, static_cast<uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

TEST(LoadIdx, FourImageFixture) {
  TempDir dir;
  // Four 2x2 images; pixel k of image i is 17*i + 60*k.
  std::vector<uint8_t> pixels;
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 4; ++k) pixels.push_back(static_cast<uint8_t>(17 * i + 60 * k));
  }
  WriteBytes(dir / "img", IdxImages(0x803, 4, 2, 2, pixels));
  WriteBytes(dir / "lab", IdxLabels(0x801, {3, 0, 1, 2}));
  const auto ds = LoadIdx((dir / "img").string(), (dir / "lab").string());
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.dims(), 4u);
  EXPECT_EQ(ds.class_count, 4);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 0, 1, 2}));
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(ds.features(i, k), (17.0 * i + 60.0 * k) / 255.0);
  }
}

TEST(LoadIdx, Errors) {
  TempDir dir;
  const std::vector<uint8_t> pixels(16, 7);
  WriteBytes(dir / "lab", IdxLabels(0x801, {0, 1, 0, 1}));
  WriteBytes(dir / "bad_magic", IdxImages(0x804, 4, 2, 2, pixels));
  EXPECT_THROW(LoadIdx((dir / "bad_magic").string(), (dir / "lab").string()), IngestionError);
  WriteBytes(dir / "short", IdxImages(0x803, 4, 2, 2, std::vector<uint8_t>(10, 7)));
  try {
    LoadIdx((dir / "short").string(), (dir / "lab").string());
    FAIL() << "truncated payload accepted";
  } catch (const IngestionError &e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  WriteBytes(dir / "img", IdxImages(0x803, 4, 2, 2, pixels));
  WriteBytes(dir / "lab_big", IdxLabels(0x801, {0, 1, 5, 1}));
  EXPECT_THROW(LoadIdx((dir / "img").string(), (dir / "lab_big").string(), 2), IngestionError);
  WriteBytes(dir / "lab_short", IdxLabels(0x801, {0, 1, 0}));
  EXPECT_THROW(LoadIdx((dir / "img").string(), (dir / "lab_short").string()), IngestionError);
  EXPECT_THROW(LoadIdx((dir / "missing").string(), (dir / "lab").string()), IngestionError);
}

TEST(LoadCsv, ParsesAndScales) {
  TempDir dir;
  WriteText(dir / "d.csv", "label,f0,f1\n0,1,10\n1,3,10\n2,2,10\n");
  const auto ds = LoadCsv((dir / "d.csv").string(), {2, 3});
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(ds.features(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(ds.features(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(ds.features(2, 0), 0.5);
  for (size_t r = 0; r < 3; ++r) EXPECT_EQ(ds.features(r, 1), 0.0);
}

TEST(LoadCsv, Errors) {
  TempDir dir;
  WriteText(dir / "empty.csv", "label,f0\n");
  EXPECT_THROW(LoadCsv((dir / "empty.csv").string(), {1, 2}), IngestionError);
  WriteText(dir / "big.csv", "label,f0\n0,1\n1,2\n2,3\n");
  try {
    LoadCsv((dir / "big.csv").string(), {1, 2});
    FAIL() << "label == C accepted";
  } catch (const IngestionError &e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  WriteText(dir / "hdr.csv", "y,f0\n0,1\n");
  EXPECT_THROW(LoadCsv((dir / "hdr.csv").string(), {1, 2}), IngestionError);
  WriteText(dir / "cols.csv", "label,f0\n0,1,2\n");
  EXPECT_THROW(LoadCsv((dir / "cols.csv").string(), {1, 2}), IngestionError);
  WriteText(dir / "nan.csv", "label,f0\n0,abc\n");
  EXPECT_THROW(LoadCsv((dir / "nan.csv").string(), {1, 2}), IngestionError);
}

TEST(Partition, SingleClientIsFullDataset) {
  const auto ds = LinearLabels(37, 3);
  PartitionPlan plan;
  const auto idx = PartitionIndices(ds, plan);
  ASSERT_EQ(idx.size(), 1u);
  auto sorted = idx[0];
  std::sort(sorted.begin(), sorted.end());
  std::vector<size_t> all(37);
  std::iota(all.begin(), all.end(), size_t{0});
  EXPECT_EQ(sorted, all);
}

TEST(Partition, IidEqualFourShards) {
  const auto ds = LinearLabels(400, 4);
  PartitionPlan plan{PartitionScheme::kIidEqual, 4, 3, {}, 1.0};
  const auto idx = PartitionIndices(ds, plan);
  ASSERT_EQ(idx.size(), 4u);
  std::set<size_t> seen;
  for (const auto &s : idx) {
    EXPECT_EQ(s.size(), 100u);
    seen.insert(s.begin(), s.end());
  }
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(PartitionIndices(ds, plan), idx);
  const auto shards = Partition(ds, plan);
  EXPECT_EQ(shards[2].labels.size(), 100u);
}

TEST(Partition, IidSizedAndErrors) {
  const auto ds = LinearLabels(100, 2);
  PartitionPlan plan{PartitionScheme::kIidSized, 3, 1, {10, 20, 30}, 1.0};
  const auto idx = PartitionIndices(ds, plan);
  EXPECT_EQ(idx[0].size(), 10u);
  EXPECT_EQ(idx[1].size(), 20u);
  EXPECT_EQ(idx[2].size(), 30u);
  plan.sizes = {50, 40, 20};
  EXPECT_THROW(PartitionIndices(ds, plan), ConfigError);
  plan.sizes = {1, 2};
  EXPECT_THROW(PartitionIndices(ds, plan), ConfigError);
}

double ChiSquareToGlobal(const Dataset &ds, const std::vector<std::vector<size_t>> &shards) {
  std::vector<double> global(ds.class_count, 0.0);
  for (int y : ds.labels) global[y] += 1.0 / static_cast<double>(ds.size());
  double chi = 0.0;
  size_t used = 0;
  for (const auto &s : shards) {
    if (s.empty()) continue;
    ++used;
    std::vector<double> counts(ds.class_count, 0.0);
    for (size_t i : s) counts[ds.labels[i]] += 1.0;
    for (int c = 0; c < ds.class_count; ++c) {
      const double expected = global[c] * static_cast<double>(s.size());
      chi += std::pow(counts[c] - expected, 2) / expected;
    }
  }
  return chi / static_cast<double>(used);
}

TEST(Partition, LabelSkewConvergesToIidProportions) {
  const auto ds = LinearLabels(1000, 5);
  std::vector<double> iid, skew_flat, skew_sharp;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    iid.push_back(ChiSquareToGlobal(ds, PartitionIndices(ds, {PartitionScheme::kIidEqual, 4, seed, {}, 1.0})));
    skew_flat.push_back(ChiSquareToGlobal(ds, PartitionIndices(ds, {PartitionScheme::kLabelSkew, 4, seed, {}, 1e6})));
    skew_sharp.push_back(ChiSquareToGlobal(ds, PartitionIndices(ds, {PartitionScheme::kLabelSkew, 4, seed, {}, 0.1})));
  }
  auto mean = [](const std::vector<double> &v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  double var = 0.0;
  for (double x : iid) var += std::pow(x - mean(iid), 2);
  const double se = std::sqrt(var / (iid.size() - 1) / iid.size());
  EXPECT_LE(mean(skew_flat), mean(iid) + 3.0 * se);
  EXPECT_GT(mean(skew_sharp), 10.0 * mean(iid));
}

TEST(Partition, LabelSkewShardsDisjoint) {
  const auto ds = LinearLabels(600, 3);
  const auto idx = PartitionIndices(ds, {PartitionScheme::kLabelSkew, 5, 4, {}, 0.5});
  std::set<size_t> seen;
  size_t total = 0;
  for (const auto &s : idx) {
    seen.insert(s.begin(), s.end());
    total += s.size();
  }
  EXPECT_EQ(seen.size(), total);
  EXPECT_LE(total, ds.size());
}

TEST(InjectSymmetric, Examples) {
  const auto ds = LinearLabels(1000, 4);
  const auto none = InjectSymmetric(ds, 0.0, 1);
  EXPECT_EQ(none.noisy_labels, ds.labels);
  EXPECT_EQ(none.flip_fraction, 0.0);
  const auto all = InjectSymmetric(LinearLabels(1000, 2), 1.0, 1);
  for (size_t i = 0; i < all.size(); ++i) {
    EXPECT_NE(all.noisy_labels[i], all.base.labels[i]);
    EXPECT_TRUE(all.flipped[i]);
  }
  EXPECT_EQ(all.flip_fraction, 1.0);
  EXPECT_THROW(InjectSymmetric(ds, 1.5, 1), ConfigError);
  EXPECT_THROW(InjectSymmetric(ds, -0.1, 1), ConfigError);
}

TEST(InjectSymmetric, StatisticsAtScale) {
  const auto ds = LinearLabels(100000, 10);
  const auto nd = InjectSymmetric(ds, 0.2, 42);
  EXPECT_GE(nd.flip_fraction, 0.195);
  EXPECT_LE(nd.flip_fraction, 0.205);
  // Destination offset (noisy - clean) mod C is uniform over 1..C-1.
  std::vector<double> offsets(10, 0.0);
  size_t flips = 0;
  for (size_t i = 0; i < nd.size(); ++i) {
    EXPECT_EQ(nd.flipped[i], nd.noisy_labels[i] != ds.labels[i]);
    if (nd.flipped[i]) {
      offsets[(nd.noisy_labels[i] - ds.labels[i] + 10) % 10] += 1.0;
      ++flips;
    }
  }
  EXPECT_EQ(offsets[0], 0.0);
  for (int k = 1; k < 10; ++k) {
    EXPECT_NEAR(offsets[k] / flips, 1.0 / 9.0, 0.1 / 9.0) << "offset " << k;
  }
  EXPECT_EQ(nd.base.labels, ds.labels);
}

TEST(InjectPairflip, Examples) {
  Dataset ds;
  ds.features = Matrix(2, 1);
  ds.labels = {3, 9};
  ds.class_count = 10;
  const auto nd = InjectPairflip(ds, 1.0, 1);
  EXPECT_EQ(nd.noisy_labels, (std::vector<int>{4, 0}));
  EXPECT_EQ(InjectPairflip(LinearLabels(500, 5), 0.0, 2).noisy_labels, LinearLabels(500, 5).labels);
  EXPECT_THROW(InjectPairflip(ds, 2.0, 1), ConfigError);
}

TEST(InjectPairflip, StatisticsAtScale) {
  const auto ds = LinearLabels(100000, 10);
  const auto nd = InjectPairflip(ds, 0.2, 43);
  EXPECT_GE(nd.flip_fraction, 0.195);
  EXPECT_LE(nd.flip_fraction, 0.205);
  for (size_t i = 0; i < nd.size(); ++i) {
    if (nd.noisy_labels[i] != ds.labels[i]) {
      EXPECT_EQ(nd.noisy_labels[i], (ds.labels[i] + 1) % 10);
      EXPECT_TRUE(nd.flipped[i]);
    }
  }
}

TEST(InjectNoise, MeanFlipFractionOverSeeds) {
  const auto ds = LinearLabels(100000, 10);
  for (NoiseType type : {NoiseType::kSymmetric, NoiseType::kPairflip}) {
    double sum = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) sum += InjectNoise(ds, {type, 0.3, seed}).flip_fraction;
    EXPECT_NEAR(sum / 10.0, 0.3, 0.002) << NoiseTypeName(type);
  }
  EXPECT_EQ(InjectNoise(ds, {NoiseType::kNone, 0.3, 1}).noisy_labels, ds.labels);
}

TEST(NoiseType, NamesRoundTrip) {
  for (NoiseType t : {NoiseType::kNone, NoiseType::kSymmetric, NoiseType::kPairflip}) {
    EXPECT_EQ(ParseNoiseType(NoiseTypeName(t)), t);
  }
  EXPECT_THROW(ParseNoiseType("bogus"), ConfigError);
}

TEST(SamplePublic, Examples) {
  const auto ds = LinearLabels(50, 5);
  auto full = SamplePublicIndices(50, 50, 3);
  std::sort(full.begin(), full.end());
  std::vector<size_t> all(50);
  std::iota(all.begin(), all.end(), size_t{0});
  EXPECT_EQ(full, all);
  EXPECT_THROW(SamplePublic(ds, 0, 1), ConfigError);
  EXPECT_THROW(SamplePublic(ds, 51, 1), ConfigError);
  EXPECT_EQ(SamplePublicIndices(50, 20, 8), SamplePublicIndices(50, 20, 8));
  EXPECT_EQ(SamplePublic(ds, 20, 8).size(), 20u);
}

TEST(SplitPools, PoolsAreDisjoint) {
  const auto ds = LinearLabels(1000, 4);
  const auto split = SplitPools(ds, 100, 200, {PartitionScheme::kIidEqual, 5, 7, {}, 1.0});
  std::set<size_t> pub(split.public_indices.begin(), split.public_indices.end());
  std::set<size_t> test(split.test_indices.begin(), split.test_indices.end());
  EXPECT_EQ(pub.size(), 100u);
  EXPECT_EQ(test.size(), 200u);
  std::set<size_t> priv;
  for (const auto &c : split.client_indices) {
    EXPECT_EQ(c.size(), 140u);
    for (size_t i : c) {
      EXPECT_FALSE(pub.count(i));
      EXPECT_FALSE(test.count(i));
      EXPECT_TRUE(priv.insert(i).second);
    }
  }
  for (size_t i : pub) EXPECT_FALSE(test.count(i));
  EXPECT_THROW(SplitPools(ds, 600, 600, {}), ConfigError);
}

TEST(Dataset, ValidateRejectsBadLabels) {
  auto ds = LinearLabels(10, 3);
  ds.labels[4] = 3;
  EXPECT_THROW(ds.Validate(), ConfigError);
  Dataset empty;
  empty.class_count = 2;
  EXPECT_THROW(empty.Validate(), ConfigError);
}

}  // namespace
}  // namespace hetfed::data
