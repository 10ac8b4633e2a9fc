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

#include "hetfed/datahub.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

namespace hetfed::data {

namespace {

std::vector<size_t> Iota(size_t n) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  return idx;
}

std::vector<size_t> ShuffledIndices(size_t n, uint64_t seed) {
  auto idx = Iota(n);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void CheckRate(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) {
    throw ConfigError("noise rate " + std::to_string(mu) + " outside [0,1]");
  }
}

// Draws flips independently per record; `destination` maps (label, rng) to
// the corrupted label.
template <typename Destination>
NoisyDataset Inject(const Dataset &ds, NoiseSpec spec, Destination destination) {
  CheckRate(spec.rate);
  ds.Validate();
  NoisyDataset out;
  out.base = ds;
  out.noise = spec;
  out.noisy_labels = ds.labels;
  out.flipped.assign(ds.size(), false);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  size_t flips = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (coin(rng) < spec.rate) {
      out.noisy_labels[i] = destination(ds.labels[i], rng);
    }
    if (out.noisy_labels[i] != ds.labels[i]) {
      out.flipped[i] = true;
      ++flips;
    }
  }
  out.flip_fraction = static_cast<double>(flips) / static_cast<double>(ds.size());
  return out;
}

class ByteReader {
 public:
  ByteReader(const std::string &path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw IngestionError("cannot open " + path);
    }
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  uint32_t ReadU32() {
    Require(4, "32-bit header field");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v = (v << 8) | static_cast<unsigned char>(bytes_[offset_ + i]);
    }
    offset_ += 4;
    return v;
  }

  unsigned char ReadU8() {
    Require(1, "payload byte");
    return static_cast<unsigned char>(bytes_[offset_++]);
  }

  void Require(size_t n, const char *what) const {
    if (offset_ + n > bytes_.size()) {
      throw IngestionError(path_ + ": truncated " + what + " at byte offset " + std::to_string(offset_));
    }
  }

  size_t offset() const { return offset_; }
  size_t size() const { return bytes_.size(); }

 private:
  std::string path_;
  std::vector<char> bytes_;
  size_t offset_ = 0;
};

}  // namespace

void Dataset::Validate() const {
  if (labels.empty()) {
    throw ConfigError("dataset is empty");
  }
  if (features.rows() != labels.size()) {
    throw ConfigError("feature rows do not match label count");
  }
  if (class_count < 2) {
    throw ConfigError("dataset needs at least two classes");
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw ConfigError("label " + std::to_string(y) + " outside [0," + std::to_string(class_count) + ")");
    }
  }
  for (double x : features.data()) {
    if (!std::isfinite(x)) {
      throw ConfigError("non-finite feature value");
    }
  }
}

Dataset Dataset::Subset(std::span<const size_t> indices) const {
  Dataset out;
  out.features = features.SelectRows(indices);
  out.class_count = class_count;
  out.labels.reserve(indices.size());
  for (size_t i : indices) {
    out.labels.push_back(labels[i]);
  }
  return out;
}

const char *NoiseTypeName(NoiseType t) {
  switch (t) {
    case NoiseType::kNone:
      return "none";
    case NoiseType::kSymmetric:
      return "symmetric";
    case NoiseType::kPairflip:
      return "pairflip";
  }
  return "none";
}

NoiseType ParseNoiseType(const std::string &name) {
  if (name == "none") return NoiseType::kNone;
  if (name == "symmetric") return NoiseType::kSymmetric;
  if (name == "pairflip") return NoiseType::kPairflip;
  throw ConfigError("unknown noise type '" + name + "'");
}

PartitionScheme ParsePartitionScheme(const std::string &name) {
  if (name == "iid-equal") return PartitionScheme::kIidEqual;
  if (name == "iid-sized") return PartitionScheme::kIidSized;
  if (name == "label-skew") return PartitionScheme::kLabelSkew;
  throw ConfigError("unknown partition scheme '" + name + "'");
}

NoisyDataset Clean(Dataset ds) {
  NoisyDataset out;
  out.noisy_labels = ds.labels;
  out.flipped.assign(ds.size(), false);
  out.base = std::move(ds);
  return out;
}

Dataset GenBlobs(int classes, int dims, int per_class, double spread, uint64_t seed) {
  if (classes < 2 || dims < 1 || per_class < 1) {
    throw ConfigError("gen_blobs needs classes >= 2, dims >= 1, per_class >= 1");
  }
  if (!(spread >= 0.0)) {
    throw ConfigError("gen_blobs spread must be non-negative");
  }
  Matrix centroids(classes, dims);
  for (int c = 0; c < classes; ++c) {
    if (dims == 1) {
      centroids(c, 0) = static_cast<double>(c);
    } else {
      const double angle = 2.0 * std::numbers::pi * c / classes;
      centroids(c, 0) = std::cos(angle);
      centroids(c, 1) = std::sin(angle);
    }
  }
  Dataset ds;
  ds.class_count = classes;
  ds.features = Matrix(static_cast<size_t>(classes) * per_class, dims);
  ds.labels.reserve(ds.features.rows());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  size_t r = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++r) {
      for (int d = 0; d < dims; ++d) {
        ds.features(r, d) = centroids(c, d) + spread * gauss(rng);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

Dataset LoadIdx(const std::string &images_path, const std::string &labels_path, std::optional<int> class_count) {
  ByteReader images(images_path);
  const uint32_t img_magic = images.ReadU32();
  if (img_magic != 0x00000803u) {
    throw IngestionError(images_path + ": bad magic number at byte offset 0 (expected 0x00000803)");
  }
  const uint32_t n = images.ReadU32();
  const uint32_t rows = images.ReadU32();
  const uint32_t cols = images.ReadU32();
  const size_t pixels = static_cast<size_t>(rows) * cols;
  if (n == 0 || pixels == 0) {
    throw IngestionError(images_path + ": empty image set");
  }
  images.Require(static_cast<size_t>(n) * pixels, "image payload");

  ByteReader labels(labels_path);
  const uint32_t lbl_magic = labels.ReadU32();
  if (lbl_magic != 0x00000801u) {
    throw IngestionError(labels_path + ": bad magic number at byte offset 0 (expected 0x00000801)");
  }
  const uint32_t nl = labels.ReadU32();
  if (nl != n) {
    throw IngestionError(labels_path + ": label count " + std::to_string(nl) + " at byte offset 4 does not match " +
                         std::to_string(n) + " images");
  }
  labels.Require(n, "label payload");

  Dataset ds;
  ds.features = Matrix(n, pixels);
  for (size_t i = 0; i < n; ++i) {
    for (size_t p = 0; p < pixels; ++p) {
      ds.features(i, p) = images.ReadU8() / 255.0;
    }
  }
  int max_label = 0;
  std::vector<size_t> offsets(n);
  for (size_t i = 0; i < n; ++i) {
    offsets[i] = labels.offset();
    ds.labels.push_back(labels.ReadU8());
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.class_count = class_count.value_or(max_label + 1);
  for (size_t i = 0; i < n; ++i) {
    if (ds.labels[i] >= ds.class_count) {
      throw IngestionError(labels_path + ": label " + std::to_string(ds.labels[i]) + " >= class count " +
                           std::to_string(ds.class_count) + " at byte offset " + std::to_string(offsets[i]));
    }
  }
  return ds;
}

Dataset LoadCsv(const std::string &path, const CsvSchema &schema) {
  std::ifstream in(path);
  if (!in) {
    throw IngestionError("cannot open " + path);
  }
  if (schema.feature_count == 0 || schema.class_count < 2) {
    throw ConfigError("csv schema needs feature_count >= 1 and class_count >= 2");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw IngestionError(path + ": missing header at line 1");
  }
  std::string expected = "label";
  for (size_t f = 0; f < schema.feature_count; ++f) {
    expected += ",f" + std::to_string(f);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) {
    throw IngestionError(path + ": header at line 1 does not match schema (expected '" + expected + "')");
  }

  std::vector<double> values;
  Dataset ds;
  ds.class_count = schema.class_count;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != schema.feature_count + 1) {
      throw IngestionError(path + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                           " fields, expected " + std::to_string(schema.feature_count + 1));
    }
    try {
      size_t used = 0;
      const long label = std::stol(cells[0], &used);
      if (used != cells[0].size() || label < 0 || label >= schema.class_count) {
        throw IngestionError(path + ": line " + std::to_string(line_no) + " label '" + cells[0] +
                             "' outside [0," + std::to_string(schema.class_count) + ")");
      }
      ds.labels.push_back(static_cast<int>(label));
      for (size_t f = 1; f < cells.size(); ++f) {
        const double x = std::stod(cells[f], &used);
        if (used != cells[f].size() || !std::isfinite(x)) {
          throw std::invalid_argument("trailing characters");
        }
        values.push_back(x);
      }
    } catch (const std::logic_error &) {
      throw IngestionError(path + ": line " + std::to_string(line_no) + " has a malformed number");
    }
  }
  if (ds.labels.empty()) {
    throw IngestionError(path + ": no data rows after header");
  }
  ds.features = Matrix(ds.labels.size(), schema.feature_count, std::move(values));
  for (size_t f = 0; f < schema.feature_count; ++f) {
    double lo = ds.features(0, f);
    double hi = lo;
    for (size_t r = 0; r < ds.size(); ++r) {
      lo = std::min(lo, ds.features(r, f));
      hi = std::max(hi, ds.features(r, f));
    }
    for (size_t r = 0; r < ds.size(); ++r) {
      ds.features(r, f) = hi > lo ? (ds.features(r, f) - lo) / (hi - lo) : 0.0;
    }
  }
  return ds;
}

std::vector<std::vector<size_t>> PartitionIndices(const Dataset &ds, const PartitionPlan &plan) {
  const size_t k = plan.client_count;
  const size_t n = ds.size();
  if (k == 0) {
    throw ConfigError("partition needs at least one client");
  }
  std::vector<std::vector<size_t>> shards(k);
  switch (plan.scheme) {
    case PartitionScheme::kIidEqual: {
      const auto order = ShuffledIndices(n, plan.seed);
      const size_t per = n / k;
      if (per == 0) {
        throw ConfigError("iid-equal partition of " + std::to_string(n) + " records over " + std::to_string(k) +
                          " clients leaves empty shards");
      }
      for (size_t c = 0; c < k; ++c) {
        shards[c].assign(order.begin() + c * per, order.begin() + (c + 1) * per);
      }
      break;
    }
    case PartitionScheme::kIidSized: {
      if (plan.sizes.size() != k) {
        throw ConfigError("iid-sized partition needs one size per client");
      }
      const size_t total = std::accumulate(plan.sizes.begin(), plan.sizes.end(), size_t{0});
      if (total > n) {
        throw ConfigError("partition sizes sum to " + std::to_string(total) + " but dataset has " +
                          std::to_string(n) + " records");
      }
      const auto order = ShuffledIndices(n, plan.seed);
      size_t pos = 0;
      for (size_t c = 0; c < k; ++c) {
        shards[c].assign(order.begin() + pos, order.begin() + pos + plan.sizes[c]);
        pos += plan.sizes[c];
      }
      break;
    }
    case PartitionScheme::kLabelSkew: {
      if (!(plan.concentration > 0.0)) {
        throw ConfigError("label-skew concentration must be positive");
      }
      std::mt19937_64 rng(plan.seed);
      std::gamma_distribution<double> gamma(plan.concentration, 1.0);
      for (int cls = 0; cls < ds.class_count; ++cls) {
        std::vector<size_t> members;
        for (size_t i = 0; i < n; ++i) {
          if (ds.labels[i] == cls) members.push_back(i);
        }
        std::shuffle(members.begin(), members.end(), rng);
        std::vector<double> share(k);
        double total = 0.0;
        for (double &s : share) {
          s = gamma(rng);
          total += s;
        }
        // Cut points from the cumulative Dirichlet share.
        double cum = 0.0;
        size_t start = 0;
        for (size_t c = 0; c < k; ++c) {
          cum += share[c];
          const size_t end = c + 1 == k ? members.size()
                                        : std::min(members.size(), static_cast<size_t>(std::llround(
                                                                       cum / total * members.size())));
          for (size_t i = start; i < std::max(start, end); ++i) {
            shards[c].push_back(members[i]);
          }
          start = std::max(start, end);
        }
      }
      for (auto &s : shards) {
        std::sort(s.begin(), s.end());
      }
      break;
    }
  }
  return shards;
}

std::vector<Dataset> Partition(const Dataset &ds, const PartitionPlan &plan) {
  std::vector<Dataset> out;
  for (const auto &idx : PartitionIndices(ds, plan)) {
    out.push_back(ds.Subset(idx));
  }
  return out;
}

NoisyDataset InjectSymmetric(const Dataset &ds, double mu, uint64_t seed) {
  const int classes = ds.class_count;
  return Inject(ds, NoiseSpec{NoiseType::kSymmetric, mu, seed}, [classes](int y, std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> pick(0, classes - 2);
    const int r = pick(rng);
    return r >= y ? r + 1 : r;
  });
}

NoisyDataset InjectPairflip(const Dataset &ds, double mu, uint64_t seed) {
  const int classes = ds.class_count;
  return Inject(ds, NoiseSpec{NoiseType::kPairflip, mu, seed},
                [classes](int y, std::mt19937_64 &) { return (y + 1) % classes; });
}

NoisyDataset InjectNoise(const Dataset &ds, const NoiseSpec &spec) {
  switch (spec.type) {
    case NoiseType::kSymmetric:
      return InjectSymmetric(ds, spec.rate, spec.seed);
    case NoiseType::kPairflip:
      return InjectPairflip(ds, spec.rate, spec.seed);
    case NoiseType::kNone:
      break;
  }
  NoisyDataset out = Clean(ds);
  out.noise = spec;
  return out;
}

std::vector<size_t> SamplePublicIndices(size_t n, size_t n_pub, uint64_t seed) {
  if (n_pub == 0) {
    throw ConfigError("public dataset size must be positive");
  }
  if (n_pub > n) {
    throw ConfigError("public sample of " + std::to_string(n_pub) + " exceeds " + std::to_string(n) + " records");
  }
  auto idx = ShuffledIndices(n, seed);
  idx.resize(n_pub);
  return idx;
}

Dataset SamplePublic(const Dataset &ds, size_t n_pub, uint64_t seed) {
  return ds.Subset(SamplePublicIndices(ds.size(), n_pub, seed));
}

DataSplit SplitPools(const Dataset &ds, size_t n_pub, size_t n_test, const PartitionPlan &plan) {
  const size_t n = ds.size();
  if (n_pub + n_test >= n) {
    throw ConfigError("public (" + std::to_string(n_pub) + ") and test (" + std::to_string(n_test) +
                      ") pools leave no private records out of " + std::to_string(n));
  }
  const auto order = ShuffledIndices(n, DeriveSeed(plan.seed, {0x706f6f6cULL}));
  DataSplit split;
  split.public_indices.assign(order.begin(), order.begin() + n_pub);
  split.test_indices.assign(order.begin() + n_pub, order.begin() + n_pub + n_test);
  std::vector<size_t> rest(order.begin() + n_pub + n_test, order.end());
  std::sort(rest.begin(), rest.end());
  const Dataset pool = ds.Subset(rest);
  for (const auto &shard : PartitionIndices(pool, plan)) {
    std::vector<size_t> mapped;
    mapped.reserve(shard.size());
    for (size_t i : shard) mapped.push_back(rest[i]);
    split.client_indices.push_back(std::move(mapped));
  }
  return split;
}

}  // namespace hetfed::data
