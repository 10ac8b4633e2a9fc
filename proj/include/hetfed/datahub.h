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

#ifndef HETFED_DATAHUB_H_
#define HETFED_DATAHUB_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetfed/common.h"

namespace hetfed::data {

struct Dataset {
  Matrix features;          // N x d
  std::vector<int> labels;  // clean labels in [0, class_count)
  int class_count = 0;

  size_t size() const { return labels.size(); }
  size_t dims() const { return features.cols(); }

  // Throws ConfigError when the invariants (N > 0, labels < C, finite
  // features, matching row count) do not hold.
  void Validate() const;

  Dataset Subset(std::span<const size_t> indices) const;
};

enum class NoiseType { kNone, kSymmetric, kPairflip };

const char *NoiseTypeName(NoiseType t);
NoiseType ParseNoiseType(const std::string &name);

struct NoiseSpec {
  NoiseType type = NoiseType::kNone;
  double rate = 0.0;
  uint64_t seed = 0;
};

// A dataset with corrupted training labels. base.labels keeps the clean
// labels, which are only ever read for evaluation.
struct NoisyDataset {
  Dataset base;
  std::vector<int> noisy_labels;
  std::vector<bool> flipped;
  NoiseSpec noise;
  double flip_fraction = 0.0;

  size_t size() const { return base.size(); }
};

// Wraps a dataset with noisy_labels == labels.
NoisyDataset Clean(Dataset ds);

enum class PartitionScheme { kIidEqual, kIidSized, kLabelSkew };

PartitionScheme ParsePartitionScheme(const std::string &name);

struct PartitionPlan {
  PartitionScheme scheme = PartitionScheme::kIidEqual;
  size_t client_count = 1;
  uint64_t seed = 0;
  std::vector<size_t> sizes;   // used by kIidSized
  double concentration = 1.0;  // Dirichlet alpha for kLabelSkew
};

// Gaussian blobs. Class centroids sit on the unit circle in the first two
// feature dimensions (on a line when dims == 1). Rows are grouped by class.
Dataset GenBlobs(int classes, int dims, int per_class, double spread, uint64_t seed);

// IDX images (magic 0x00000803) plus labels (magic 0x00000801). Pixels are
// scaled by 1/255. class_count defaults to max label + 1.
Dataset LoadIdx(const std::string &images_path, const std::string &labels_path,
                std::optional<int> class_count = std::nullopt);

struct CsvSchema {
  size_t feature_count = 0;
  int class_count = 0;
};

// CSV with header `label,f0,f1,...`. Each feature column is min-max scaled
// to [0,1]; constant columns map to 0.
Dataset LoadCsv(const std::string &path, const CsvSchema &schema);

// Disjoint index sets, one per client.
std::vector<std::vector<size_t>> PartitionIndices(const Dataset &ds, const PartitionPlan &plan);
std::vector<Dataset> Partition(const Dataset &ds, const PartitionPlan &plan);

NoisyDataset InjectSymmetric(const Dataset &ds, double mu, uint64_t seed);

// Cyclic next-class permutation y -> (y + 1) mod C.
NoisyDataset InjectPairflip(const Dataset &ds, double mu, uint64_t seed);

NoisyDataset InjectNoise(const Dataset &ds, const NoiseSpec &spec);

std::vector<size_t> SamplePublicIndices(size_t n, size_t n_pub, uint64_t seed);
Dataset SamplePublic(const Dataset &ds, size_t n_pub, uint64_t seed);

// Carves one base dataset into disjoint public, test and private pools, then
// partitions the private pool across clients. Indices refer to the base.
struct DataSplit {
  std::vector<size_t> public_indices;
  std::vector<size_t> test_indices;
  std::vector<std::vector<size_t>> client_indices;
};

DataSplit SplitPools(const Dataset &ds, size_t n_pub, size_t n_test, const PartitionPlan &plan);

}  // namespace hetfed::data

#endif  // HETFED_DATAHUB_H_
