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

#ifndef HETFED_EXPCLI_H_
#define HETFED_EXPCLI_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hetfed/datahub.h"
#include "hetfed/fedproto.h"

namespace hetfed::exp {

using Json = nlohmann::json;

struct DataConfig {
  std::string source = "blobs";  // blobs | idx | csv
  int classes = 3;
  int dims = 2;
  double spread = 0.6;
  size_t clients = 4;
  size_t samples_per_client = 400;  // 0: split the private pool evenly
  std::string partition = "iid-equal";
  double concentration = 1.0;
  size_t n_pub = 300;
  size_t n_test = 600;
  std::string idx_images;
  std::string idx_labels;
  std::string csv_path;
  data::NoiseType noise_type = data::NoiseType::kPairflip;
  double noise_rate = 0.2;
  std::optional<std::pair<double, double>> random_rate;
};

struct ExperimentConfig {
  Json resolved;  // fully merged document, echoed into every run directory
  uint64_t seed = 0;
  proto::StrategyConfig strategy;
  DataConfig data;
  std::vector<std::vector<size_t>> models;  // hidden widths, round-robin per client
};

// Every accepted key with its default. `seed` and `strategy` are required
// and default to null.
Json DefaultConfig();

// Recursively merges `overlay` into `base`, rejecting keys that are not in
// the schema or whose type does not match. `origin` names the source in
// error messages.
void MergeConfig(Json &base, const Json &overlay, const std::string &origin);

// Applies `a.b.c=value`. The value is parsed as JSON when possible, else
// taken as a string.
void ApplySet(Json &config, const std::string &assignment);

// Checks required keys and builds the typed view.
ExperimentConfig Resolve(Json merged);

struct ConfigSources {
  std::vector<std::string> files;
  std::vector<std::string> sets;
  std::optional<double> noise_rate;  // --noise-rate
  std::optional<std::string> env_seed;
};

// defaults < HETFED_SEED < files (in order) < --set (in order) < --noise-rate.
ExperimentConfig ParseConfig(const ConfigSources &sources);

// K independent U[lo, hi] draws.
std::vector<double> RandomNoiseAssignment(size_t k, double lo, double hi, uint64_t seed);

struct BuiltFederation {
  proto::Federation federation;
  Json manifest;  // per-client architecture, noise rate, flip fraction
};

BuiltFederation BuildFederation(const ExperimentConfig &cfg);

// 16 hex digits of FNV-1a over the canonical dump of the resolved config.
std::string ConfigHash(const Json &resolved);

std::string RoundLogToJsonl(const std::vector<proto::RoundLog> &logs);

struct RunOutcome {
  std::filesystem::path dir;
  bool skipped = false;
};

// Runs one experiment into <out_root>/run-<hash>. A directory that already
// holds a DONE marker is left untouched unless `force` is set.
RunOutcome RunToDirectory(const ExperimentConfig &cfg, const std::filesystem::path &out_root, int jobs,
                          bool force = false, bool record_timing = false);

struct SweepCell {
  Json overrides;  // dotted key -> value for this cell
  std::filesystem::path dir;
  bool skipped = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  bool ok() const;
};

// Cartesian product of grid["axes"] over the layered base config.
//
// Grid document:
//   {"configs": ["base.json", ...],      // relative to base_dir
//    "set": {"rounds": 5},               // optional fixed overrides
//    "axes": {"strategy": [...], "noise.type": [...], "noise.rate": [...], "seed": [...]},
//    "out": "runs"}                       // optional, relative to base_dir
std::vector<Json> ExpandGrid(const Json &grid);
SweepResult RunSweep(const Json &grid, const std::filesystem::path &base_dir, const std::filesystem::path &out_root,
                     int jobs);

enum class Selection { kFinal, kBest };

struct SummaryRow {
  std::string run;
  std::string strategy;
  proto::AblationFlags flags;
  std::string noise_type;
  std::string noise_rate;
  uint64_t seed = 0;
  int round = 0;
  std::vector<double> accuracy;  // per client
  double avg = 0.0;
  std::optional<double> avg_roc_auc;
  std::optional<double> avg_pr_auc;
};

std::vector<SummaryRow> CollectSummary(const std::filesystem::path &runs_dir, Selection sel);
std::string SummaryCsv(const std::vector<SummaryRow> &rows, Selection sel);

// Writes summary.csv (final round) and summary_best.csv under runs_dir and
// returns their paths. Throws before writing anything when there are no
// runs or some run is incomplete.
std::vector<std::filesystem::path> Summarize(const std::filesystem::path &runs_dir);

// CLI entry point. Exit codes: 0 ok, 1 run failure, 2 configuration error.
int Main(int argc, char **argv);

}  // namespace hetfed::exp

#endif  // HETFED_EXPCLI_H_
