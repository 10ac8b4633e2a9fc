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

// Synchronous round engine. A single controller owns aggregation state and
// exchanges RoundMessages with clients over an in-process channel. Clients
// of one round may run on several threads; the controller always folds
// uploads in ascending client id so results do not depend on scheduling.

#ifndef HETFED_FEDPROTO_H_
#define HETFED_FEDPROTO_H_

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hetfed/datahub.h"
#include "hetfed/metrics.h"
#include "hetfed/nnkernel.h"
#include "hetfed/rhflcore.h"

namespace hetfed::proto {

enum class Strategy { kLocalOnly, kFedAvg, kHeteroDistill, kRhfl, kRhflPlusCcr, kRhflPlusEccr };

const char *StrategyName(Strategy s);
Strategy ParseStrategy(const std::string &name);

enum class Reweight { kNone, kCcr, kEccr };

const char *ReweightName(Reweight r);
Reweight ParseReweight(const std::string &name);

// Component switches of the robust pipeline: collaborative distillation
// (hfl), symmetric CE (sl), dynamic label refinement (dlr) and client
// confidence reweighting.
struct AblationFlags {
  bool hfl = false;
  bool sl = false;
  bool dlr = false;
  Reweight reweight = Reweight::kNone;
  bool operator==(const AblationFlags &) const = default;
};

AblationFlags DefaultFlags(Strategy s);

struct SimulatedDropout {
  int client_id = 0;
  int round = 1;
};

struct StrategyConfig {
  Strategy strategy = Strategy::kLocalOnly;
  int rounds = 1;
  int local_epochs = 1;
  int collab_epochs = 1;
  size_t batch_size = 32;
  nn::Hyperparams hyper;
  AblationFlags flags;
  double participation = 1.0;  // fedavg client fraction per round
  std::optional<SimulatedDropout> dropout;

  void Validate() const;
};

struct ClientState {
  int client_id = 0;
  nn::ModelParams params;
  data::NoisyDataset shard;
  uint64_t rng_seed = 0;
  // Last Phase 1 measurements, empty before the first training round.
  std::optional<double> prev_sl_loss;
  std::optional<std::vector<double>> prev_params;
  long private_epochs_done = 0;

  const nn::Architecture &arch() const { return params.layers(); }
};

struct ModelUpload {
  nn::ModelParams params;
  size_t sample_count = 0;
};
struct LogitShare {
  Matrix logits;
};
struct ConfidenceUpload {
  double q = 0.0;
  double mean_sl_loss = 0.0;
  std::optional<double> delta_sl;
  double update_ratio = 0.0;
};
struct WeightBroadcast {
  rhfl::WeightVector weights;
};
struct ModelBroadcast {
  nn::ModelParams params;
};
struct EvalReport {
  metrics::ClientEval eval;
};

enum class MessageKind { kModelUpload, kLogitShare, kConfidenceUpload, kWeightBroadcast, kModelBroadcast, kEvalReport };

const char *MessageKindName(MessageKind k);

struct RoundMessage {
  MessageKind kind;
  int round = 0;
  int client_id = -1;  // -1 for broadcasts
  std::variant<ModelUpload, LogitShare, ConfidenceUpload, WeightBroadcast, ModelBroadcast, EvalReport> payload;
};

struct AuditEntry {
  int round = 0;
  MessageKind kind;
  int client_id = -1;
  bool operator==(const AuditEntry &) const = default;
};

// Controller-side mailbox. Accepts only messages of the current round and
// records every accepted message, in order, in an audit trail.
class Controller {
 public:
  explicit Controller(int client_count) : client_count_(client_count) {}

  void BeginRound(int round);
  int round() const { return round_; }

  void Deliver(RoundMessage msg);
  void Broadcast(RoundMessage msg);

  // Messages of one kind from the expected clients, sorted by client id.
  // Throws ProtocolError naming the first missing client.
  std::vector<RoundMessage> Collect(MessageKind kind, const std::vector<int> &expected);

  const std::vector<AuditEntry> &audit() const { return audit_; }

 private:
  int client_count_;
  int round_ = 0;
  std::vector<RoundMessage> inbox_;
  std::vector<AuditEntry> audit_;
};

// True when rounds in the trail never decrease and each round's K eval
// reports all precede any message of a later round.
bool RoundBarrierHolds(const std::vector<AuditEntry> &audit, int client_count);

struct ClientRecord {
  int client_id = 0;
  metrics::ClientEval eval;
  std::optional<double> q;
  std::optional<double> p;
  std::optional<double> f;
  std::optional<double> w;
  std::optional<double> collab_loss;
};

struct RoundLog {
  int round = 0;
  std::vector<ClientRecord> clients;
  int clamp_events = 0;
  metrics::EvalResult summary;
};

struct Federation {
  std::vector<ClientState> clients;
  data::Dataset public_data;  // may be empty for local_only / fedavg
  data::Dataset test_data;    // clean labels
  uint64_t seed = 0;          // drives client sampling
};

// Size-weighted parameter mean.
nn::ModelParams FedAvgAggregate(const std::vector<nn::ModelParams> &params, const std::vector<size_t> &sizes);

// Sample order of one training epoch.
std::vector<size_t> EpochOrder(size_t n, uint64_t epoch_seed);

// Seed of a client's private-training epoch; stable across strategies.
uint64_t PrivateEpochSeed(uint64_t client_seed, int round, int epoch);
uint64_t CollabEpochSeed(uint64_t client_seed, int round, int epoch);

// One pass of minibatch SGD over `features` with per-row `targets`.
nn::ModelParams TrainEpoch(nn::ModelParams params, const Matrix &features, const Matrix &targets,
                           const nn::LossSpec &loss_template, size_t batch_size, double lr, uint64_t epoch_seed);

// One-hot rows of the given labels.
Matrix OneHotRows(const std::vector<int> &labels, size_t classes);

// Per-sample SL loss (tau = 1) against the noisy one-hot labels.
std::vector<double> PerSampleSlLoss(const nn::ModelParams &params, const data::NoisyDataset &shard,
                                    const nn::Hyperparams &h);

class Simulator {
 public:
  Simulator(Federation fed, StrategyConfig cfg, int jobs = 1);

  // Round-0 evaluation of the initial models.
  RoundLog EvaluateInitial();

  // Training round t >= 1.
  RoundLog RunRound(int t);

  RoundLog RunRoundLocal(int t);
  RoundLog RunRoundFedAvg(int t);
  RoundLog RunRoundHetero(int t);
  RoundLog RunRoundRhflPlus(int t);

  // Round 0 then rounds 1..T.
  std::vector<RoundLog> Run();

  const Federation &federation() const { return fed_; }
  const StrategyConfig &config() const { return cfg_; }
  const Controller &controller() const { return controller_; }
  const std::optional<nn::ModelParams> &global_model() const { return global_; }
  // Consensus logits computed by the last hetero round.
  const Matrix &last_consensus() const { return last_consensus_; }

 private:
  std::vector<int> AllClients() const;
  std::vector<int> SampleParticipants(int t) const;
  bool Drops(int client_id, int t) const;
  void TrainPrivate(ClientState &c, int t, bool use_sl, bool use_dlr) const;
  void TrainCollaborative(ClientState &c, int t, const Matrix &targets) const;
  Matrix PublicLogits(const ClientState &c) const;
  metrics::ClientEval Evaluate(const ClientState &c) const;
  RoundLog FinishRound(int t, std::vector<ClientRecord> records);
  // Runs fn(i) for every client index, up to jobs_ threads; rethrows the
  // error of the lowest failing index.
  template <typename Fn>
  void ForEachClient(const std::vector<int> &ids, Fn fn);

  Federation fed_;
  StrategyConfig cfg_;
  int jobs_;
  Controller controller_;
  std::optional<nn::ModelParams> global_;
  Matrix last_consensus_;
};

std::vector<RoundLog> RunExperiment(Federation fed, const StrategyConfig &cfg, int jobs = 1);

}  // namespace hetfed::proto

#endif  // HETFED_FEDPROTO_H_
