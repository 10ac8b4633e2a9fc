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

#include "hetfed/fedproto.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

namespace hetfed::proto {

namespace {

constexpr uint64_t kPrivateTag = 0x70726976ULL;
constexpr uint64_t kCollabTag = 0x636f6c6cULL;
constexpr uint64_t kSampleTag = 0x73616d70ULL;

bool UsesPublicData(const StrategyConfig &cfg) {
  switch (cfg.strategy) {
    case Strategy::kHeteroDistill:
      return true;
    case Strategy::kRhfl:
    case Strategy::kRhflPlusCcr:
    case Strategy::kRhflPlusEccr:
      return cfg.flags.hfl;
    default:
      return false;
  }
}

template <typename T>
const T &PayloadOf(const RoundMessage &m) {
  return std::get<T>(m.payload);
}

}  // namespace

const char *StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kLocalOnly:
      return "local_only";
    case Strategy::kFedAvg:
      return "fedavg";
    case Strategy::kHeteroDistill:
      return "hetero_distill";
    case Strategy::kRhfl:
      return "rhfl";
    case Strategy::kRhflPlusCcr:
      return "rhfl_plus_ccr";
    case Strategy::kRhflPlusEccr:
      return "rhfl_plus_eccr";
  }
  return "local_only";
}

Strategy ParseStrategy(const std::string &name) {
  for (Strategy s : {Strategy::kLocalOnly, Strategy::kFedAvg, Strategy::kHeteroDistill, Strategy::kRhfl,
                     Strategy::kRhflPlusCcr, Strategy::kRhflPlusEccr}) {
    if (name == StrategyName(s)) return s;
  }
  throw ConfigError("unknown strategy '" + name + "'");
}

const char *ReweightName(Reweight r) {
  switch (r) {
    case Reweight::kNone:
      return "none";
    case Reweight::kCcr:
      return "ccr";
    case Reweight::kEccr:
      return "eccr";
  }
  return "none";
}

Reweight ParseReweight(const std::string &name) {
  if (name == "none") return Reweight::kNone;
  if (name == "ccr") return Reweight::kCcr;
  if (name == "eccr") return Reweight::kEccr;
  throw ConfigError("unknown reweight mode '" + name + "'");
}

AblationFlags DefaultFlags(Strategy s) {
  switch (s) {
    case Strategy::kRhfl:
      return {true, true, false, Reweight::kCcr};
    case Strategy::kRhflPlusCcr:
      return {true, true, true, Reweight::kCcr};
    case Strategy::kRhflPlusEccr:
      return {true, true, true, Reweight::kEccr};
    default:
      return {};
  }
}

void StrategyConfig::Validate() const {
  if (rounds < 0 || local_epochs < 0 || collab_epochs < 0) {
    throw ConfigError("rounds, local_epochs and collab_epochs must be non-negative");
  }
  if (batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("participation must lie in (0,1]");
  }
  hyper.Validate();
}

const char *MessageKindName(MessageKind k) {
  switch (k) {
    case MessageKind::kModelUpload:
      return "ModelUpload";
    case MessageKind::kLogitShare:
      return "LogitShare";
    case MessageKind::kConfidenceUpload:
      return "ConfidenceUpload";
    case MessageKind::kWeightBroadcast:
      return "WeightBroadcast";
    case MessageKind::kModelBroadcast:
      return "ModelBroadcast";
    case MessageKind::kEvalReport:
      return "EvalReport";
  }
  return "?";
}

void Controller::BeginRound(int round) {
  if (round < round_) {
    throw ProtocolError("round " + std::to_string(round) + " started after round " + std::to_string(round_));
  }
  round_ = round;
  inbox_.clear();
}

void Controller::Deliver(RoundMessage msg) {
  if (msg.round != round_) {
    throw ProtocolError("stale " + std::string(MessageKindName(msg.kind)) + " for round " +
                        std::to_string(msg.round) + " from client " + std::to_string(msg.client_id) +
                        " (current round " + std::to_string(round_) + ")");
  }
  if (msg.client_id < 0 || msg.client_id >= client_count_) {
    throw ProtocolError("message from unknown client " + std::to_string(msg.client_id));
  }
  audit_.push_back({msg.round, msg.kind, msg.client_id});
  inbox_.push_back(std::move(msg));
}

void Controller::Broadcast(RoundMessage msg) {
  if (msg.round != round_) {
    throw ProtocolError("broadcast for round " + std::to_string(msg.round) + " during round " +
                        std::to_string(round_));
  }
  msg.client_id = -1;
  audit_.push_back({msg.round, msg.kind, -1});
}

std::vector<RoundMessage> Controller::Collect(MessageKind kind, const std::vector<int> &expected) {
  std::map<int, RoundMessage *> by_client;
  for (auto &m : inbox_) {
    if (m.kind != kind) continue;
    if (!by_client.emplace(m.client_id, &m).second) {
      throw ProtocolError("round " + std::to_string(round_) + ": duplicate " + MessageKindName(kind) +
                          " from client " + std::to_string(m.client_id));
    }
  }
  std::vector<int> ids = expected;
  std::sort(ids.begin(), ids.end());
  std::vector<RoundMessage> out;
  for (int id : ids) {
    auto it = by_client.find(id);
    if (it == by_client.end()) {
      throw ProtocolError("round " + std::to_string(round_) + ": missing " + MessageKindName(kind) +
                          " from client " + std::to_string(id));
    }
    out.push_back(std::move(*it->second));
  }
  std::erase_if(inbox_, [kind](const RoundMessage &m) { return m.kind == kind; });
  return out;
}

bool RoundBarrierHolds(const std::vector<AuditEntry> &audit, int client_count) {
  int current = audit.empty() ? 0 : audit.front().round;
  int reports = 0;
  for (const auto &e : audit) {
    if (e.round < current) return false;
    if (e.round > current) {
      if (reports != client_count) return false;
      current = e.round;
      reports = 0;
    }
    if (e.kind == MessageKind::kEvalReport) ++reports;
  }
  return true;
}

nn::ModelParams FedAvgAggregate(const std::vector<nn::ModelParams> &params, const std::vector<size_t> &sizes) {
  if (params.empty() || params.size() != sizes.size()) {
    throw ProtocolError("fedavg needs one size per model and at least one model");
  }
  for (const auto &p : params) {
    if (p.layers() != params.front().layers()) {
      throw ProtocolError("fedavg got heterogeneous model shapes");
    }
  }
  double total = 0.0;
  for (size_t s : sizes) {
    if (s == 0) throw ProtocolError("fedavg got a zero sample count");
    total += static_cast<double>(s);
  }
  // Accumulate weighted offsets from the first model: the same weighted mean,
  // but exact whenever all inputs agree (e.g. a round with no local epochs).
  const auto &anchor = params.front().values();
  std::vector<double> out = anchor;
  for (size_t i = 1; i < params.size(); ++i) {
    const double w = static_cast<double>(sizes[i]) / total;
    const auto &v = params[i].values();
    for (size_t j = 0; j < out.size(); ++j) {
      out[j] += w * (v[j] - anchor[j]);
    }
  }
  return nn::ModelParams(params.front().layers(), std::move(out));
}

std::vector<size_t> EpochOrder(size_t n, uint64_t epoch_seed) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

uint64_t PrivateEpochSeed(uint64_t client_seed, int round, int epoch) {
  return DeriveSeed(client_seed, {kPrivateTag, static_cast<uint64_t>(round), static_cast<uint64_t>(epoch)});
}

uint64_t CollabEpochSeed(uint64_t client_seed, int round, int epoch) {
  return DeriveSeed(client_seed, {kCollabTag, static_cast<uint64_t>(round), static_cast<uint64_t>(epoch)});
}

nn::ModelParams TrainEpoch(nn::ModelParams params, const Matrix &features, const Matrix &targets,
                           const nn::LossSpec &loss_template, size_t batch_size, double lr, uint64_t epoch_seed) {
  const auto order = EpochOrder(features.rows(), epoch_seed);
  nn::LossSpec spec = loss_template;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    std::span<const size_t> idx(order.data() + start, end - start);
    std::visit([&](auto &s) { s.targets = targets.SelectRows(idx); }, spec);
    const auto g = nn::Backward(params, features.SelectRows(idx), spec);
    params = nn::SgdStep(params, g.grad, lr);
  }
  return params;
}

Matrix OneHotRows(const std::vector<int> &labels, size_t classes) {
  Matrix m(labels.size(), classes, 0.0);
  for (size_t r = 0; r < labels.size(); ++r) {
    m(r, static_cast<size_t>(labels[r])) = 1.0;
  }
  return m;
}

std::vector<double> PerSampleSlLoss(const nn::ModelParams &params, const data::NoisyDataset &shard,
                                    const nn::Hyperparams &h) {
  const Matrix probs = nn::SoftmaxRows(nn::MlpForward(params, shard.base.features), 1.0);
  std::vector<double> out(shard.size());
  const size_t classes = params.output_dim();
  for (size_t r = 0; r < shard.size(); ++r) {
    auto row = probs.row(r);
    nn::ProbDist pred{std::vector<double>(row.begin(), row.end())};
    out[r] = nn::SlLoss(pred, nn::ProbDist::OneHot(shard.noisy_labels[r], classes), h);
  }
  return out;
}

Simulator::Simulator(Federation fed, StrategyConfig cfg, int jobs)
    : fed_(std::move(fed)), cfg_(std::move(cfg)), jobs_(std::max(1, jobs)),
      controller_(static_cast<int>(fed_.clients.size())) {
  cfg_.Validate();
  if (cfg_.strategy == Strategy::kLocalOnly || cfg_.strategy == Strategy::kFedAvg ||
      cfg_.strategy == Strategy::kHeteroDistill) {
    cfg_.flags = AblationFlags{};
  }
  if (fed_.clients.empty()) {
    throw ConfigError("federation has no clients");
  }
  for (size_t i = 0; i < fed_.clients.size(); ++i) {
    if (fed_.clients[i].client_id != static_cast<int>(i)) {
      throw ConfigError("client ids must be 0..K-1 in order");
    }
    if (fed_.clients[i].shard.size() == 0) {
      throw ConfigError("client " + std::to_string(i) + " has an empty shard");
    }
  }
  if (fed_.test_data.size() == 0) {
    throw ConfigError("federation has no test data");
  }
  if (UsesPublicData(cfg_) && fed_.public_data.size() == 0) {
    throw ConfigError(std::string(StrategyName(cfg_.strategy)) + " requires a public dataset");
  }
  if (cfg_.strategy == Strategy::kFedAvg) {
    for (const auto &c : fed_.clients) {
      if (c.arch() != fed_.clients.front().arch()) {
        throw ConfigError("fedavg requires the same architecture on every client");
      }
    }
    global_ = fed_.clients.front().params;
    for (auto &c : fed_.clients) c.params = *global_;
  }
}

std::vector<int> Simulator::AllClients() const {
  std::vector<int> ids(fed_.clients.size());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

std::vector<int> Simulator::SampleParticipants(int t) const {
  auto ids = AllClients();
  if (cfg_.participation >= 1.0) return ids;
  const size_t m = std::max<size_t>(1, static_cast<size_t>(std::ceil(cfg_.participation * ids.size())));
  std::mt19937_64 rng(DeriveSeed(fed_.seed, {kSampleTag, static_cast<uint64_t>(t)}));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Simulator::Drops(int client_id, int t) const {
  return cfg_.dropout && cfg_.dropout->client_id == client_id && cfg_.dropout->round == t;
}

template <typename Fn>
void Simulator::ForEachClient(const std::vector<int> &ids, Fn fn) {
  std::vector<std::exception_ptr> errors(ids.size());
  auto work = [&](size_t i) {
    try {
      fn(fed_.clients[ids[i]]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const size_t threads = std::min<size_t>(jobs_, ids.size());
  if (threads <= 1) {
    for (size_t i = 0; i < ids.size(); ++i) work(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < ids.size(); i = next++) work(i);
      });
    }
    for (auto &th : pool) th.join();
  }
  for (auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void Simulator::TrainPrivate(ClientState &c, int t, bool use_sl, bool use_dlr) const {
  const auto &h = cfg_.hyper;
  const size_t classes = c.params.output_dim();
  const Matrix noisy = OneHotRows(c.shard.noisy_labels, classes);
  const rhfl::DlrSchedule sched{h.zeta, std::max<long>(1, static_cast<long>(cfg_.rounds) * cfg_.local_epochs)};
  for (int e = 0; e < cfg_.local_epochs; ++e) {
    ++c.private_epochs_done;
    Matrix targets = noisy;
    if (use_dlr) {
      const double s = rhfl::DlrWeight(c.private_epochs_done, sched);
      const Matrix preds = nn::SoftmaxRows(nn::MlpForward(c.params, c.shard.base.features), 1.0);
      for (size_t r = 0; r < targets.rows(); ++r) {
        auto nr = noisy.row(r);
        auto pr = preds.row(r);
        const auto refined = rhfl::DlrRefine(nn::ProbDist{{nr.begin(), nr.end()}},
                                             nn::ProbDist{{pr.begin(), pr.end()}}, s);
        std::copy(refined.probs.begin(), refined.probs.end(), targets.row(r).begin());
      }
    }
    nn::LossSpec spec;
    if (use_sl) {
      spec = nn::SlSpec{{}, h.lambda, h.gamma, h.rce_log_floor, 1.0};
    } else {
      spec = nn::CeSpec{{}, 1.0};
    }
    c.params = TrainEpoch(std::move(c.params), c.shard.base.features, targets, spec, cfg_.batch_size, h.lr,
                          PrivateEpochSeed(c.rng_seed, t, e));
  }
}

void Simulator::TrainCollaborative(ClientState &c, int t, const Matrix &targets) const {
  const nn::LossSpec spec = nn::KlSpec{{}, cfg_.hyper.temperature};
  for (int e = 0; e < cfg_.collab_epochs; ++e) {
    c.params = TrainEpoch(std::move(c.params), fed_.public_data.features, targets, spec, cfg_.batch_size,
                          cfg_.hyper.lr, CollabEpochSeed(c.rng_seed, t, e));
  }
}

Matrix Simulator::PublicLogits(const ClientState &c) const { return nn::MlpForward(c.params, fed_.public_data.features); }

metrics::ClientEval Simulator::Evaluate(const ClientState &c) const {
  const Matrix probs = nn::SoftmaxRows(nn::MlpForward(c.params, fed_.test_data.features), 1.0);
  metrics::ClientEval e = metrics::EvaluateProbs(probs, fed_.test_data.labels);
  const auto losses = PerSampleSlLoss(c.params, c.shard, cfg_.hyper);
  e.mean_sl_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  return e;
}

RoundLog Simulator::FinishRound(int t, std::vector<ClientRecord> records) {
  // Every client reports its evaluation; this closes the round.
  for (auto &r : records) {
    controller_.Deliver({MessageKind::kEvalReport, t, r.client_id, EvalReport{r.eval}});
  }
  std::map<int, metrics::ClientEval> per_client;
  for (const auto &m : controller_.Collect(MessageKind::kEvalReport, AllClients())) {
    per_client[m.client_id] = PayloadOf<EvalReport>(m).eval;
  }
  RoundLog log;
  log.round = t;
  for (auto &r : records) r.eval = per_client.at(r.client_id);
  log.clients = std::move(records);
  log.summary = metrics::Aggregate(std::move(per_client));
  return log;
}

RoundLog Simulator::EvaluateInitial() {
  controller_.BeginRound(0);
  std::vector<ClientRecord> records(fed_.clients.size());
  ForEachClient(AllClients(), [&](ClientState &c) {
    records[c.client_id].client_id = c.client_id;
    records[c.client_id].eval = Evaluate(c);
  });
  return FinishRound(0, std::move(records));
}

RoundLog Simulator::RunRound(int t) {
  if (t < 1) {
    throw ConfigError("training rounds are numbered from 1");
  }
  switch (cfg_.strategy) {
    case Strategy::kLocalOnly:
      return RunRoundLocal(t);
    case Strategy::kFedAvg:
      return RunRoundFedAvg(t);
    case Strategy::kHeteroDistill:
      return RunRoundHetero(t);
    default:
      return RunRoundRhflPlus(t);
  }
}

RoundLog Simulator::RunRoundLocal(int t) {
  controller_.BeginRound(t);
  std::vector<ClientRecord> records(fed_.clients.size());
  ForEachClient(AllClients(), [&](ClientState &c) {
    TrainPrivate(c, t, false, false);
    records[c.client_id].client_id = c.client_id;
    records[c.client_id].eval = Evaluate(c);
  });
  return FinishRound(t, std::move(records));
}

RoundLog Simulator::RunRoundFedAvg(int t) {
  controller_.BeginRound(t);
  controller_.Broadcast({MessageKind::kModelBroadcast, t, -1, ModelBroadcast{*global_}});
  const auto participants = SampleParticipants(t);
  std::vector<std::optional<RoundMessage>> uploads(fed_.clients.size());
  ForEachClient(participants, [&](ClientState &c) {
    c.params = *global_;
    TrainPrivate(c, t, false, false);
    if (!Drops(c.client_id, t)) {
      uploads[c.client_id] = RoundMessage{MessageKind::kModelUpload, t, c.client_id,
                                          ModelUpload{c.params, c.shard.size()}};
    }
  });
  for (auto &u : uploads) {
    if (u) controller_.Deliver(std::move(*u));
  }
  std::vector<nn::ModelParams> models;
  std::vector<size_t> sizes;
  for (const auto &m : controller_.Collect(MessageKind::kModelUpload, participants)) {
    const auto &up = PayloadOf<ModelUpload>(m);
    models.push_back(up.params);
    sizes.push_back(up.sample_count);
  }
  global_ = FedAvgAggregate(models, sizes);
  for (auto &c : fed_.clients) c.params = *global_;

  std::vector<ClientRecord> records(fed_.clients.size());
  ForEachClient(AllClients(), [&](ClientState &c) {
    records[c.client_id].client_id = c.client_id;
    records[c.client_id].eval = Evaluate(c);
  });
  return FinishRound(t, std::move(records));
}

RoundLog Simulator::RunRoundHetero(int t) {
  controller_.BeginRound(t);
  const size_t k = fed_.clients.size();
  std::vector<std::optional<RoundMessage>> shares(k);
  ForEachClient(AllClients(), [&](ClientState &c) {
    if (!Drops(c.client_id, t)) {
      shares[c.client_id] = RoundMessage{MessageKind::kLogitShare, t, c.client_id, LogitShare{PublicLogits(c)}};
    }
  });
  for (auto &s : shares) {
    if (s) controller_.Deliver(std::move(*s));
  }
  const auto collected = controller_.Collect(MessageKind::kLogitShare, AllClients());
  std::vector<Matrix> logits;
  for (const auto &m : collected) logits.push_back(PayloadOf<LogitShare>(m).logits);

  Matrix consensus(logits.front().rows(), logits.front().cols(), 0.0);
  for (const auto &l : logits) {
    for (size_t i = 0; i < consensus.data().size(); ++i) consensus.data()[i] += l.data()[i];
  }
  for (double &x : consensus.data()) x /= static_cast<double>(k);
  last_consensus_ = consensus;
  controller_.Broadcast({MessageKind::kLogitShare, t, -1, LogitShare{consensus}});
  const Matrix target = nn::SoftmaxRows(consensus, cfg_.hyper.temperature);

  std::vector<ClientRecord> records(k);
  ForEachClient(AllClients(), [&](ClientState &c) {
    auto &rec = records[c.client_id];
    rec.client_id = c.client_id;
    rec.collab_loss =
        nn::EvaluateLoss(c.params, fed_.public_data.features, nn::KlSpec{target, cfg_.hyper.temperature});
    TrainCollaborative(c, t, target);
    TrainPrivate(c, t, false, false);
    rec.eval = Evaluate(c);
  });
  return FinishRound(t, std::move(records));
}

RoundLog Simulator::RunRoundRhflPlus(int t) {
  controller_.BeginRound(t);
  const AblationFlags &flags = cfg_.flags;
  const size_t k = fed_.clients.size();
  const auto all = AllClients();
  std::vector<ClientRecord> records(k);
  for (size_t i = 0; i < k; ++i) records[i].client_id = static_cast<int>(i);
  int clamp_events = 0;

  std::vector<Matrix> logits;
  rhfl::WeightVector weights;
  if (flags.hfl) {
    // Phase 1: inference only.
    const bool reweight = flags.reweight != Reweight::kNone;
    std::vector<std::vector<RoundMessage>> outbox(k);
    ForEachClient(all, [&](ClientState &c) {
      if (Drops(c.client_id, t)) return;
      if (reweight) {
        const auto losses = PerSampleSlLoss(c.params, c.shard, cfg_.hyper);
        ConfidenceUpload up;
        up.q = rhfl::LabelQuality(losses);
        up.mean_sl_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
        if (c.prev_sl_loss && c.prev_params) {
          up.delta_sl = *c.prev_sl_loss - up.mean_sl_loss;
          std::vector<double> delta(c.params.values().size());
          for (size_t j = 0; j < delta.size(); ++j) delta[j] = c.params.values()[j] - (*c.prev_params)[j];
          const double base = nn::L2Norm(*c.prev_params);
          up.update_ratio = base > 0.0 ? nn::L2Norm(delta) / base : 0.0;
        }
        c.prev_sl_loss = up.mean_sl_loss;
        c.prev_params = c.params.values();
        outbox[c.client_id].push_back({MessageKind::kConfidenceUpload, t, c.client_id, up});
      }
      outbox[c.client_id].push_back({MessageKind::kLogitShare, t, c.client_id, LogitShare{PublicLogits(c)}});
    });
    for (auto &msgs : outbox) {
      for (auto &m : msgs) controller_.Deliver(std::move(m));
    }

    if (reweight) {
      const auto confs = controller_.Collect(MessageKind::kConfidenceUpload, all);
      std::vector<rhfl::ConfidenceReport> reports;
      bool have_history = true;
      for (const auto &m : confs) {
        const auto &up = PayloadOf<ConfidenceUpload>(m);
        rhfl::ConfidenceReport r;
        r.client_id = m.client_id;
        r.q = up.q;
        r.delta_sl = up.delta_sl.value_or(0.0);
        r.update_ratio = up.update_ratio;
        have_history = have_history && up.delta_sl.has_value();
        reports.push_back(r);
        records[m.client_id].q = up.q;
      }
      if (have_history) {
        rhfl::ScoreReports(reports, flags.reweight == Reweight::kEccr ? rhfl::ConfidenceMode::kEccr
                                                                      : rhfl::ConfidenceMode::kCcr);
        std::vector<double> f;
        for (const auto &r : reports) {
          f.push_back(r.f);
          records[r.client_id].p = r.p;
          records[r.client_id].f = r.f;
        }
        weights = rhfl::ConfidenceWeights(f, cfg_.hyper.eta_conf);
        clamp_events = weights.clamp_events;
      } else {
        weights = rhfl::UniformWeights(k);
      }
    } else {
      weights = rhfl::UniformWeights(k);
    }
    for (const auto &m : controller_.Collect(MessageKind::kLogitShare, all)) {
      logits.push_back(PayloadOf<LogitShare>(m).logits);
    }
    controller_.Broadcast({MessageKind::kWeightBroadcast, t, -1, WeightBroadcast{weights}});
    for (size_t i = 0; i < k; ++i) records[i].w = weights.weights[i];
  }

  ForEachClient(all, [&](ClientState &c) {
    auto &rec = records[c.client_id];
    if (flags.hfl) {
      // Phase 2: collaborative training on the public set.
      const double tau = cfg_.hyper.temperature;
      rec.collab_loss = rhfl::CollaborativeLoss(logits[c.client_id], logits, c.client_id, weights, tau);
      TrainCollaborative(c, t, rhfl::CollaborativeTarget(logits, c.client_id, weights, tau));
    }
    // Phase 3: private retraining.
    TrainPrivate(c, t, flags.sl, flags.dlr);
    rec.eval = Evaluate(c);
  });
  RoundLog log = FinishRound(t, std::move(records));
  log.clamp_events = clamp_events;
  return log;
}

std::vector<RoundLog> Simulator::Run() {
  std::vector<RoundLog> logs;
  logs.push_back(EvaluateInitial());
  for (int t = 1; t <= cfg_.rounds; ++t) {
    logs.push_back(RunRound(t));
  }
  return logs;
}

std::vector<RoundLog> RunExperiment(Federation fed, const StrategyConfig &cfg, int jobs) {
  Simulator sim(std::move(fed), cfg, jobs);
  return sim.Run();
}

}  // namespace hetfed::proto
