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

#include "hetfed/expcli.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

namespace hetfed::exp {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kDataTag = 1;
constexpr uint64_t kPartitionTag = 2;
constexpr uint64_t kNoiseTag = 3;
constexpr uint64_t kNoiseRateTag = 4;
constexpr uint64_t kInitTag = 5;
constexpr uint64_t kTrainTag = 6;

Json SchemaTypes() {
  return Json{
      {"seed", "uint"},
      {"strategy", "string"},
      {"rounds", "int"},
      {"local_epochs", "int"},
      {"collab_epochs", "int"},
      {"batch_size", "int"},
      {"participation", "number"},
      {"hyperparams",
       {{"lambda", "number"},
        {"gamma", "number"},
        {"temperature", "number"},
        {"lr", "number"},
        {"zeta", "number"},
        {"eta_conf", "number"},
        {"rce_log_floor", "number"}}},
      {"ablation", "ablation"},
      {"dropout", "dropout"},
      {"dataset",
       {{"source", "string"},
        {"classes", "int"},
        {"dims", "int"},
        {"spread", "number"},
        {"clients", "int"},
        {"samples_per_client", "int"},
        {"partition", "string"},
        {"concentration", "number"},
        {"n_pub", "int"},
        {"n_test", "int"},
        {"idx_images", "string"},
        {"idx_labels", "string"},
        {"csv_path", "string"}}},
      {"noise", {{"type", "string"}, {"rate", "number"}, {"random_rate", "range"}}},
      {"models", "models"},
  };
}

[[noreturn]] void Fail(const std::string &origin, const std::string &key, const std::string &what) {
  throw ConfigError(origin + ": key '" + key + "' " + what);
}

void CheckLeaf(const std::string &type, const Json &v, const std::string &origin, const std::string &key) {
  if (type == "int") {
    if (!v.is_number_integer()) Fail(origin, key, "expects an integer");
  } else if (type == "uint") {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      Fail(origin, key, "expects a non-negative integer");
    }
  } else if (type == "number") {
    if (!v.is_number()) Fail(origin, key, "expects a number");
  } else if (type == "string") {
    if (!v.is_string()) Fail(origin, key, "expects a string");
  } else if (type == "ablation") {
    if (v.is_null()) return;
    if (!v.is_object()) Fail(origin, key, "expects an object or null");
    for (const auto &[k, x] : v.items()) {
      if (k == "hfl" || k == "sl" || k == "dlr") {
        if (!x.is_boolean()) Fail(origin, key + "." + k, "expects a boolean");
      } else if (k == "reweight") {
        if (!x.is_string()) Fail(origin, key + "." + k, "expects a string");
      } else {
        Fail(origin, key + "." + k, "is not a known configuration key");
      }
    }
  } else if (type == "dropout") {
    if (v.is_null()) return;
    if (!v.is_object()) Fail(origin, key, "expects an object or null");
    for (const auto &[k, x] : v.items()) {
      if (k != "client" && k != "round") Fail(origin, key + "." + k, "is not a known configuration key");
      if (!x.is_number_integer()) Fail(origin, key + "." + k, "expects an integer");
    }
  } else if (type == "range") {
    if (v.is_null()) return;
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      Fail(origin, key, "expects [lo, hi] or null");
    }
  } else if (type == "models") {
    if (!v.is_array() || v.empty()) Fail(origin, key, "expects a non-empty list of hidden-width lists");
    for (const auto &m : v) {
      if (!m.is_array()) Fail(origin, key, "expects a list of hidden-width lists");
      for (const auto &w : m) {
        if (!w.is_number_integer() || w.get<long long>() <= 0) Fail(origin, key, "expects positive integer widths");
      }
    }
  }
}

void MergeWithSchema(Json &base, const Json &overlay, const Json &schema, const std::string &origin,
                     const std::string &prefix) {
  if (!overlay.is_object()) {
    Fail(origin, prefix.empty() ? "<root>" : prefix, "expects an object");
  }
  for (const auto &[k, v] : overlay.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!schema.contains(k)) {
      Fail(origin, key, "is not a known configuration key");
    }
    const Json &type = schema[k];
    if (type.is_object()) {
      MergeWithSchema(base[k], v, type, origin, key);
      continue;
    }
    // Required keys may be explicitly null in an echoed config.
    if (v.is_null() && (k == "seed" || k == "strategy")) {
      base[k] = v;
      continue;
    }
    CheckLeaf(type.get<std::string>(), v, origin, key);
    base[k] = v;
  }
}

Json Nest(const std::string &dotted, Json value) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](const auto &p) { return p.empty(); })) {
    throw ConfigError("malformed key '" + dotted + "'");
  }
  Json out = std::move(value);
  for (size_t i = parts.size(); i-- > 0;) {
    Json wrap = Json::object();
    wrap[parts[i]] = std::move(out);
    out = std::move(wrap);
  }
  return out;
}

uint64_t ParseSeed(const std::string &text, const std::string &origin) {
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::logic_error &) {
    throw ConfigError(origin + ": seed '" + text + "' is not a non-negative integer");
  }
}

Json ReadJsonFile(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void WriteFile(const fs::path &path, const std::string &content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string NumberText(double x) { return Json(x).dump(); }

Json OptionalNumber(const std::optional<double> &x) { return x ? Json(*x) : Json(nullptr); }

// Effective ablation flags of a resolved config.
proto::AblationFlags FlagsOf(const Json &resolved) {
  const auto strategy = proto::ParseStrategy(resolved.at("strategy").get<std::string>());
  proto::AblationFlags flags = proto::DefaultFlags(strategy);
  const bool flag_driven = strategy == proto::Strategy::kRhfl || strategy == proto::Strategy::kRhflPlusCcr ||
                           strategy == proto::Strategy::kRhflPlusEccr;
  const Json &a = resolved.at("ablation");
  if (flag_driven && a.is_object()) {
    if (a.contains("hfl")) flags.hfl = a["hfl"].get<bool>();
    if (a.contains("sl")) flags.sl = a["sl"].get<bool>();
    if (a.contains("dlr")) flags.dlr = a["dlr"].get<bool>();
    if (a.contains("reweight")) flags.reweight = proto::ParseReweight(a["reweight"].get<std::string>());
  }
  return flags;
}

}  // namespace

Json DefaultConfig() {
  return Json{
      {"seed", nullptr},
      {"strategy", nullptr},
      {"rounds", 20},
      {"local_epochs", 2},
      {"collab_epochs", 1},
      {"batch_size", 32},
      {"participation", 1.0},
      {"hyperparams",
       {{"lambda", 0.4},
        {"gamma", 0.9},
        {"temperature", 4.0},
        {"lr", 0.001},
        {"zeta", 10.0},
        {"eta_conf", 1.2},
        {"rce_log_floor", -4.0}}},
      {"ablation", nullptr},
      {"dropout", nullptr},
      {"dataset",
       {{"source", "blobs"},
        {"classes", 3},
        {"dims", 2},
        {"spread", 0.6},
        {"clients", 4},
        {"samples_per_client", 400},
        {"partition", "iid-equal"},
        {"concentration", 1.0},
        {"n_pub", 300},
        {"n_test", 600},
        {"idx_images", ""},
        {"idx_labels", ""},
        {"csv_path", ""}}},
      {"noise", {{"type", "pairflip"}, {"rate", 0.2}, {"random_rate", nullptr}}},
      {"models", Json::array({Json::array({8}), Json::array({16}), Json::array({8, 8}), Json::array({32})})},
  };
}

void MergeConfig(Json &base, const Json &overlay, const std::string &origin) {
  MergeWithSchema(base, overlay, SchemaTypes(), origin, "");
}

void ApplySet(Json &config, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  MergeConfig(config, Nest(key, std::move(value)), "--set " + key);
}

ExperimentConfig Resolve(Json merged) {
  for (const char *key : {"seed", "strategy"}) {
    if (!merged.contains(key) || merged[key].is_null()) {
      throw ConfigError("missing required key '" + std::string(key) + "'");
    }
  }
  ExperimentConfig cfg;
  cfg.seed = merged["seed"].get<uint64_t>();

  auto &s = cfg.strategy;
  s.strategy = proto::ParseStrategy(merged["strategy"].get<std::string>());
  s.rounds = merged["rounds"].get<int>();
  s.local_epochs = merged["local_epochs"].get<int>();
  s.collab_epochs = merged["collab_epochs"].get<int>();
  const int batch = merged["batch_size"].get<int>();
  if (batch <= 0) throw ConfigError("key 'batch_size' must be positive");
  s.batch_size = static_cast<size_t>(batch);
  s.participation = merged["participation"].get<double>();
  const Json &h = merged["hyperparams"];
  s.hyper.lambda = h["lambda"].get<double>();
  s.hyper.gamma = h["gamma"].get<double>();
  s.hyper.temperature = h["temperature"].get<double>();
  s.hyper.lr = h["lr"].get<double>();
  s.hyper.zeta = h["zeta"].get<double>();
  s.hyper.eta_conf = h["eta_conf"].get<double>();
  s.hyper.rce_log_floor = h["rce_log_floor"].get<double>();
  s.flags = FlagsOf(merged);
  if (merged["dropout"].is_object()) {
    s.dropout = proto::SimulatedDropout{merged["dropout"].value("client", 0), merged["dropout"].value("round", 1)};
  }
  s.Validate();

  auto &d = cfg.data;
  const Json &ds = merged["dataset"];
  d.source = ds["source"].get<std::string>();
  if (d.source != "blobs" && d.source != "idx" && d.source != "csv") {
    throw ConfigError("key 'dataset.source' must be blobs, idx or csv");
  }
  auto non_negative = [&](const char *key) {
    const long long v = ds[key].get<long long>();
    if (v < 0) throw ConfigError(std::string("key 'dataset.") + key + "' must be non-negative");
    return static_cast<size_t>(v);
  };
  d.classes = ds["classes"].get<int>();
  d.dims = ds["dims"].get<int>();
  d.spread = ds["spread"].get<double>();
  d.clients = non_negative("clients");
  d.samples_per_client = non_negative("samples_per_client");
  d.partition = ds["partition"].get<std::string>();
  data::ParsePartitionScheme(d.partition);
  d.concentration = ds["concentration"].get<double>();
  d.n_pub = non_negative("n_pub");
  d.n_test = non_negative("n_test");
  d.idx_images = ds["idx_images"].get<std::string>();
  d.idx_labels = ds["idx_labels"].get<std::string>();
  d.csv_path = ds["csv_path"].get<std::string>();
  if (d.clients == 0) throw ConfigError("key 'dataset.clients' must be positive");
  if (d.n_test == 0) throw ConfigError("key 'dataset.n_test' must be positive");

  const Json &noise = merged["noise"];
  d.noise_type = data::ParseNoiseType(noise["type"].get<std::string>());
  d.noise_rate = noise["rate"].get<double>();
  if (!(d.noise_rate >= 0.0 && d.noise_rate <= 1.0)) throw ConfigError("key 'noise.rate' must lie in [0,1]");
  if (noise["random_rate"].is_array()) {
    d.random_rate = std::make_pair(noise["random_rate"][0].get<double>(), noise["random_rate"][1].get<double>());
  }

  for (const auto &m : merged["models"]) cfg.models.push_back(m.get<std::vector<size_t>>());
  cfg.resolved = std::move(merged);
  return cfg;
}

ExperimentConfig ParseConfig(const ConfigSources &sources) {
  Json cfg = DefaultConfig();
  if (sources.env_seed && !sources.env_seed->empty()) {
    cfg["seed"] = ParseSeed(*sources.env_seed, "HETFED_SEED");
  }
  for (const auto &path : sources.files) {
    MergeConfig(cfg, ReadJsonFile(path), path);
  }
  for (const auto &s : sources.sets) {
    ApplySet(cfg, s);
  }
  if (sources.noise_rate) {
    MergeConfig(cfg, Json{{"noise", {{"rate", *sources.noise_rate}}}}, "--noise-rate");
  }
  return Resolve(std::move(cfg));
}

std::vector<double> RandomNoiseAssignment(size_t k, double lo, double hi, uint64_t seed) {
  if (!(lo >= 0.0 && lo <= hi && hi <= 1.0)) {
    throw ConfigError("noise range [" + NumberText(lo) + ", " + NumberText(hi) + "] must satisfy 0 <= lo <= hi <= 1");
  }
  std::vector<double> out(k);
  if (lo == hi) {
    std::fill(out.begin(), out.end(), lo);
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double &x : out) x = dist(rng);
  return out;
}

BuiltFederation BuildFederation(const ExperimentConfig &cfg) {
  const DataConfig &d = cfg.data;
  data::Dataset base;
  if (d.source == "blobs") {
    if (d.samples_per_client == 0) {
      throw ConfigError("key 'dataset.samples_per_client' must be positive for blobs");
    }
    const size_t total = d.clients * d.samples_per_client + d.n_pub + d.n_test;
    const size_t per_class = (total + d.classes - 1) / d.classes;
    base = data::GenBlobs(d.classes, d.dims, static_cast<int>(per_class), d.spread,
                          DeriveSeed(cfg.seed, {kDataTag}));
  } else if (d.source == "idx") {
    base = data::LoadIdx(d.idx_images, d.idx_labels, d.classes);
  } else {
    base = data::LoadCsv(d.csv_path, {static_cast<size_t>(d.dims), d.classes});
  }
  base.Validate();

  data::PartitionPlan plan;
  plan.client_count = d.clients;
  plan.seed = DeriveSeed(cfg.seed, {kPartitionTag});
  plan.concentration = d.concentration;
  const auto scheme = data::ParsePartitionScheme(d.partition);
  if (scheme == data::PartitionScheme::kLabelSkew) {
    plan.scheme = scheme;
  } else if (d.samples_per_client > 0) {
    plan.scheme = data::PartitionScheme::kIidSized;
    plan.sizes.assign(d.clients, d.samples_per_client);
  } else {
    plan.scheme = data::PartitionScheme::kIidEqual;
  }
  const auto split = data::SplitPools(base, d.n_pub, d.n_test, plan);

  std::vector<double> rates(d.clients, d.noise_rate);
  if (d.random_rate) {
    rates = RandomNoiseAssignment(d.clients, d.random_rate->first, d.random_rate->second,
                                  DeriveSeed(cfg.seed, {kNoiseRateTag}));
  }

  BuiltFederation out;
  auto &fed = out.federation;
  fed.seed = cfg.seed;
  if (d.n_pub > 0) fed.public_data = base.Subset(split.public_indices);
  fed.test_data = base.Subset(split.test_indices);
  Json clients = Json::array();
  for (size_t i = 0; i < d.clients; ++i) {
    proto::ClientState c;
    c.client_id = static_cast<int>(i);
    const data::NoiseSpec spec{d.noise_type, rates[i], DeriveSeed(cfg.seed, {kNoiseTag, i})};
    if (split.client_indices[i].empty()) {
      throw ConfigError("client " + std::to_string(i) + " received an empty shard");
    }
    c.shard = data::InjectNoise(base.Subset(split.client_indices[i]), spec);
    const auto &hidden = cfg.models[i % cfg.models.size()];
    c.params = nn::ModelParams::Init(nn::MakeMlp(base.dims(), hidden, base.class_count),
                                     DeriveSeed(cfg.seed, {kInitTag, i}));
    c.rng_seed = DeriveSeed(cfg.seed, {kTrainTag, i});
    clients.push_back(Json{{"client", i},
                           {"hidden", hidden},
                           {"shard_size", c.shard.size()},
                           {"noise_type", data::NoiseTypeName(d.noise_type)},
                           {"noise_rate", rates[i]},
                           {"flip_fraction", c.shard.flip_fraction}});
    fed.clients.push_back(std::move(c));
  }
  out.manifest = Json{{"config_hash", ConfigHash(cfg.resolved)},
                      {"clients", std::move(clients)},
                      {"public_size", fed.public_data.size()},
                      {"test_size", fed.test_data.size()}};
  return out;
}

std::string ConfigHash(const Json &resolved) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RoundLogToJsonl(const std::vector<proto::RoundLog> &logs) {
  std::string out;
  for (const auto &log : logs) {
    for (const auto &c : log.clients) {
      nlohmann::ordered_json rec;
      rec["round"] = log.round;
      rec["client"] = c.client_id;
      rec["accuracy"] = c.eval.accuracy;
      rec["roc_auc"] = OptionalNumber(c.eval.roc_auc);
      rec["pr_auc"] = OptionalNumber(c.eval.pr_auc);
      rec["mean_sl_loss"] = c.eval.mean_sl_loss;
      rec["q"] = OptionalNumber(c.q);
      rec["p"] = OptionalNumber(c.p);
      rec["f"] = OptionalNumber(c.f);
      rec["w"] = OptionalNumber(c.w);
      rec["collab_loss"] = OptionalNumber(c.collab_loss);
      rec["clamp_events"] = log.clamp_events;
      out += rec.dump();
      out += '\n';
    }
  }
  return out;
}

RunOutcome RunToDirectory(const ExperimentConfig &cfg, const fs::path &out_root, int jobs, bool force,
                          bool record_timing) {
  RunOutcome outcome;
  outcome.dir = out_root / ("run-" + ConfigHash(cfg.resolved));
  if (!force && fs::exists(outcome.dir / "DONE")) {
    outcome.skipped = true;
    return outcome;
  }
  fs::create_directories(outcome.dir);
  fs::remove(outcome.dir / "DONE");
  WriteFile(outcome.dir / "config.json", cfg.resolved.dump(2) + "\n");

  auto built = BuildFederation(cfg);
  WriteFile(outcome.dir / "manifest.json", built.manifest.dump(2) + "\n");

  const auto start = std::chrono::steady_clock::now();
  proto::Simulator sim(std::move(built.federation), cfg.strategy, jobs);
  std::vector<proto::RoundLog> logs;
  Json timing = Json::array();
  auto round_start = start;
  for (int t = 0; t <= cfg.strategy.rounds; ++t) {
    logs.push_back(t == 0 ? sim.EvaluateInitial() : sim.RunRound(t));
    const auto now = std::chrono::steady_clock::now();
    timing.push_back(Json{{"round", t}, {"seconds", std::chrono::duration<double>(now - round_start).count()}});
    round_start = now;
  }
  if (!proto::RoundBarrierHolds(sim.controller().audit(), static_cast<int>(sim.federation().clients.size()))) {
    throw ProtocolError("round barrier violated in message audit");
  }
  WriteFile(outcome.dir / "rounds.jsonl", RoundLogToJsonl(logs));
  if (record_timing) {
    WriteFile(outcome.dir / "timing.json", timing.dump(2) + "\n");
  }
  WriteFile(outcome.dir / "DONE", "");
  return outcome;
}

bool SweepResult::ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const SweepCell &c) { return c.error.empty(); });
}

std::vector<Json> ExpandGrid(const Json &grid) {
  if (!grid.is_object() || !grid.contains("axes") || !grid["axes"].is_object() || grid["axes"].empty()) {
    throw ConfigError("grid needs a non-empty 'axes' object");
  }
  for (const auto &[k, v] : grid.items()) {
    if (k != "axes" && k != "configs" && k != "set" && k != "out") {
      throw ConfigError("grid: unknown key '" + k + "'");
    }
  }
  std::vector<Json> cells{Json::object()};
  for (const auto &[axis, values] : grid["axes"].items()) {
    if (!values.is_array() || values.empty()) {
      throw ConfigError("grid axis '" + axis + "' must be a non-empty list");
    }
    std::vector<Json> next;
    for (const auto &cell : cells) {
      for (const auto &v : values) {
        Json c = cell;
        c[axis] = v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

SweepResult RunSweep(const Json &grid, const fs::path &base_dir, const fs::path &out_root, int jobs) {
  const auto cells = ExpandGrid(grid);
  Json base = DefaultConfig();
  if (const char *env = std::getenv("HETFED_SEED"); env && *env) {
    base["seed"] = ParseSeed(env, "HETFED_SEED");
  }
  if (grid.contains("configs")) {
    for (const auto &p : grid["configs"]) {
      const fs::path path = base_dir / p.get<std::string>();
      MergeConfig(base, ReadJsonFile(path), path.string());
    }
  }
  if (grid.contains("set")) {
    for (const auto &[k, v] : grid["set"].items()) {
      MergeConfig(base, Nest(k, v), "grid set " + k);
    }
  }

  SweepResult result;
  result.cells.resize(cells.size());
  std::atomic<size_t> next{0};
  std::mutex print_mu;
  auto work = [&] {
    for (size_t i = next++; i < cells.size(); i = next++) {
      SweepCell &cell = result.cells[i];
      cell.overrides = cells[i];
      try {
        Json cfg = base;
        for (const auto &[k, v] : cells[i].items()) MergeConfig(cfg, Nest(k, v), "grid axis " + k);
        const auto resolved = Resolve(std::move(cfg));
        const auto outcome = RunToDirectory(resolved, out_root, 1);
        cell.dir = outcome.dir;
        cell.skipped = outcome.skipped;
      } catch (const std::exception &e) {
        cell.error = e.what();
        if (cell.error.empty()) cell.error = "unknown failure";
      }
      std::lock_guard lock(print_mu);
      std::cout << "[" << (i + 1) << "/" << cells.size() << "] " << cells[i].dump() << " -> "
                << (cell.error.empty() ? (cell.skipped ? "skipped " : "done ") + cell.dir.string()
                                       : "FAILED: " + cell.error)
                << "\n";
    }
  };
  const size_t threads = std::clamp<size_t>(static_cast<size_t>(std::max(1, jobs)), 1, cells.size());
  std::vector<std::thread> pool;
  for (size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto &th : pool) th.join();

  Json failures = Json::array();
  for (const auto &cell : result.cells) {
    if (!cell.error.empty()) failures.push_back(Json{{"overrides", cell.overrides}, {"error", cell.error}});
  }
  fs::create_directories(out_root);
  if (failures.empty()) {
    fs::remove(out_root / "failures.json");
  } else {
    WriteFile(out_root / "failures.json", failures.dump(2) + "\n");
  }
  return result;
}

std::vector<SummaryRow> CollectSummary(const fs::path &runs_dir, Selection sel) {
  if (!fs::is_directory(runs_dir)) {
    throw Error("runs directory " + runs_dir.string() + " does not exist");
  }
  std::vector<fs::path> dirs;
  for (const auto &entry : fs::directory_iterator(runs_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "config.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw Error("no runs found under " + runs_dir.string());
  }
  std::vector<std::string> missing;
  for (const auto &d : dirs) {
    if (!fs::exists(d / "DONE") || !fs::exists(d / "rounds.jsonl")) missing.push_back(d.filename().string());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto &m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error("incomplete runs (missing logs): " + list);
  }

  std::vector<SummaryRow> rows;
  for (const auto &d : dirs) {
    const Json cfg = ReadJsonFile(d / "config.json");
    SummaryRow row;
    row.run = d.filename().string();
    row.strategy = cfg.at("strategy").get<std::string>();
    row.flags = FlagsOf(cfg);
    row.noise_type = cfg.at("noise").at("type").get<std::string>();
    const Json &rr = cfg.at("noise").at("random_rate");
    row.noise_rate = rr.is_array() ? "U[" + NumberText(rr[0].get<double>()) + "," + NumberText(rr[1].get<double>()) + "]"
                                   : NumberText(cfg.at("noise").at("rate").get<double>());
    row.seed = cfg.at("seed").get<uint64_t>();

    struct RoundAcc {
      std::map<int, double> acc;
      std::vector<double> roc, pr;
    };
    std::map<int, RoundAcc> rounds;
    std::ifstream in(d / "rounds.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json rec = Json::parse(line);
      auto &r = rounds[rec.at("round").get<int>()];
      r.acc[rec.at("client").get<int>()] = rec.at("accuracy").get<double>();
      if (!rec.at("roc_auc").is_null()) r.roc.push_back(rec["roc_auc"].get<double>());
      if (!rec.at("pr_auc").is_null()) r.pr.push_back(rec["pr_auc"].get<double>());
    }
    if (rounds.empty()) {
      throw Error("run " + row.run + " has an empty round log");
    }
    auto mean = [](const auto &values) {
      double s = 0.0;
      for (double v : values) s += v;
      return s / static_cast<double>(values.size());
    };
    auto avg_of = [&](const RoundAcc &r) {
      std::vector<double> v;
      for (const auto &[c, a] : r.acc) v.push_back(a);
      return mean(v);
    };
    auto chosen = std::prev(rounds.end());
    if (sel == Selection::kBest) {
      chosen = rounds.begin();
      for (auto it = rounds.begin(); it != rounds.end(); ++it) {
        if (avg_of(it->second) > avg_of(chosen->second)) chosen = it;
      }
    }
    row.round = chosen->first;
    for (const auto &[c, a] : chosen->second.acc) row.accuracy.push_back(a);
    row.avg = mean(row.accuracy);
    if (!chosen->second.roc.empty()) row.avg_roc_auc = mean(chosen->second.roc);
    if (!chosen->second.pr.empty()) row.avg_pr_auc = mean(chosen->second.pr);
    rows.push_back(std::move(row));
  }

  auto rank = [](const proto::AblationFlags &f) {
    const int enabled = f.hfl + f.sl + f.dlr + (f.reweight != proto::Reweight::kNone);
    return std::make_tuple(enabled, !f.hfl, static_cast<int>(f.reweight));
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const SummaryRow &a, const SummaryRow &b) {
    return std::make_tuple(a.noise_type, a.noise_rate, a.strategy, rank(a.flags), a.seed, a.run) <
           std::make_tuple(b.noise_type, b.noise_rate, b.strategy, rank(b.flags), b.seed, b.run);
  });
  return rows;
}

std::string SummaryCsv(const std::vector<SummaryRow> &rows, Selection sel) {
  size_t max_clients = 0;
  for (const auto &r : rows) max_clients = std::max(max_clients, r.accuracy.size());
  std::ostringstream out;
  out << "# selection: " << (sel == Selection::kFinal ? "final-round" : "best-round") << "\n";
  out << "run,strategy,hfl,sl,dlr,reweight,noise_type,noise_rate,seed,round";
  for (size_t i = 0; i < max_clients; ++i) out << ",theta_" << (i + 1);
  out << ",avg,avg_roc_auc,avg_pr_auc\n";
  for (const auto &r : rows) {
    out << r.run << ',' << r.strategy << ',' << r.flags.hfl << ',' << r.flags.sl << ',' << r.flags.dlr << ','
        << proto::ReweightName(r.flags.reweight) << ',' << r.noise_type << ',' << r.noise_rate << ',' << r.seed
        << ',' << r.round;
    for (size_t i = 0; i < max_clients; ++i) {
      out << ',';
      if (i < r.accuracy.size()) out << NumberText(r.accuracy[i]);
    }
    out << ',' << NumberText(r.avg) << ',' << (r.avg_roc_auc ? NumberText(*r.avg_roc_auc) : "") << ','
        << (r.avg_pr_auc ? NumberText(*r.avg_pr_auc) : "") << "\n";
  }
  return out.str();
}

std::vector<fs::path> Summarize(const fs::path &runs_dir) {
  // Build both tables before writing either file.
  const std::string final_csv = SummaryCsv(CollectSummary(runs_dir, Selection::kFinal), Selection::kFinal);
  const std::string best_csv = SummaryCsv(CollectSummary(runs_dir, Selection::kBest), Selection::kBest);
  const fs::path final_path = runs_dir / "summary.csv";
  const fs::path best_path = runs_dir / "summary_best.csv";
  WriteFile(final_path, final_csv);
  WriteFile(best_path, best_csv);
  return {final_path, best_path};
}

int Main(int argc, char **argv) {
  CLI::App app{"hetfed: heterogeneous federated learning simulator under label noise"};
  app.require_subcommand(1);

  ConfigSources sources;
  std::string out_dir;
  int run_jobs = 1;
  bool force = false;
  bool record_timing = false;
  double noise_rate = 0.0;
  auto *run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", sources.files, "layered JSON config files, later files win");
  run->add_option("--set", sources.sets, "override key=value (dotted keys)");
  auto *noise_opt = run->add_option("--noise-rate", noise_rate, "override noise.rate");
  run->add_option("--out", out_dir, "output root directory")->required();
  run->add_option("--jobs", run_jobs, "client threads per round")->check(CLI::PositiveNumber);
  run->add_flag("--force", force, "recompute even if the run directory is complete");
  run->add_flag("--record-timing", record_timing, "write per-round wall-clock to timing.json");

  std::string grid_path;
  std::string sweep_out;
  int sweep_jobs = 1;
  auto *sweep = app.add_subcommand("sweep", "run a Cartesian grid of experiments");
  sweep->add_option("--grid", grid_path, "grid JSON file")->required();
  sweep->add_option("--jobs", sweep_jobs, "concurrent cells")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "output root (defaults to the grid's 'out' or ./runs)");

  std::string runs_dir;
  std::string format = "csv";
  auto *summarize = app.add_subcommand("summarize", "tabulate final and best-round accuracy");
  summarize->add_option("--runs", runs_dir, "directory holding run-* directories")->required();
  summarize->add_option("--format", format, "output format (csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      if (*noise_opt) sources.noise_rate = noise_rate;
      if (const char *env = std::getenv("HETFED_SEED")) sources.env_seed = env;
      const auto cfg = ParseConfig(sources);
      const auto outcome = RunToDirectory(cfg, out_dir, run_jobs, force, record_timing);
      std::cout << (outcome.skipped ? "complete, skipped: " : "wrote ") << outcome.dir.string() << "\n";
      return 0;
    }
    if (*sweep) {
      const fs::path grid_file(grid_path);
      const Json grid = ReadJsonFile(grid_file);
      const fs::path base_dir = grid_file.has_parent_path() ? grid_file.parent_path() : fs::path(".");
      fs::path out_root = sweep_out.empty() ? base_dir / grid.value("out", std::string("runs")) : fs::path(sweep_out);
      const auto result = RunSweep(grid, base_dir, out_root, sweep_jobs);
      size_t failed = 0;
      for (const auto &c : result.cells) failed += !c.error.empty();
      std::cout << result.cells.size() << " cells, " << failed << " failed\n";
      return result.ok() ? 0 : 1;
    }
    if (*summarize) {
      if (format != "csv") {
        throw ConfigError("unsupported summary format '" + format + "'");
      }
      for (const auto &p : Summarize(runs_dir)) std::cout << "wrote " << p.string() << "\n";
      return 0;
    }
  } catch (const ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IngestionError &e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace hetfed::exp
