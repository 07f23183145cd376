#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lbfl/errors.hpp"
#include "lbfl/orchestrator.hpp"

namespace lbfl {

using json = nlohmann::json;

// Experiment configs are JSON documents. Every key except "dataset" and
// "aggregator" is optional; defaults reproduce the 10-client, 50-round,
// attack-at-round-15 protocol. See README for the full key list.

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok |= (key == a);
    if (!ok) unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown key(s) in " + where + ":";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
  }
}

inline std::string path_of(const std::string& where, std::string_view key) {
  return where.empty() ? std::string(key) : where + "." + std::string(key);
}

// Parsed text yields unsigned integers; documents built in code may hold
// signed ones. Both are fine as long as the value is non-negative.
inline bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

inline std::size_t get_count(const json& obj, std::string_view key, std::size_t fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!is_count(*it)) {
    throw ConfigError(path_of(where, key) + " must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

inline std::optional<std::size_t> get_opt_count(const json& obj, std::string_view key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return get_count(obj, key, 0, where);
}

inline double get_real(const json& obj, std::string_view key, double fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ConfigError(path_of(where, key) + " must be a number");
  return it->get<double>();
}

inline bool get_bool(const json& obj, std::string_view key, bool fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_boolean()) throw ConfigError(path_of(where, key) + " must be true or false");
  return it->get<bool>();
}

inline std::string get_string(const json& obj, std::string_view key, const std::string& fallback,
                              const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw ConfigError(path_of(where, key) + " must be a string");
  return it->get<std::string>();
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base_dir) {
  if (p.empty() || base_dir.empty()) return p;
  std::filesystem::path fp(p);
  return fp.is_absolute() ? p : (base_dir / fp).lexically_normal().string();
}

inline DatasetConfig parse_dataset(const json& j, const std::filesystem::path& base_dir) {
  const std::string where = "dataset";
  if (!j.is_object()) throw ConfigError("dataset must be a JSON object");
  DatasetConfig d;
  const auto kind = get_string(j, "kind", "synthetic", where);
  if (kind == "synthetic") {
    check_keys(j, {"kind", "name", "train_size", "test_size", "num_classes", "input_dim", "separation"}, where);
    d.kind = DatasetKind::synthetic;
    d.name = get_string(j, "name", "synthetic", where);
    d.train_size = get_count(j, "train_size", d.train_size, where);
    d.test_size = get_count(j, "test_size", d.test_size, where);
    d.num_classes = get_count(j, "num_classes", d.num_classes, where);
    d.input_dim = get_count(j, "input_dim", d.input_dim, where);
    d.separation = get_real(j, "separation", d.separation, where);
  } else if (kind == "idx") {
    check_keys(j,
               {"kind", "name", "train_images", "train_labels", "test_images", "test_labels", "train_limit",
                "test_limit"},
               where);
    d.kind = DatasetKind::idx;
    d.name = get_string(j, "name", "idx", where);
    d.train_images = resolve_path(get_string(j, "train_images", "", where), base_dir);
    d.train_labels = resolve_path(get_string(j, "train_labels", "", where), base_dir);
    d.test_images = resolve_path(get_string(j, "test_images", "", where), base_dir);
    d.test_labels = resolve_path(get_string(j, "test_labels", "", where), base_dir);
    d.train_limit = get_opt_count(j, "train_limit", where);
    d.test_limit = get_opt_count(j, "test_limit", where);
  } else {
    throw ConfigError("dataset.kind must be 'synthetic' or 'idx', got '" + kind + "'");
  }
  return d;
}

inline AttackSpec parse_attack(const json& j) {
  const std::string where = "attack";
  check_keys(j, {"kind", "mu", "sigma", "start_round", "sign_flip_mode"}, where);
  AttackSpec a;
  a.kind = parse_attack_kind(get_string(j, "kind", "none", where));
  a.mu = get_real(j, "mu", a.mu, where);
  a.sigma = get_real(j, "sigma", a.sigma, where);
  a.start_round = get_count(j, "start_round", a.start_round, where);
  const auto mode = get_string(j, "sign_flip_mode", "params", where);
  if (mode == "params") {
    a.sign_flip_mode = SignFlipMode::params;
  } else if (mode == "delta") {
    a.sign_flip_mode = SignFlipMode::delta;
  } else {
    throw ConfigError("attack.sign_flip_mode must be 'params' or 'delta'");
  }
  return a;
}

// `k` is resolved later, once N, f and the malicious count are known.
inline AggregatorSpec parse_aggregator(const json& j, std::optional<std::size_t>& k_out) {
  const std::string where = "aggregator";
  check_keys(j, {"kind", "beta", "f", "k", "k_t_override", "clustering"}, where);
  if (!j.contains("kind")) throw ConfigError("aggregator.kind is required");
  AggregatorSpec s;
  s.kind = parse_aggregator_kind(get_string(j, "kind", "", where));
  s.beta = get_real(j, "beta", s.beta, where);
  s.f = get_count(j, "f", s.f, where);
  k_out = get_opt_count(j, "k", where);
  s.k_t_override = get_opt_count(j, "k_t_override", where);
  const auto mode = get_string(j, "clustering", "lloyd", where);
  if (mode == "lloyd") {
    s.clustering = ClusteringMode::lloyd;
  } else if (mode == "single_pass") {
    s.clustering = ClusteringMode::single_pass;
  } else {
    throw ConfigError("aggregator.clustering must be 'lloyd' or 'single_pass'");
  }
  return s;
}

inline ModelSpec parse_model(const json& j) {
  const std::string where = "model";
  check_keys(j, {"kind", "hidden_dim", "init_scale"}, where);
  ModelSpec m;
  const auto kind = get_string(j, "kind", "logistic", where);
  if (kind == "logistic") {
    m.kind = ModelKind::logistic;
  } else if (kind == "mlp") {
    m.kind = ModelKind::mlp;
  } else {
    throw ConfigError("model.kind must be 'logistic' or 'mlp', got '" + kind + "'");
  }
  m.hidden_dim = get_count(j, "hidden_dim", m.hidden_dim, where);
  m.init_scale = get_real(j, "init_scale", m.init_scale, where);
  return m;
}

inline void parse_optimizer(const json& j, ExperimentConfig& cfg) {
  const std::string where = "optimizer";
  check_keys(j, {"kind", "learning_rate", "beta1", "beta2", "epsilon", "momentum", "persist_state"}, where);
  auto& o = cfg.optimizer;
  const auto kind = get_string(j, "kind", "adam", where);
  if (kind == "adam") {
    o.kind = OptimizerKind::adam;
    o.momentum = get_real(j, "beta1", 0.9, where);
  } else if (kind == "sgd") {
    o.kind = OptimizerKind::sgd;
    o.momentum = get_real(j, "momentum", 0.0, where);
  } else {
    throw ConfigError("optimizer.kind must be 'adam' or 'sgd', got '" + kind + "'");
  }
  o.learning_rate = get_real(j, "learning_rate", 1e-3, where);
  o.beta2 = get_real(j, "beta2", 0.999, where);
  o.epsilon = get_real(j, "epsilon", 1e-8, where);
  cfg.persist_optimizer_state = get_bool(j, "persist_state", true, where);
}

}  // namespace detail

/// Decodes and cross-validates a config document. Relative IDX paths are
/// resolved against `base_dir`.
inline ExperimentConfig parse_config_json(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::check_keys(j,
                     {"dataset", "model", "num_clients", "malicious_count", "malicious_ids", "attack", "aggregator",
                      "rounds", "local_steps", "batch_size", "optimizer", "seed", "filter_size", "workers", "output"},
                     "config");
  if (!j.contains("dataset")) throw ConfigError("config: 'dataset' is required");
  if (!j.contains("aggregator")) throw ConfigError("config: 'aggregator' is required");

  ExperimentConfig cfg;
  const std::string top;
  cfg.dataset = detail::parse_dataset(j.at("dataset"), base_dir);
  if (j.contains("model")) cfg.model = detail::parse_model(j.at("model"));
  cfg.num_clients = detail::get_count(j, "num_clients", cfg.num_clients, top);
  cfg.malicious_count = detail::get_count(j, "malicious_count", cfg.malicious_count, top);
  if (auto it = j.find("malicious_ids"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ConfigError("malicious_ids must be an array");
    IndexSet ids;
    for (const auto& v : *it) {
      if (!detail::is_count(v)) throw ConfigError("malicious_ids entries must be non-negative integers");
      ids.push_back(v.get<std::size_t>());
    }
    if (!j.contains("malicious_count")) cfg.malicious_count = ids.size();
    cfg.malicious_ids = std::move(ids);
  }
  if (j.contains("attack")) cfg.attack = detail::parse_attack(j.at("attack"));
  std::optional<std::size_t> k;
  cfg.aggregator = detail::parse_aggregator(j.at("aggregator"), k);
  cfg.rounds = detail::get_count(j, "rounds", cfg.rounds, top);
  cfg.local_steps = detail::get_count(j, "local_steps", cfg.local_steps, top);
  cfg.batch_size = detail::get_count(j, "batch_size", cfg.batch_size, top);
  if (j.contains("optimizer")) {
    detail::parse_optimizer(j.at("optimizer"), cfg);
  }
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
    if (!detail::is_count(*it)) throw ConfigError("seed must be a non-negative integer");
    cfg.seed = it->get<std::uint64_t>();
  }
  cfg.filter_size = detail::get_opt_count(j, "filter_size", top);
  cfg.workers = detail::get_count(j, "workers", cfg.workers, top);
  cfg.output = detail::get_string(j, "output", "", top);

  // Multi-Krum keeps as many updates as there are honest clients, capped
  // at its N-f-2 limit, unless k is given explicitly.
  if (k) {
    cfg.aggregator.k = *k;
  } else {
    const std::size_t n = cfg.num_clients;
    const std::size_t honest = n - std::min(cfg.malicious_count, n);
    const std::size_t cap = n >= cfg.aggregator.f + 3 ? n - cfg.aggregator.f - 2 : 1;
    cfg.aggregator.k = std::max<std::size_t>(1, std::min(honest, cap));
  }

  cfg.validate();
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ExperimentConfig parse_config(const std::string& path) {
  return parse_config_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

/// Canonical, fully resolved form of a config (keys sorted, defaults filled).
inline json to_json(const ExperimentConfig& c) {
  json d;
  d["kind"] = c.dataset.kind == DatasetKind::synthetic ? "synthetic" : "idx";
  d["name"] = c.dataset.name;
  if (c.dataset.kind == DatasetKind::synthetic) {
    d["train_size"] = c.dataset.train_size;
    d["test_size"] = c.dataset.test_size;
    d["num_classes"] = c.dataset.num_classes;
    d["input_dim"] = c.dataset.input_dim;
    d["separation"] = c.dataset.separation;
  } else {
    d["train_images"] = c.dataset.train_images;
    d["train_labels"] = c.dataset.train_labels;
    d["test_images"] = c.dataset.test_images;
    d["test_labels"] = c.dataset.test_labels;
    d["train_limit"] = c.dataset.train_limit ? json(*c.dataset.train_limit) : json(nullptr);
    d["test_limit"] = c.dataset.test_limit ? json(*c.dataset.test_limit) : json(nullptr);
  }

  json m;
  m["kind"] = c.model.kind == ModelKind::logistic ? "logistic" : "mlp";
  m["hidden_dim"] = c.model.hidden_dim;
  m["init_scale"] = c.model.init_scale;

  json a;
  a["kind"] = std::string(to_string(c.attack.kind));
  a["mu"] = c.attack.mu;
  a["sigma"] = c.attack.sigma;
  a["start_round"] = c.attack.start_round;
  a["sign_flip_mode"] = c.attack.sign_flip_mode == SignFlipMode::params ? "params" : "delta";

  json g;
  g["kind"] = std::string(to_string(c.aggregator.kind));
  g["beta"] = c.aggregator.beta;
  g["f"] = c.aggregator.f;
  g["k"] = c.aggregator.k;
  g["k_t_override"] = c.aggregator.k_t_override ? json(*c.aggregator.k_t_override) : json(nullptr);
  g["clustering"] = c.aggregator.clustering == ClusteringMode::lloyd ? "lloyd" : "single_pass";

  json o;
  const bool adam = c.optimizer.kind == OptimizerKind::adam;
  o["kind"] = adam ? "adam" : "sgd";
  o["learning_rate"] = c.optimizer.learning_rate;
  o[adam ? "beta1" : "momentum"] = c.optimizer.momentum;
  o["beta2"] = c.optimizer.beta2;
  o["epsilon"] = c.optimizer.epsilon;
  o["persist_state"] = c.persist_optimizer_state;

  json j;
  j["dataset"] = d;
  j["model"] = m;
  j["num_clients"] = c.num_clients;
  j["malicious_count"] = c.malicious_count;
  j["malicious_ids"] = c.resolved_malicious_ids();
  j["attack"] = a;
  j["aggregator"] = g;
  j["rounds"] = c.rounds;
  j["local_steps"] = c.local_steps;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = o;
  j["seed"] = c.seed;
  j["filter_size"] = c.filter_size ? json(*c.filter_size) : json(nullptr);
  j["workers"] = c.workers;
  j["output"] = c.output;
  return j;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the canonical config, ignoring fields that cannot change results
/// (output location, worker count).
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output");
  j.erase("workers");
  return fnv1a64(j.dump());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Grid configs
//
// {
//   "base":     { ...experiment config, aggregator/attack may be omitted... },
//   "defenses": [ { "kind": "loss_cluster", "label": "optional", ... }, ... ],
//   "attacks":  [ { "kind": "none" }, { "kind": "sign_flip" }, ... ],
//   "repeats":  3
// }
//
// Each attack object is merged over base.attack, so a shared start_round
// can live in the base. Repeat r runs with seed base.seed + r.

struct GridOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;
};

inline std::vector<GridCell> parse_grid_json(const json& j, const GridOptions& opts = {},
                                             const std::filesystem::path& base_dir = {}) {
  detail::check_keys(j, {"base", "defenses", "attacks", "repeats"}, "grid");
  const json base = j.value("base", json::object());
  if (!base.is_object()) throw ConfigError("grid.base must be an object");
  if (!j.contains("defenses") || !j.at("defenses").is_array() || j.at("defenses").empty()) {
    throw ConfigError("grid.defenses must be a non-empty array");
  }
  const json attacks = j.value("attacks", json::array({json{{"kind", "none"}}}));
  if (!attacks.is_array() || attacks.empty()) throw ConfigError("grid.attacks must be a non-empty array");
  std::size_t repeats = detail::get_count(j, "repeats", 1, "grid");
  if (opts.repeats) repeats = *opts.repeats;
  if (repeats < 1) throw ConfigError("grid.repeats must be >= 1");

  std::vector<GridCell> cells;
  for (const auto& defense : j.at("defenses")) {
    for (const auto& attack : attacks) {
      GridCell cell;
      json agg = defense;
      json atk = base.value("attack", json::object());
      try {
        if (!defense.is_object() || !attack.is_object()) throw ConfigError("grid entries must be objects");
        cell.defense = agg.value("label", agg.value("kind", std::string("?")));
        agg.erase("label");
        json atk_patch = attack;
        cell.attack = atk_patch.value("label", atk_patch.value("kind", std::string("none")));
        atk_patch.erase("label");
        atk.merge_patch(atk_patch);

        json cfg_json = base;
        cfg_json["aggregator"] = agg;
        cfg_json["attack"] = atk;
        if (opts.seed) cfg_json["seed"] = *opts.seed;
        auto cfg = parse_config_json(cfg_json, base_dir);
        cell.dataset = cfg.dataset.name;
        for (std::size_t r = 0; r < repeats; ++r) {
          auto run = cfg;
          run.seed = cfg.seed + r;
          cell.runs.push_back(std::move(run));
        }
      } catch (const std::exception& e) {
        if (cell.dataset.empty() && base.contains("dataset") && base["dataset"].is_object()) {
          cell.dataset = base["dataset"].value("name", base["dataset"].value("kind", std::string("synthetic")));
        }
        cell.invalid_reason = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

inline std::vector<GridCell> parse_grid(const std::string& path, const GridOptions& opts = {}) {
  return parse_grid_json(read_json_file(path), opts, std::filesystem::path(path).parent_path());
}

}  // namespace lbfl
