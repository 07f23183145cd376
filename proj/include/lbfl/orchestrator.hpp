#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lbfl/aggregators.hpp"
#include "lbfl/attacks.hpp"
#include "lbfl/core_math.hpp"
#include "lbfl/data.hpp"
#include "lbfl/errors.hpp"
#include "lbfl/model.hpp"

namespace lbfl {

enum class DatasetKind { synthetic, idx };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::string name = "synthetic";
  // synthetic blobs
  std::size_t train_size = 5000;
  std::size_t test_size = 1000;
  std::size_t num_classes = 10;
  std::size_t input_dim = 20;
  double separation = 3.0;
  // IDX files
  std::string train_images, train_labels, test_images, test_labels;
  std::optional<std::size_t> train_limit;
  std::optional<std::size_t> test_limit;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelSpec model;  // input_dim and num_classes are taken from the data
  std::size_t num_clients = 10;
  std::size_t malicious_count = 5;
  std::optional<IndexSet> malicious_ids;
  AttackSpec attack;
  AggregatorSpec aggregator;
  std::size_t rounds = 50;
  std::size_t local_steps = 30;
  std::size_t batch_size = 32;
  OptimizerSettings optimizer;
  bool persist_optimizer_state = true;
  std::uint64_t seed = 1;
  std::optional<std::size_t> filter_size;  // M_S; default is the whole filtering subset
  std::size_t workers = 1;
  std::string output;

  /// Malicious client ids: explicit list, or the last malicious_count ids.
  IndexSet resolved_malicious_ids() const {
    if (malicious_ids) {
      IndexSet ids = *malicious_ids;
      std::sort(ids.begin(), ids.end());
      return ids;
    }
    IndexSet ids;
    for (std::size_t i = num_clients - std::min(malicious_count, num_clients); i < num_clients; ++i) ids.push_back(i);
    return ids;
  }

  void validate() const {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (malicious_count > num_clients) throw ConfigError("malicious_count must be <= num_clients");
    if (malicious_ids) {
      IndexSet ids = *malicious_ids;
      std::sort(ids.begin(), ids.end());
      if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("malicious_ids has duplicates");
      if (!ids.empty() && ids.back() >= num_clients) throw ConfigError("malicious_ids must be < num_clients");
      if (ids.size() != malicious_count) throw ConfigError("malicious_ids length must equal malicious_count");
    }
    if (local_steps < 1) throw ConfigError("local_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (!(optimizer.learning_rate >= 0.0)) throw ConfigError("optimizer.learning_rate must be >= 0");
    if (optimizer.kind == OptimizerKind::adam) {
      if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) throw ConfigError("adam beta1 must be in [0, 1)");
      if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("adam beta2 must be in [0, 1)");
      if (!(optimizer.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
    } else if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
      throw ConfigError("sgd momentum must be in [0, 1)");
    }
    if (filter_size && *filter_size < 1) throw ConfigError("filter_size must be >= 1");
    attack.validate();
    aggregator.validate(num_clients);

    if (model.kind == ModelKind::mlp && model.hidden_dim < 1) throw ConfigError("model: mlp requires hidden_dim >= 1");
    if (!(model.init_scale >= 0.0)) throw ConfigError("model: init_scale must be >= 0");

    if (dataset.kind == DatasetKind::synthetic) {
      const auto& d = dataset;
      if (d.num_classes < 2) throw ConfigError("dataset: num_classes must be >= 2");
      if (d.input_dim < 1) throw ConfigError("dataset: input_dim must be >= 1");
      if (!(d.separation >= 0.0)) throw ConfigError("dataset: separation must be >= 0");
      if (d.train_size < d.num_classes || d.test_size < d.num_classes) {
        throw ConfigError("dataset: train_size and test_size must be >= num_classes");
      }
      if (d.train_size < num_clients) throw ConfigError("dataset: train_size must be >= num_clients");
      const std::size_t eval = d.train_size / num_clients;
      if (d.test_size <= eval) {
        throw ConfigError("dataset: test_size must exceed train_size/num_clients (" + std::to_string(eval) + ")");
      }
      if (filter_size && *filter_size > d.test_size - eval) {
        throw ConfigError("filter_size must be <= " + std::to_string(d.test_size - eval));
      }
    } else if (dataset.train_images.empty() || dataset.train_labels.empty() || dataset.test_images.empty() ||
               dataset.test_labels.empty()) {
      throw ConfigError("dataset: idx requires train_images, train_labels, test_images, test_labels");
    }
  }
};

struct ClientState {
  std::size_t client_id = 0;
  IndexSet partition;  // rows of the training set
  bool malicious = false;
  OptimizerState optimizer;
  RngStream rng;         // local training
  RngStream attack_rng;  // attack noise
  Batch data;            // partition rows with clean labels
  std::vector<std::uint32_t> flipped_labels;
};

struct RoundReport {
  std::size_t round = 0;
  double centralized_accuracy = 0.0;
  double server_eval_loss = 0.0;
  std::optional<std::vector<double>> per_client_loss;  // v_t^(i), client-id order, loss_cluster only
  SelectionReport selection;
  bool attack_active = false;
  bool defense_failed = false;
  std::string defense_error;
  std::chrono::duration<double> wall_time{0};
};

/// Reserved stream ids for dataset synthesis; clear of any per-client id.
inline constexpr std::uint64_t kTrainDataStream = std::uint64_t{1} << 62;
inline constexpr std::uint64_t kTestDataStream = kTrainDataStream + 1;

struct LoadedData {
  Dataset train;
  Dataset test;
};

inline LoadedData load_datasets(const DatasetConfig& d, std::uint64_t seed) {
  LoadedData out;
  if (d.kind == DatasetKind::synthetic) {
    RngStream train_rng(seed, kTrainDataStream);
    RngStream test_rng(seed, kTestDataStream);
    out.train = synth_blobs(train_rng, d.train_size, d.num_classes, d.input_dim, d.separation);
    out.test = synth_blobs(test_rng, d.test_size, d.num_classes, d.input_dim, d.separation);
  } else {
    out.train = load_idx(d.train_images, d.train_labels, d.name);
    out.test = load_idx(d.test_images, d.test_labels, d.name);
    if (d.train_limit) out.train.truncate(*d.train_limit);
    if (d.test_limit) out.test.truncate(*d.test_limit);
    if (out.train.input_dim != out.test.input_dim) throw FormatError("train/test image sizes differ");
    const auto classes = std::max(out.train.num_classes, out.test.num_classes);
    out.train.num_classes = out.test.num_classes = classes;
  }
  out.train.name = out.test.name = d.name;
  return out;
}

/// One federated training run: the server, N clients, and the round loop.
class Simulation {
public:
  explicit Simulation(ExperimentConfig config) : Simulation(std::move(config), std::nullopt) {}

  Simulation(ExperimentConfig config, std::optional<LoadedData> preloaded) : config_(std::move(config)) {
    config_.validate();
    LoadedData data = preloaded ? std::move(*preloaded) : load_datasets(config_.dataset, config_.seed);
    const std::size_t n = config_.num_clients;

    spec_ = config_.model;
    spec_.input_dim = data.train.input_dim;
    spec_.num_classes = data.train.num_classes;
    spec_.validate();

    RngStream server_rng(config_.seed, n);
    global_ = init_params(spec_, server_rng);
    const auto split = make_split(data.train, data.test, n, server_rng);
    eval_ = data.test.gather(split.server_eval);
    filter_ = config_.filter_size ? data.test.gather(subsample_filter(split, *config_.filter_size, server_rng))
                                  : data.test.gather(split.server_filter);

    malicious_ids_ = config_.resolved_malicious_ids();
    clients_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = clients_[i];
      c.client_id = i;
      c.partition = split.client_partitions[i];
      c.malicious = std::binary_search(malicious_ids_.begin(), malicious_ids_.end(), i);
      c.optimizer = OptimizerState::create(config_.optimizer, global_.size());
      c.rng = RngStream(config_.seed, i);
      c.attack_rng = RngStream(config_.seed, n + 1 + i);
      c.data = data.train.gather(c.partition);
      c.flipped_labels = flip_labels(c.data.labels, spec_.num_classes);
    }
  }

  const ExperimentConfig& config() const noexcept { return config_; }
  const ModelSpec& model_spec() const noexcept { return spec_; }
  const ParamVector& global_model() const noexcept { return global_; }
  std::size_t next_round() const noexcept { return round_; }
  const Batch& eval_batch() const noexcept { return eval_; }
  const Batch& filter_batch() const noexcept { return filter_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const IndexSet& malicious_ids() const noexcept { return malicious_ids_; }

  /// f_S: mean cross-entropy on the server's filtering subset.
  double filter_loss(const ParamVector& params) const { return loss(params, filter_, spec_); }

  // Models from the last round, in client-id order: what each client
  // trained honestly, and what it actually submitted.
  const std::vector<ParamVector>& last_honest_models() const noexcept { return honest_; }
  const std::vector<ParamVector>& last_submissions() const noexcept { return submitted_; }

  /// Runs round t: broadcast, local training, attacks, aggregation, evaluation.
  RoundReport step() {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t t = round_;
    const auto& attack = config_.attack;
    const std::size_t n = clients_.size();

    honest_.assign(n, ParamVector{});
    submitted_.assign(n, ParamVector{});
    parallel_for(n, config_.workers, [&](std::size_t i) {
      auto& c = clients_[i];
      if (!config_.persist_optimizer_state) c.optimizer = OptimizerState::create(config_.optimizer, global_.size());
      BatchView view = c.data.view();
      if (c.malicious && attack.flips_labels(t)) view.labels = c.flipped_labels;
      auto trained =
          local_train(global_, view, config_.local_steps, config_.batch_size, std::move(c.optimizer), c.rng, spec_);
      c.optimizer = std::move(trained.optimizer);
      honest_[i] = std::move(trained.params);
      submitted_[i] = c.malicious ? apply_attack(attack, t, honest_[i], global_, c.attack_rng) : honest_[i];
    });

    std::vector<Submission> subs;
    subs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) subs.push_back({i, submitted_[i], clients_[i].data.size()});

    RoundReport rep;
    rep.round = t;
    rep.attack_active = attack.active(t);
    try {
      auto result = aggregate(
          config_.aggregator, subs, [this](const ParamVector& p) { return filter_loss(p); }, config_.workers);
      global_ = std::move(result.model);
      rep.selection = std::move(result.report);
    } catch (const DefenseError& e) {
      rep.defense_failed = true;
      rep.defense_error = e.what();
      for (const auto& s : subs) rep.selection.client_ids.push_back(s.client_id);
    }
    if (config_.aggregator.kind == AggregatorKind::loss_cluster) {
      rep.per_client_loss = rep.selection.scores.empty()
                                ? std::vector<double>(n, std::numeric_limits<double>::quiet_NaN())
                                : rep.selection.scores;
      if (rep.defense_failed) {
        for (std::size_t i = 0; i < n; ++i) (*rep.per_client_loss)[i] = filter_loss(submitted_[i]);
      }
    }

    rep.centralized_accuracy = accuracy(global_, eval_, spec_);
    rep.server_eval_loss = loss(global_, eval_, spec_);
    rep.wall_time = std::chrono::steady_clock::now() - started;
    ++round_;
    return rep;
  }

private:
  ExperimentConfig config_;
  ModelSpec spec_;
  ParamVector global_;
  Batch eval_;
  Batch filter_;
  IndexSet malicious_ids_;
  std::vector<ClientState> clients_;
  std::vector<ParamVector> honest_;
  std::vector<ParamVector> submitted_;
  std::size_t round_ = 0;
};

struct ExperimentResult {
  std::vector<RoundReport> reports;
  ParamVector final_model;
  IndexSet malicious_ids;
};

using RoundObserver = std::function<void(const Simulation&, const RoundReport&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& config, const RoundObserver& observer = {},
                                       std::optional<LoadedData> preloaded = std::nullopt) {
  Simulation sim(config, std::move(preloaded));
  ExperimentResult result;
  result.malicious_ids = sim.malicious_ids();
  result.reports.reserve(config.rounds);
  for (std::size_t t = 0; t < config.rounds; ++t) {
    result.reports.push_back(sim.step());
    if (observer) observer(sim, result.reports.back());
  }
  result.final_model = sim.global_model();
  return result;
}

/// Mean centralized accuracy over rounds start_round .. T-1 (NaN if none).
inline double post_attack_mean_accuracy(const std::vector<RoundReport>& reports, std::size_t start_round) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : reports) {
    if (r.round >= start_round) {
      sum += r.centralized_accuracy;
      ++count;
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Grid

/// One summary row: a (defense, attack, dataset) combination run under
/// several seeds. `invalid_reason` marks a cell whose config was rejected.
struct GridCell {
  std::string defense;
  std::string attack;
  std::string dataset;
  std::vector<ExperimentConfig> runs;
  std::optional<std::string> invalid_reason;
};

struct GridRow {
  std::string defense;
  std::string attack;
  std::string dataset;
  std::vector<double> run_means;  // post-attack mean accuracy per repeat
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

/// Sample standard deviation (n-1 denominator); 0 for a single value.
inline double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return xs.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

using GridRunObserver =
    std::function<void(const GridCell&, std::size_t repeat, const ExperimentConfig&, const ExperimentResult&)>;

/// Runs every cell; a failing cell is recorded and the grid carries on.
inline std::vector<GridRow> run_grid(const std::vector<GridCell>& cells, const GridRunObserver& on_run = {}) {
  std::vector<GridRow> rows;
  rows.reserve(cells.size());
  for (const auto& cell : cells) {
    GridRow row;
    row.defense = cell.defense;
    row.attack = cell.attack;
    row.dataset = cell.dataset;
    if (cell.invalid_reason) {
      row.error = *cell.invalid_reason;
      rows.push_back(std::move(row));
      continue;
    }
    try {
      if (cell.runs.empty()) throw ConfigError("grid cell has no runs");
      for (std::size_t r = 0; r < cell.runs.size(); ++r) {
        const auto& cfg = cell.runs[r];
        auto result = run_experiment(cfg);
        row.run_means.push_back(post_attack_mean_accuracy(result.reports, cfg.attack.start_round));
        if (on_run) on_run(cell, r, cfg, result);
      }
      double sum = 0.0;
      for (double m : row.run_means) sum += m;
      row.mean = sum / static_cast<double>(row.run_means.size());
      row.stddev = sample_stddev(row.run_means);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lbfl
