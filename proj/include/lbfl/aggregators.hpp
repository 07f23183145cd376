#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lbfl/core_math.hpp"
#include "lbfl/errors.hpp"

namespace lbfl {

using IndexSet = std::vector<std::size_t>;

enum class AggregatorKind { mean, trimmed_mean, median, krum, multi_krum, loss_cluster };

// How the loss-cluster defense runs 2-means: Lloyd iterations to a fixed
// point, or a single assignment pass against the min/max centres.
enum class ClusteringMode { lloyd, single_pass };

inline std::string_view to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::mean: return "mean";
    case AggregatorKind::trimmed_mean: return "trimmed_mean";
    case AggregatorKind::median: return "median";
    case AggregatorKind::krum: return "krum";
    case AggregatorKind::multi_krum: return "multi_krum";
    case AggregatorKind::loss_cluster: return "loss_cluster";
  }
  return "unknown";
}

inline AggregatorKind parse_aggregator_kind(std::string_view s) {
  if (s == "mean") return AggregatorKind::mean;
  if (s == "trimmed_mean") return AggregatorKind::trimmed_mean;
  if (s == "median") return AggregatorKind::median;
  if (s == "krum") return AggregatorKind::krum;
  if (s == "multi_krum") return AggregatorKind::multi_krum;
  if (s == "loss_cluster") return AggregatorKind::loss_cluster;
  throw ConfigError("unknown aggregator kind '" + std::string(s) + "'");
}

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::loss_cluster;
  double beta = 0.2;                          // trimmed_mean
  std::size_t f = 5;                          // krum, multi_krum
  std::size_t k = 3;                          // multi_krum
  std::optional<std::size_t> k_t_override;    // loss_cluster: keep the k lowest losses instead of 2-means
  ClusteringMode clustering = ClusteringMode::lloyd;

  /// Cross-checks parameters against the number of submissions per round.
  void validate(std::size_t num_clients) const {
    const std::string n = std::to_string(num_clients);
    switch (kind) {
      case AggregatorKind::trimmed_mean: {
        if (!(beta >= 0.0 && beta < 0.5)) throw ConfigError("trimmed_mean requires beta in [0, 0.5)");
        const auto t = static_cast<std::size_t>(std::floor(beta * static_cast<double>(num_clients)));
        if (num_clients < 2 * t + 1) throw ConfigError("trimmed_mean trims every value with N=" + n);
        break;
      }
      case AggregatorKind::krum:
      case AggregatorKind::multi_krum:
        if (num_clients < f + 3) {
          throw ConfigError(std::string(to_string(kind)) + " requires N-f-2 >= 1 (N=" + n +
                            ", f=" + std::to_string(f) + ")");
        }
        if (kind == AggregatorKind::multi_krum && (k < 1 || k > num_clients - f - 2)) {
          throw ConfigError("multi_krum requires 1 <= k <= N-f-2 (N=" + n + ", f=" + std::to_string(f) +
                            ", k=" + std::to_string(k) + ")");
        }
        break;
      case AggregatorKind::loss_cluster:
        if (k_t_override && (*k_t_override < 1 || *k_t_override > num_clients)) {
          throw ConfigError("loss_cluster requires 1 <= k_t_override <= N (N=" + n + ")");
        }
        break;
      case AggregatorKind::mean:
      case AggregatorKind::median: break;
    }
  }
};

struct Submission {
  std::size_t client_id = 0;
  ParamVector model;
  std::size_t num_samples = 1;
};

/// Which clients contributed to the new global model. `client_ids` lists
/// every submitter in ascending order and `scores` (when present) is
/// aligned with it: Krum scores, or server-side losses for loss_cluster.
struct SelectionReport {
  IndexSet client_ids;
  std::vector<double> scores;
  IndexSet selected_ids;
  std::size_t k_t = 0;
  bool per_coordinate = false;  // trimmed mean / median select per coordinate, not per client
};

struct AggregateResult {
  ParamVector model;
  SelectionReport report;
};

namespace detail {

// Submissions ordered by client id; every aggregator works on this order so
// its output is independent of the order the caller passed them in.
inline std::vector<const Submission*> by_client_id(std::span<const Submission> subs) {
  if (subs.empty()) throw DimensionError("aggregator: no submissions");
  std::vector<const Submission*> out;
  out.reserve(subs.size());
  for (const auto& s : subs) out.push_back(&s);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->client_id < b->client_id; });
  for (std::size_t i = 0; i < out.size(); ++i) {
    require_same_dim(out[i]->model.size(), out.front()->model.size(), "aggregator submissions");
    if (i > 0 && out[i]->client_id == out[i - 1]->client_id) {
      throw ConfigError("aggregator: duplicate client id " + std::to_string(out[i]->client_id));
    }
  }
  return out;
}

inline IndexSet ids_of(const std::vector<const Submission*>& subs) {
  IndexSet ids;
  ids.reserve(subs.size());
  for (auto* s : subs) ids.push_back(s->client_id);
  return ids;
}

// Unweighted mean of the given positions, summed in ascending position order.
// A mean cannot leave the range of its inputs; rounding can nudge it out,
// which would break exact agreement when every input is the same.
inline double within(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline ParamVector mean_of(const std::vector<const Submission*>& subs, const IndexSet& positions) {
  ParamVector acc(subs[positions.front()]->model);
  if (positions.size() == 1) return acc;
  ParamVector lo = acc, hi = acc;
  for (std::size_t p = 1; p < positions.size(); ++p) {
    const auto& m = subs[positions[p]]->model;
    for (std::size_t j = 0; j < acc.size(); ++j) {
      acc[j] += m[j];
      lo[j] = std::min(lo[j], m[j]);
      hi[j] = std::max(hi[j], m[j]);
    }
  }
  const double n = static_cast<double>(positions.size());
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] = within(acc[j] / n, lo[j], hi[j]);
  return acc;
}

inline std::vector<ParamVector> models_of(const std::vector<const Submission*>& subs) {
  std::vector<ParamVector> out;
  out.reserve(subs.size());
  for (auto* s : subs) out.push_back(s->model);
  return out;
}

// Positions of the `count` smallest scores; ties go to the lower position.
inline IndexSet lowest(std::span<const double> scores, std::size_t count) {
  IndexSet order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return less_nan_last(scores[a], scores[b]); });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

inline IndexSet positions_to_ids(const std::vector<const Submission*>& subs, const IndexSet& positions) {
  IndexSet ids;
  ids.reserve(positions.size());
  for (auto p : positions) ids.push_back(subs[p]->client_id);
  return ids;
}

}  // namespace detail

/// FedAvg: sum_i (n_i / sum n) * model_i.
inline AggregateResult agg_mean(std::span<const Submission> subs) {
  const auto sorted = detail::by_client_id(subs);
  double total = 0.0;
  for (auto* s : sorted) total += static_cast<double>(s->num_samples);
  if (!(total > 0.0)) throw ConfigError("agg_mean: total sample count must be positive");

  ParamVector out(sorted.front()->model.size());
  ParamVector lo = sorted.front()->model, hi = lo;
  for (auto* s : sorted) {
    const double w = static_cast<double>(s->num_samples) / total;
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += w * s->model[j];
      lo[j] = std::min(lo[j], s->model[j]);
      hi[j] = std::max(hi[j], s->model[j]);
    }
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = detail::within(out[j], lo[j], hi[j]);
  SelectionReport rep;
  rep.client_ids = detail::ids_of(sorted);
  rep.selected_ids = rep.client_ids;
  rep.k_t = rep.selected_ids.size();
  return {std::move(out), std::move(rep)};
}

/// Coordinate-wise: drop floor(beta*N) values from each tail, average the rest.
inline AggregateResult agg_trimmed_mean(std::span<const Submission> subs, double beta) {
  const auto sorted = detail::by_client_id(subs);
  const std::size_t n = sorted.size();
  if (!(beta >= 0.0 && beta < 0.5)) throw ConfigError("trimmed_mean requires beta in [0, 0.5)");
  const auto trim = static_cast<std::size_t>(std::floor(beta * static_cast<double>(n)));
  if (n < 2 * trim + 1) throw ConfigError("trimmed_mean: over-trim, no values remain");

  const auto models = detail::models_of(sorted);
  ParamVector out(models.front().size());
  const double kept = static_cast<double>(n - 2 * trim);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto col = coordwise_sorted(models, j);
    double acc = 0.0;
    for (std::size_t i = trim; i < n - trim; ++i) acc += col[i];
    out[j] = detail::within(acc / kept, col[trim], col[n - trim - 1]);
  }
  SelectionReport rep;
  rep.client_ids = detail::ids_of(sorted);
  rep.selected_ids = rep.client_ids;
  rep.k_t = n;
  rep.per_coordinate = true;
  return {std::move(out), std::move(rep)};
}

/// Coordinate-wise median; even N takes the mean of the two middle values.
inline AggregateResult agg_median(std::span<const Submission> subs) {
  const auto sorted = detail::by_client_id(subs);
  const std::size_t n = sorted.size();
  const auto models = detail::models_of(sorted);
  ParamVector out(models.front().size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto col = coordwise_sorted(models, j);
    out[j] = (n % 2 == 1) ? col[n / 2] : (col[n / 2 - 1] + col[n / 2]) / 2.0;
  }
  SelectionReport rep;
  rep.client_ids = detail::ids_of(sorted);
  rep.selected_ids = rep.client_ids;
  rep.k_t = n;
  rep.per_coordinate = true;
  return {std::move(out), std::move(rep)};
}

namespace detail {

inline std::vector<double> krum_scores_sorted(const std::vector<const Submission*>& subs, std::size_t f) {
  const std::size_t n = subs.size();
  if (n < f + 3) {
    throw ConfigError("krum requires N-f-2 >= 1 (N=" + std::to_string(n) + ", f=" + std::to_string(f) + ")");
  }
  const std::size_t neighbours = n - f - 2;
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = sq_euclidean(subs[i]->model, subs[j]->model);
    }
  }
  std::vector<double> scores(n);
  std::vector<std::pair<double, std::size_t>> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.emplace_back(dist[i * n + j], j);
    }
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      if (less_nan_last(a.first, b.first)) return true;
      if (less_nan_last(b.first, a.first)) return false;
      return a.second < b.second;
    });
    double acc = 0.0;
    for (std::size_t m = 0; m < neighbours; ++m) acc += row[m].first;
    scores[i] = acc;
  }
  return scores;
}

}  // namespace detail

/// Krum score of every submission, in ascending client-id order: the sum of
/// squared distances to its N-f-2 nearest other submissions.
inline std::vector<double> krum_scores(std::span<const Submission> subs, std::size_t f) {
  return detail::krum_scores_sorted(detail::by_client_id(subs), f);
}

inline AggregateResult agg_multi_krum(std::span<const Submission> subs, std::size_t f, std::size_t k) {
  const auto sorted = detail::by_client_id(subs);
  auto scores = detail::krum_scores_sorted(sorted, f);
  const std::size_t n = sorted.size();
  if (k < 1 || k > n - f - 2) {
    throw ConfigError("multi_krum requires 1 <= k <= N-f-2 (N=" + std::to_string(n) + ", f=" +
                      std::to_string(f) + ", k=" + std::to_string(k) + ")");
  }
  const auto chosen = detail::lowest(scores, k);
  SelectionReport rep;
  rep.client_ids = detail::ids_of(sorted);
  rep.scores = std::move(scores);
  rep.selected_ids = detail::positions_to_ids(sorted, chosen);
  rep.k_t = chosen.size();
  return {detail::mean_of(sorted, chosen), std::move(rep)};
}

inline AggregateResult agg_krum(std::span<const Submission> subs, std::size_t f) {
  return agg_multi_krum(subs, f, 1);
}

// ---------------------------------------------------------------------------
// Loss-based clustering defense

struct TwoMeansSplit {
  IndexSet low;   // positions in the input
  IndexSet high;
};

/// 1-d 2-means over the finite losses, centres seeded at min and max.
/// Values equidistant from both centres go to the low cluster. Non-finite
/// losses are placed in the high cluster without taking part.
inline TwoMeansSplit two_means_split(std::span<const double> losses, ClusteringMode mode = ClusteringMode::lloyd,
                                     std::size_t max_iterations = 100) {
  TwoMeansSplit out;
  IndexSet finite;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (std::isfinite(losses[i])) {
      finite.push_back(i);
    } else {
      out.high.push_back(i);
    }
  }
  if (finite.empty()) throw DefenseError("two_means_split: no finite loss values");
  if (finite.size() == 1) {
    out.low = finite;
    return out;
  }

  double c_low = losses[finite.front()];
  double c_high = c_low;
  for (auto i : finite) {
    c_low = std::min(c_low, losses[i]);
    c_high = std::max(c_high, losses[i]);
  }

  std::vector<char> in_low(finite.size(), 0);
  auto assign = [&] {
    bool changed = false;
    for (std::size_t p = 0; p < finite.size(); ++p) {
      const double v = losses[finite[p]];
      const char low = std::abs(v - c_low) <= std::abs(v - c_high) ? 1 : 0;
      changed |= (low != in_low[p]);
      in_low[p] = low;
    }
    return changed;
  };

  assign();
  if (mode == ClusteringMode::lloyd) {
    for (std::size_t it = 0; it < max_iterations; ++it) {
      double sum_low = 0.0, sum_high = 0.0;
      std::size_t n_low = 0, n_high = 0;
      for (std::size_t p = 0; p < finite.size(); ++p) {
        if (in_low[p]) {
          sum_low += losses[finite[p]];
          ++n_low;
        } else {
          sum_high += losses[finite[p]];
          ++n_high;
        }
      }
      if (n_low > 0) c_low = sum_low / static_cast<double>(n_low);
      if (n_high > 0) c_high = sum_high / static_cast<double>(n_high);
      if (!assign()) break;
    }
  }

  for (std::size_t p = 0; p < finite.size(); ++p) (in_low[p] ? out.low : out.high).push_back(finite[p]);
  std::sort(out.high.begin(), out.high.end());
  return out;
}

/// Scores every submission by its loss on the server's trusted data and
/// averages the low-loss group (or the k_t_override lowest, when given).
/// `filter_loss` may be called concurrently from up to `workers` threads.
template <class LossFn>
AggregateResult agg_loss_cluster(std::span<const Submission> subs, LossFn&& filter_loss,
                                 std::optional<std::size_t> k_t_override = std::nullopt,
                                 ClusteringMode mode = ClusteringMode::lloyd, std::size_t workers = 1) {
  const auto sorted = detail::by_client_id(subs);
  const std::size_t n = sorted.size();
  std::vector<double> losses(n);
  parallel_for(n, workers, [&](std::size_t i) { losses[i] = filter_loss(sorted[i]->model); });

  IndexSet chosen;
  if (k_t_override) {
    if (*k_t_override < 1 || *k_t_override > n) {
      throw ConfigError("loss_cluster requires 1 <= k_t_override <= N (N=" + std::to_string(n) + ")");
    }
    if (!std::isfinite(*std::min_element(losses.begin(), losses.end(), less_nan_last))) {
      throw DefenseError("loss_cluster: no finite loss values");
    }
    chosen = detail::lowest(losses, *k_t_override);
  } else {
    chosen = two_means_split(losses, mode).low;
  }

  SelectionReport rep;
  rep.client_ids = detail::ids_of(sorted);
  rep.scores = std::move(losses);
  rep.selected_ids = detail::positions_to_ids(sorted, chosen);
  rep.k_t = chosen.size();
  return {detail::mean_of(sorted, chosen), std::move(rep)};
}

using FilterLoss = std::function<double(const ParamVector&)>;

/// Dispatches on the spec. Aggregators see submissions only; they never
/// learn which clients are malicious.
inline AggregateResult aggregate(const AggregatorSpec& spec, std::span<const Submission> subs,
                                 const FilterLoss& filter_loss = {}, std::size_t workers = 1) {
  switch (spec.kind) {
    case AggregatorKind::mean: return agg_mean(subs);
    case AggregatorKind::trimmed_mean: return agg_trimmed_mean(subs, spec.beta);
    case AggregatorKind::median: return agg_median(subs);
    case AggregatorKind::krum: return agg_krum(subs, spec.f);
    case AggregatorKind::multi_krum: return agg_multi_krum(subs, spec.f, spec.k);
    case AggregatorKind::loss_cluster:
      if (!filter_loss) throw ConfigError("loss_cluster needs a server filter loss");
      return agg_loss_cluster(subs, filter_loss, spec.k_t_override, spec.clustering, workers);
  }
  throw ConfigError("aggregate: unknown aggregator kind");
}

}  // namespace lbfl
