#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lbfl/core_math.hpp"
#include "lbfl/errors.hpp"

namespace lbfl {

enum class ModelKind { logistic, mlp };

/// Classifier architecture. Parameter layout (row-major, flattened):
///   logistic: W[C x D], b[C]
///   mlp:      W1[H x D], b1[H], W2[C x H], b2[C]   (tanh hidden layer)
struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden_dim = 16;
  double init_scale = 0.05;

  std::size_t param_count() const {
    if (kind == ModelKind::logistic) return (input_dim + 1) * num_classes;
    return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes;
  }

  void validate() const {
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
    if (kind == ModelKind::mlp && hidden_dim < 1) throw ConfigError("model: mlp requires hidden_dim >= 1");
    if (!(init_scale >= 0.0)) throw ConfigError("model: init_scale must be >= 0");
  }
};

/// Non-owning view of n labelled rows.
struct BatchView {
  std::span<const double> features;  // n * input_dim, row-major
  std::span<const std::uint32_t> labels;
  std::size_t input_dim = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return features.subspan(i * input_dim, input_dim); }
};

struct Batch {
  std::vector<double> features;
  std::vector<std::uint32_t> labels;
  std::size_t input_dim = 0;

  std::size_t size() const noexcept { return labels.size(); }
  BatchView view() const { return {features, labels, input_dim}; }
  operator BatchView() const { return view(); }  // NOLINT(google-explicit-constructor)
};

namespace detail {

inline void check_batch(const ParamVector& params, const BatchView& batch, const ModelSpec& spec) {
  require_same_dim(params.size(), spec.param_count(), "model parameters");
  if (batch.size() == 0) throw DimensionError("model: empty batch");
  require_same_dim(batch.input_dim, spec.input_dim, "batch input_dim");
  require_same_dim(batch.features.size(), batch.size() * batch.input_dim, "batch features");
  for (auto y : batch.labels) {
    if (y >= spec.num_classes) throw DimensionError("model: label out of range");
  }
}

// Offsets of each block inside the flat parameter vector.
struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

inline Layout layout(const ModelSpec& spec) {
  Layout l;
  if (spec.kind == ModelKind::logistic) {
    l.w1 = 0;
    l.b1 = spec.num_classes * spec.input_dim;
  } else {
    l.w1 = 0;
    l.b1 = spec.hidden_dim * spec.input_dim;
    l.w2 = l.b1 + spec.hidden_dim;
    l.b2 = l.w2 + spec.num_classes * spec.hidden_dim;
  }
  return l;
}

// out[r] = bias[r] + sum_c weights[r, c] * x[c]
inline void affine(const double* weights, const double* bias, std::span<const double> x, std::size_t rows,
                   double* out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = weights + r * cols;
    double acc = bias[r];
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

// Forward pass for one row. `hidden` is only filled for the mlp.
inline void forward(const ParamVector& params, std::span<const double> x, const ModelSpec& spec,
                    std::vector<double>& hidden, std::vector<double>& logits) {
  const Layout l = layout(spec);
  logits.resize(spec.num_classes);
  if (spec.kind == ModelKind::logistic) {
    affine(params.data() + l.w1, params.data() + l.b1, x, spec.num_classes, logits.data());
    return;
  }
  hidden.resize(spec.hidden_dim);
  affine(params.data() + l.w1, params.data() + l.b1, x, spec.hidden_dim, hidden.data());
  for (auto& h : hidden) h = std::tanh(h);
  affine(params.data() + l.w2, params.data() + l.b2, hidden, spec.num_classes, logits.data());
}

// Turns logits into softmax probabilities in place; returns log-sum-exp.
inline double softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return m + std::log(sum);
}

}  // namespace detail

inline ParamVector init_params(const ModelSpec& spec, RngStream& rng) {
  spec.validate();
  ParamVector params(spec.param_count());
  const auto l = detail::layout(spec);
  auto fill = [&](std::size_t from, std::size_t count) {
    for (std::size_t i = from; i < from + count; ++i) params[i] = rng.uniform(-spec.init_scale, spec.init_scale);
  };
  if (spec.kind == ModelKind::logistic) {
    fill(l.w1, spec.num_classes * spec.input_dim);
  } else {
    fill(l.w1, spec.hidden_dim * spec.input_dim);
    fill(l.w2, spec.num_classes * spec.hidden_dim);
  }
  return params;
}

/// Mean cross-entropy of the softmax classifier over the batch.
inline double loss(const ParamVector& params, const BatchView& batch, const ModelSpec& spec) {
  detail::check_batch(params, batch, spec);
  std::vector<double> hidden, logits;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::forward(params, batch.row(i), spec, hidden, logits);
    const double target = logits[batch.labels[i]];
    const double lse = detail::softmax_inplace(logits);
    total += lse - target;
  }
  return total / static_cast<double>(batch.size());
}

inline ParamVector grad(const ParamVector& params, const BatchView& batch, const ModelSpec& spec) {
  detail::check_batch(params, batch, spec);
  const auto l = detail::layout(spec);
  const std::size_t C = spec.num_classes;
  const std::size_t D = spec.input_dim;
  const std::size_t H = spec.hidden_dim;
  ParamVector g(params.size());
  std::vector<double> hidden, probs, dhidden;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.row(i);
    detail::forward(params, x, spec, hidden, probs);
    detail::softmax_inplace(probs);
    probs[batch.labels[i]] -= 1.0;  // dL/dz

    if (spec.kind == ModelKind::logistic) {
      for (std::size_t c = 0; c < C; ++c) {
        double* gw = g.data() + l.w1 + c * D;
        for (std::size_t j = 0; j < D; ++j) gw[j] += probs[c] * x[j];
        g[l.b1 + c] += probs[c];
      }
      continue;
    }

    dhidden.assign(H, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double* gw = g.data() + l.w2 + c * H;
      const double* w = params.data() + l.w2 + c * H;
      for (std::size_t h = 0; h < H; ++h) {
        gw[h] += probs[c] * hidden[h];
        dhidden[h] += probs[c] * w[h];
      }
      g[l.b2 + c] += probs[c];
    }
    for (std::size_t h = 0; h < H; ++h) {
      const double da = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
      double* gw = g.data() + l.w1 + h * D;
      for (std::size_t j = 0; j < D; ++j) gw[j] += da * x[j];
      g[l.b1 + h] += da;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto& v : g) v *= inv_n;
  return g;
}

/// Fraction of rows whose argmax logit (lowest index on ties) equals the label.
inline double accuracy(const ParamVector& params, const BatchView& batch, const ModelSpec& spec) {
  detail::check_batch(params, batch, spec);
  std::vector<double> hidden, logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::forward(params, batch.row(i), spec, hidden, logits);
    // max_element returns the first maximum.
    const auto pred = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Local optimizers

enum class OptimizerKind { sgd, adam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd momentum, or adam beta1
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerSettings settings;
  std::uint64_t step_count = 0;
  ParamVector first_moment;   // adam m, or sgd velocity
  ParamVector second_moment;  // adam v

  static OptimizerState create(const OptimizerSettings& s, std::size_t dim) {
    OptimizerState st;
    st.settings = s;
    st.first_moment = ParamVector(dim);
    if (s.kind == OptimizerKind::adam) st.second_moment = ParamVector(dim);
    return st;
  }
};

inline void optimizer_step(OptimizerState& st, ParamVector& params, const ParamVector& g) {
  require_same_dim(params.size(), g.size(), "optimizer_step");
  require_same_dim(params.size(), st.first_moment.size(), "optimizer state");
  const auto& s = st.settings;
  ++st.step_count;
  if (s.kind == OptimizerKind::sgd) {
    if (s.momentum == 0.0) {
      for (std::size_t j = 0; j < params.size(); ++j) params[j] -= s.learning_rate * g[j];
      return;
    }
    auto& v = st.first_moment;
    for (std::size_t j = 0; j < params.size(); ++j) {
      v[j] = s.momentum * v[j] + g[j];
      params[j] -= s.learning_rate * v[j];
    }
    return;
  }
  auto& m = st.first_moment;
  auto& v = st.second_moment;
  const double t = static_cast<double>(st.step_count);
  const double bc1 = 1.0 - std::pow(s.momentum, t);
  const double bc2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t j = 0; j < params.size(); ++j) {
    m[j] = s.momentum * m[j] + (1.0 - s.momentum) * g[j];
    v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
    const double mhat = m[j] / bc1;
    const double vhat = v[j] / bc2;
    params[j] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

struct LocalTrainResult {
  ParamVector params;
  OptimizerState optimizer;
};

/// R optimizer steps on mini-batches drawn without replacement from `data`.
/// The row order is reshuffled with `rng` at the start of every local epoch;
/// the call always starts a fresh epoch. Rows of each mini-batch are visited
/// in ascending index order, so a batch covering the whole partition yields
/// exactly grad(params, data).
inline LocalTrainResult local_train(ParamVector params, const BatchView& data, std::size_t steps,
                                    std::size_t batch_size, OptimizerState opt, RngStream& rng,
                                    const ModelSpec& spec) {
  if (data.size() == 0) throw DimensionError("local_train: empty client partition");
  if (steps < 1) throw ConfigError("local_train: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("local_train: batch_size must be >= 1");

  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  Batch mini;
  mini.input_dim = data.input_dim;
  std::vector<std::size_t> picked;

  for (std::size_t step = 0; step < steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t take = std::min(batch_size, order.size() - cursor);
    picked.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                  order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
    std::sort(picked.begin(), picked.end());

    mini.features.clear();
    mini.labels.clear();
    for (auto idx : picked) {
      const auto r = data.row(idx);
      mini.features.insert(mini.features.end(), r.begin(), r.end());
      mini.labels.push_back(data.labels[idx]);
    }
    optimizer_step(opt, params, grad(params, mini, spec));
  }
  return {std::move(params), std::move(opt)};
}

}  // namespace lbfl
