#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lbfl/core_math.hpp"
#include "lbfl/errors.hpp"

namespace lbfl {

enum class AttackKind { none, label_flip, sign_flip, gaussian_noise };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::label_flip: return "label_flip";
    case AttackKind::sign_flip: return "sign_flip";
    case AttackKind::gaussian_noise: return "gaussian_noise";
  }
  return "unknown";
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "none") return AttackKind::none;
  if (s == "label_flip") return AttackKind::label_flip;
  if (s == "sign_flip") return AttackKind::sign_flip;
  if (s == "gaussian_noise") return AttackKind::gaussian_noise;
  throw ConfigError("unknown attack kind '" + std::string(s) + "'");
}

// What a sign-flipping client negates: its whole submitted parameter
// vector, or only its local delta relative to the broadcast model.
enum class SignFlipMode { params, delta };

struct AttackSpec {
  AttackKind kind = AttackKind::none;
  SignFlipMode sign_flip_mode = SignFlipMode::params;
  double mu = 0.25;
  double sigma = 1.0;
  std::size_t start_round = 15;  // zero-based: rounds >= start_round are attacked

  bool active(std::size_t round) const noexcept { return kind != AttackKind::none && round >= start_round; }
  bool flips_labels(std::size_t round) const noexcept { return kind == AttackKind::label_flip && active(round); }

  void validate() const {
    if (!(sigma >= 0.0)) throw ConfigError("attack: sigma must be >= 0");
  }
};

/// c -> C - c - 1 for every label. Involutive.
inline std::vector<std::uint32_t> flip_labels(std::span<const std::uint32_t> labels, std::size_t num_classes) {
  std::vector<std::uint32_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw DimensionError("flip_labels: label out of range");
    out[i] = static_cast<std::uint32_t>(num_classes - labels[i] - 1);
  }
  return out;
}

/// Negates the local delta relative to the broadcast model:
/// reference - (honest - reference).
inline ParamVector sign_flip(const ParamVector& honest_update, const ParamVector& reference) {
  require_same_dim(honest_update.size(), reference.size(), "sign_flip");
  ParamVector out(reference.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = reference[j] - (honest_update[j] - reference[j]);
  return out;
}

/// -honest: every coordinate of the submitted model negated.
inline ParamVector negate_params(const ParamVector& honest_update) {
  ParamVector out(honest_update);
  for (auto& v : out) v = -v;
  return out;
}

/// honest + eps, eps ~ N(mu, sigma^2 I), drawn from the client's attack stream.
inline ParamVector add_noise(const ParamVector& honest_update, const ParamVector& reference, double mu, double sigma,
                             RngStream& rng) {
  require_same_dim(honest_update.size(), reference.size(), "add_noise");
  const auto eps = gaussian_sample(rng, mu, sigma, honest_update.size());
  ParamVector out(honest_update);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += eps[j];
  return out;
}

/// Transforms a malicious client's submission. Label flipping acts on the
/// training data, so its (already poisoned) update passes through here.
/// Before start_round nothing changes and no randomness is consumed.
inline ParamVector apply_attack(const AttackSpec& spec, std::size_t round, const ParamVector& honest_update,
                                const ParamVector& global_model, RngStream& attack_rng) {
  if (!spec.active(round)) return honest_update;
  switch (spec.kind) {
    case AttackKind::none:
    case AttackKind::label_flip: return honest_update;
    case AttackKind::sign_flip:
      if (spec.sign_flip_mode == SignFlipMode::delta) return sign_flip(honest_update, global_model);
      require_same_dim(honest_update.size(), global_model.size(), "apply_attack");
      return negate_params(honest_update);
    case AttackKind::gaussian_noise:
      return add_noise(honest_update, global_model, spec.mu, spec.sigma, attack_rng);
  }
  throw ConfigError("apply_attack: unknown attack kind");
}

}  // namespace lbfl
