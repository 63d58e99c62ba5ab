#pragma once

// Shaped rewards, temporal-difference errors and generalized advantage
// estimates over flat transition buffers. Episode boundaries inside a buffer
// are marked by `terminal`; a buffer may end mid-episode, in which case the
// last transition's `next_value` is the bootstrap.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "llmshape/errors.hpp"

namespace llmshape {

struct GaeConfig {
  double gamma = 0.99;
  double lambda_gae = 0.95;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gae.gamma: must lie in (0, 1]");
    if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) throw ConfigError("gae.lambda_gae: must lie in [0, 1]");
  }
  bool operator==(const GaeConfig&) const = default;
};

template <typename Scalar>
struct ShapedTransition {
  Scalar base_reward{};
  Scalar bonus{};
  Scalar shaped_reward{};
  Scalar value{};
  Scalar next_value{};
  bool terminal = false;
};

template <typename Scalar>
constexpr Scalar shape_reward(Scalar reward, Scalar bonus) {
  return reward + bonus;
}

template <typename Scalar>
ShapedTransition<Scalar> make_transition(Scalar base_reward, Scalar bonus, Scalar value, Scalar next_value,
                                         bool terminal) {
  return {base_reward, bonus, shape_reward(base_reward, bonus), value, next_value, terminal};
}

/// δ_t = r'_t + γ V(s_{t+1}) (1 - terminal_t) - V(s_t)
template <typename Scalar>
std::vector<Scalar> td_errors(std::span<const ShapedTransition<Scalar>> transitions, const GaeConfig& cfg) {
  const auto gamma = static_cast<Scalar>(cfg.gamma);
  std::vector<Scalar> deltas(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const auto& tr = transitions[i];
    const Scalar next = tr.terminal ? Scalar(0) : tr.next_value;
    deltas[i] = tr.shaped_reward + gamma * next - tr.value;
  }
  return deltas;
}

/// Backward recursion Â_t = δ_t + γ λ (1 - terminal_t) Â_{t+1}.
template <typename Scalar>
std::vector<Scalar> gae_advantages(std::span<const Scalar> deltas, const GaeConfig& cfg,
                                   std::span<const bool> terminal_flags) {
  if (deltas.size() != terminal_flags.size())
    throw ContractViolation("gae_advantages: deltas and terminal flags differ in length");
  const auto decay = static_cast<Scalar>(cfg.gamma * cfg.lambda_gae);
  std::vector<Scalar> adv(deltas.size());
  Scalar running{};
  for (std::size_t i = deltas.size(); i-- > 0;) {
    if (terminal_flags[i]) running = Scalar(0);
    running = deltas[i] + decay * running;
    adv[i] = running;
  }
  return adv;
}

template <typename Scalar>
std::vector<Scalar> gae_advantages(std::span<const ShapedTransition<Scalar>> transitions, const GaeConfig& cfg) {
  const auto deltas = td_errors(transitions, cfg);
  const auto decay = static_cast<Scalar>(cfg.gamma * cfg.lambda_gae);
  std::vector<Scalar> adv(deltas.size());
  Scalar running{};
  for (std::size_t i = deltas.size(); i-- > 0;) {
    if (transitions[i].terminal) running = Scalar(0);
    running = deltas[i] + decay * running;
    adv[i] = running;
  }
  return adv;
}

/// Value-regression targets G_t = Â_t + V(s_t).
template <typename Scalar>
std::vector<Scalar> discounted_returns(std::span<const ShapedTransition<Scalar>> transitions, const GaeConfig& cfg) {
  auto out = gae_advantages(transitions, cfg);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += transitions[i].value;
  return out;
}

/// Zero-mean, unit-variance rescaling (population std, +1e-8 guard).
template <typename Scalar>
void normalize_advantages(std::span<Scalar> adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  double mean = 0.0;
  for (Scalar a : adv) mean += static_cast<double>(a);
  mean /= n;
  double var = 0.0;
  for (Scalar a : adv) var += (static_cast<double>(a) - mean) * (static_cast<double>(a) - mean);
  const double denom = std::sqrt(var / n) + 1e-8;
  for (Scalar& a : adv) a = static_cast<Scalar>((static_cast<double>(a) - mean) / denom);
}

}  // namespace llmshape
