#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llmshape/errors.hpp"
#include "llmshape/kitchen.hpp"
#include "llmshape/obs_encode.hpp"
#include "llmshape/rng.hpp"

namespace llmshape {

enum class Condition { Clean, Visibility, Timing, Combined };

inline constexpr std::array<Condition, 4> kAllConditions{Condition::Clean, Condition::Visibility, Condition::Timing,
                                                        Condition::Combined};

inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::Clean: return "clean";
    case Condition::Visibility: return "visibility";
    case Condition::Timing: return "timing";
    case Condition::Combined: return "combined";
  }
  return "?";
}

inline Condition parse_condition(std::string_view name) {
  for (Condition c : kAllConditions)
    if (name == to_string(c)) return c;
  throw ConfigError("noise.condition: expected one of clean, visibility, timing, combined; got '" +
                    std::string(name) + "'");
}

struct NoiseSpec {
  double visibility_mask_prob = 0.15;
  double scalar_jitter = 0.05;
  int timing_jitter = 20;
  bool visibility = false;
  bool order_timing = false;

  Condition condition() const {
    if (visibility && order_timing) return Condition::Combined;
    if (visibility) return Condition::Visibility;
    if (order_timing) return Condition::Timing;
    return Condition::Clean;
  }

  /// Same intensities with the enabled flags set for `c`.
  NoiseSpec with_condition(Condition c) const {
    NoiseSpec out = *this;
    out.visibility = c == Condition::Visibility || c == Condition::Combined;
    out.order_timing = c == Condition::Timing || c == Condition::Combined;
    return out;
  }

  void validate() const {
    if (!(visibility_mask_prob >= 0.0 && visibility_mask_prob <= 1.0))
      throw ConfigError("noise.visibility_mask_prob: must lie in [0, 1]");
    if (!(scalar_jitter >= 0.0)) throw ConfigError("noise.scalar_jitter: must be >= 0");
    if (timing_jitter < 0) throw ConfigError("noise.timing_jitter: must be >= 0");
  }
  bool operator==(const NoiseSpec&) const = default;
};

/// Zeroes each cell's feature block with probability ε and jitters the task
/// scalars by U[-η, η] (clamped to [0, 1]). Identity unless visibility noise
/// is enabled.
inline ObsVector corrupt_observation(const ObsVector& obs, const NoiseSpec& spec, RandomStream& rng) {
  if (!spec.visibility) return obs;
  ObsVector out = obs;
  const std::size_t cells = (out.size() - obs_layout::kScalars) / obs_layout::kFeatures;
  for (std::size_t c = 0; c < cells; ++c) {
    if (rng.bernoulli(spec.visibility_mask_prob)) {
      auto first = out.begin() + static_cast<std::ptrdiff_t>(c * obs_layout::kFeatures);
      std::fill(first, first + obs_layout::kFeatures, 0.0f);
    }
  }
  if (spec.scalar_jitter > 0.0) {
    for (std::size_t i = out.size() - obs_layout::kScalars; i < out.size(); ++i) {
      const double v = out[i] + rng.uniform(-spec.scalar_jitter, spec.scalar_jitter);
      out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

/// Shifts each order (in queue order) by the matching offset, clamps to the
/// horizon, and re-sorts by arrival. Deadlines move with their arrival and
/// always stay strictly after it.
inline OrderQueue apply_schedule_offsets(const OrderQueue& queue, std::span<const int> offsets, int horizon) {
  OrderQueue out = queue;
  for (std::size_t i = 0; i < out.orders.size() && i < offsets.size(); ++i) {
    Order& o = out.orders[i];
    o.arrival = std::clamp(o.arrival + offsets[i], 0, horizon - 1);
    o.deadline = std::max(std::min(o.deadline + offsets[i], horizon), o.arrival + 1);
  }
  std::stable_sort(out.orders.begin(), out.orders.end(),
                   [](const Order& a, const Order& b) { return a.arrival < b.arrival; });
  return out;
}

/// Jitters the schedule once per episode, before any arrival.
inline OrderQueue perturb_schedule(const OrderQueue& queue, const NoiseSpec& spec, int horizon, RandomStream& rng) {
  if (!spec.order_timing || spec.timing_jitter == 0) return queue;
  std::vector<int> offsets(queue.orders.size());
  for (int& off : offsets) off = static_cast<int>(rng.uniform_int(-spec.timing_jitter, spec.timing_jitter));
  return apply_schedule_offsets(queue, offsets, horizon);
}

}  // namespace llmshape
