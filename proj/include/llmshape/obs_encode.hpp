#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "llmshape/kitchen.hpp"

namespace llmshape {

using ObsVector = std::vector<float>;

/// Per-cell feature layout. Blocks are concatenated in this order for every
/// cell, row-major, followed by the two task scalars [t/T, pending/K].
namespace obs_layout {
inline constexpr int kKindOffset = 0;    // one-hot over CellKind (7)
inline constexpr int kItemOffset = 7;    // none, raw, cooked, bun, burger (5)
inline constexpr int kSelfOffset = 12;   // presence, N, S, E, W (5)
inline constexpr int kOtherOffset = 17;  // presence, N, S, E, W (5)
inline constexpr int kFeatures = 22;
inline constexpr int kScalars = 2;
}  // namespace obs_layout

/// Recorded in checkpoints and logs; bump when the layout above changes.
inline constexpr std::string_view kObsSchemaVersion = "kitchen-obs/v1:F22";

inline int obs_dim(int width, int height) { return width * height * obs_layout::kFeatures + obs_layout::kScalars; }
inline int obs_dim(const KitchenEnv& env) { return obs_dim(env.width(), env.height()); }

/// Flattens `state` from `agent_id`'s point of view. The item block of a cell
/// occupied by an agent carries that agent's held item (agents only stand on
/// Floor, which never holds contents).
inline ObsVector encode(const GridState& state, int agent_id, int total_orders) {
  using namespace obs_layout;
  ObsVector obs(static_cast<std::size_t>(obs_dim(state.width, state.height)), 0.0f);
  const int self = agent_id;
  for (int r = 0; r < state.height; ++r) {
    for (int c = 0; c < state.width; ++c) {
      const Position p{r, c};
      const Cell& cell = state.at(p);
      float* block = obs.data() + static_cast<std::ptrdiff_t>((r * state.width + c) * kFeatures);
      block[kKindOffset + static_cast<int>(cell.kind)] = 1.0f;
      std::optional<Item> item = cell.contents;
      for (const auto& a : state.agents) {
        if (a.position != p) continue;
        item = a.held;
        const int off = a.id == self ? kSelfOffset : kOtherOffset;
        block[off] = 1.0f;
        block[off + 1 + static_cast<int>(a.facing)] = 1.0f;
      }
      block[kItemOffset + (item ? 1 + static_cast<int>(item->kind) : 0)] = 1.0f;
    }
  }
  const std::size_t n = obs.size();
  obs[n - 2] = static_cast<float>(static_cast<double>(state.t) / state.horizon);
  obs[n - 1] = static_cast<float>(static_cast<double>(pending_orders(state)) / total_orders);
  return obs;
}

}  // namespace llmshape
