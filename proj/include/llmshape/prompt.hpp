#pragma once

#include <charconv>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "llmshape/errors.hpp"
#include "llmshape/kitchen.hpp"

namespace llmshape {

/// Ground-truth task context; never derived from (possibly noisy) observations.
struct TaskContext {
  int pending = 0;
  int t = 0;
  int horizon = 0;
  bool operator==(const TaskContext&) const = default;
};

inline TaskContext task_context(const GridState& s) { return {pending_orders(s), s.t, s.horizon}; }

/// `orders:{pending} t:{t}/{horizon}`
inline std::string render_prompt(const TaskContext& ctx) {
  std::string out = "orders:";
  out += std::to_string(ctx.pending);
  out += " t:";
  out += std::to_string(ctx.t);
  out += '/';
  out += std::to_string(ctx.horizon);
  return out;
}

namespace detail {
inline int manhattan_to_nearest(const GridState& s, Position from, CellKind kind) {
  int best = std::numeric_limits<int>::max();
  for (int r = 0; r < s.height; ++r)
    for (int c = 0; c < s.width; ++c)
      if (s.at({r, c}).kind == kind) best = std::min(best, std::abs(r - from.row) + std::abs(c - from.col));
  return best == std::numeric_limits<int>::max() ? -1 : best;
}
}  // namespace detail

/// Base prompt followed by ` dA:{d} dB:{d}`: agent 0's distance to the nearest
/// Stove and agent 1's distance to the nearest DeliveryWindow.
inline std::string render_extended_prompt(const GridState& s) {
  std::string out = render_prompt(task_context(s));
  out += " dA:";
  out += std::to_string(detail::manhattan_to_nearest(s, s.agents[0].position, CellKind::Stove));
  out += " dB:";
  out += std::to_string(detail::manhattan_to_nearest(s, s.agents[1].position, CellKind::DeliveryWindow));
  return out;
}

inline std::string render_prompt(const GridState& s, bool extended) {
  return extended ? render_extended_prompt(s) : render_prompt(task_context(s));
}

namespace detail {
inline bool eat(std::string_view& sv, std::string_view lit) {
  if (!sv.starts_with(lit)) return false;
  sv.remove_prefix(lit.size());
  return true;
}
inline std::optional<int> eat_uint(std::string_view& sv) {
  if (sv.empty() || sv.front() < '0' || sv.front() > '9') return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
  if (ec != std::errc{}) return std::nullopt;
  sv.remove_prefix(static_cast<std::size_t>(ptr - sv.data()));
  return v;
}
}  // namespace detail

/// Parses the base template. Anything after a single space following the base
/// fields (the extended suffix) is ignored.
inline TaskContext parse_prompt(std::string_view prompt) {
  std::string_view sv = prompt;
  TaskContext ctx;
  auto fail = [&]() -> TaskContext { throw MalformedPrompt("malformed prompt: '" + std::string(prompt) + "'"); };
  if (!detail::eat(sv, "orders:")) return fail();
  auto pending = detail::eat_uint(sv);
  if (!pending || !detail::eat(sv, " t:")) return fail();
  auto t = detail::eat_uint(sv);
  if (!t || !detail::eat(sv, "/")) return fail();
  auto horizon = detail::eat_uint(sv);
  if (!horizon || (!sv.empty() && sv.front() != ' ')) return fail();
  if (*horizon == 0 || *t > *horizon) return fail();
  ctx.pending = *pending;
  ctx.t = *t;
  ctx.horizon = *horizon;
  return ctx;
}

}  // namespace llmshape
