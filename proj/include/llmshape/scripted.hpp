#pragma once

// Hand-written role policies over the ground-truth state. Used as the
// solvability oracle (cook + server) and as the forced deviators of the
// equilibrium probe (an agent running the other role's script).

#include <array>
#include <deque>
#include <optional>
#include <vector>

#include "llmshape/kitchen.hpp"
#include "llmshape/shaping_loop.hpp"

namespace llmshape {

enum class Role { Cook, Server };

namespace detail {

/// First action of a shortest path from `from` to any floor cell adjacent to
/// a cell of `kind` (matching `want`), ending facing it. nullopt when already
/// in place and facing the target.
struct NavResult {
  std::optional<Action> action;  // nullopt -> in position, facing target
  bool reachable = false;
};

inline Action move_toward(Facing f) {
  switch (f) {
    case Facing::N: return Action::Up;
    case Facing::S: return Action::Down;
    case Facing::E: return Action::Right;
    case Facing::W: return Action::Left;
  }
  return Action::Stay;
}

template <typename Pred>
NavResult navigate(const GridState& s, int self, Pred&& want) {
  const AgentState& me = s.agents[static_cast<std::size_t>(self)];
  const AgentState& other = s.agents[static_cast<std::size_t>(1 - self)];
  constexpr std::array<Facing, 4> dirs{Facing::N, Facing::S, Facing::E, Facing::W};

  auto target_dir = [&](Position p) -> std::optional<Facing> {
    for (Facing f : dirs) {
      const Position n = offset(p, f);
      if (s.in_bounds(n) && want(s.at(n))) return f;
    }
    return std::nullopt;
  };

  if (const Position front = offset(me.position, me.facing); s.in_bounds(front) && want(s.at(front)))
    return {std::nullopt, true};

  for (int pass = 0; pass < 2; ++pass) {
    const bool avoid_other = pass == 0;
    std::vector<int> prev(static_cast<std::size_t>(s.width * s.height), -1);
    std::vector<char> seen(prev.size(), 0);
    auto id = [&](Position p) { return p.row * s.width + p.col; };
    std::deque<Position> q{me.position};
    seen[static_cast<std::size_t>(id(me.position))] = 1;
    std::optional<Position> goal;
    while (!q.empty()) {
      const Position p = q.front();
      q.pop_front();
      if (target_dir(p)) {
        goal = p;
        break;
      }
      for (Facing f : dirs) {
        const Position n = offset(p, f);
        if (!s.in_bounds(n) || s.at(n).kind != CellKind::Floor) continue;
        if (avoid_other && n == other.position) continue;
        if (seen[static_cast<std::size_t>(id(n))]) continue;
        seen[static_cast<std::size_t>(id(n))] = 1;
        prev[static_cast<std::size_t>(id(n))] = id(p);
        q.push_back(n);
      }
    }
    if (!goal) continue;
    if (*goal == me.position) return {move_toward(*target_dir(*goal)), true};
    Position step = *goal;
    while (prev[static_cast<std::size_t>(id(step))] != id(me.position))
      step = {prev[static_cast<std::size_t>(id(step))] / s.width, prev[static_cast<std::size_t>(id(step))] % s.width};
    for (Facing f : dirs)
      if (offset(me.position, f) == step) return {move_toward(f), true};
  }
  return {Action::Stay, false};
}

inline bool holds(const std::optional<Item>& slot, ItemKind k) { return slot && slot->kind == k; }

inline bool any_cell(const GridState& s, auto&& pred) {
  for (const auto& c : s.grid)
    if (pred(c)) return true;
  return false;
}

}  // namespace detail

/// Greedy shortest-path script for one role.
class ScriptedActor final : public Actor {
 public:
  explicit ScriptedActor(Role role) : role_(role) {}

  Role role() const { return role_; }

  ActResult act(int id, const GridState& s, const ObsVector&, RandomStream&) override {
    return {role_ == Role::Cook ? cook(s, id) : serve(s, id), 0.0, 0.0};
  }

 private:
  static Action go(const GridState& s, int id, auto&& want) {
    const auto nav = detail::navigate(s, id, want);
    if (!nav.reachable) return Action::Stay;
    return nav.action.value_or(Action::Interact);
  }
  /// Walk to the target and wait there facing it without interacting.
  static Action wait_at(const GridState& s, int id, auto&& want) {
    const auto nav = detail::navigate(s, id, want);
    return nav.action.value_or(Action::Stay);
  }

  static Action cook(const GridState& s, int id) {
    using detail::holds;
    const auto& held = s.agents[static_cast<std::size_t>(id)].held;
    auto is_stove = [](const Cell& c) { return c.kind == CellKind::Stove; };
    auto stove_cooked = [](const Cell& c) { return c.kind == CellKind::Stove && detail::holds(c.contents, ItemKind::CookedPatty); };
    auto stove_free = [](const Cell& c) { return c.kind == CellKind::Stove && !c.contents; };
    auto station_free = [](const Cell& c) { return c.kind == CellKind::AssemblyStation && !c.contents; };
    auto station = [](const Cell& c) { return c.kind == CellKind::AssemblyStation; };

    if (!held) {
      if (detail::any_cell(s, stove_cooked)) return go(s, id, stove_cooked);
      if (detail::any_cell(s, stove_free)) return go(s, id, [](const Cell& c) { return c.kind == CellKind::Fridge; });
      return wait_at(s, id, is_stove);
    }
    if (holds(held, ItemKind::RawPatty)) {
      if (detail::any_cell(s, stove_free)) return go(s, id, stove_free);
      return wait_at(s, id, is_stove);
    }
    if (holds(held, ItemKind::CookedPatty)) {
      if (detail::any_cell(s, station_free)) return go(s, id, station_free);
      return wait_at(s, id, station);
    }
    // Holding something outside the cook's flow: drop it on a free counter.
    return go(s, id, [](const Cell& c) { return c.kind == CellKind::Counter && !c.contents; });
  }

  static Action serve(const GridState& s, int id) {
    using detail::holds;
    const auto& held = s.agents[static_cast<std::size_t>(id)].held;
    auto station = [](const Cell& c) { return c.kind == CellKind::AssemblyStation; };
    auto burger_ready = [](const Cell& c) { return c.kind == CellKind::AssemblyStation && detail::holds(c.contents, ItemKind::AssembledBurger); };
    auto patty_ready = [](const Cell& c) { return c.kind == CellKind::AssemblyStation && detail::holds(c.contents, ItemKind::CookedPatty); };
    auto window = [](const Cell& c) { return c.kind == CellKind::DeliveryWindow; };
    auto bun = [](const Cell& c) { return c.kind == CellKind::Counter && detail::holds(c.contents, ItemKind::Bun); };

    if (!held) {
      if (detail::any_cell(s, burger_ready)) return go(s, id, burger_ready);
      return go(s, id, bun);
    }
    if (holds(held, ItemKind::Bun)) {
      if (detail::any_cell(s, patty_ready)) return go(s, id, patty_ready);
      return wait_at(s, id, station);
    }
    if (holds(held, ItemKind::AssembledBurger)) {
      if (pending_orders(s) > 0) return go(s, id, window);
      return wait_at(s, id, window);
    }
    return go(s, id, [](const Cell& c) { return c.kind == CellKind::Counter && !c.contents && !c.bun_dispenser; });
  }

  Role role_;
};

/// Always the same action; Stay gives the no-op team.
class ConstantActor final : public Actor {
 public:
  explicit ConstantActor(Action a) : action_(a) {}
  ActResult act(int, const GridState&, const ObsVector&, RandomStream&) override { return {action_, 0.0, 0.0}; }

 private:
  Action action_;
};

}  // namespace llmshape
