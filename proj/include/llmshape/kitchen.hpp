#pragma once

// Two-agent Burger Kitchen gridworld.
//
// Task flow: raw patty from the Fridge -> cooked on a Stove for `cook_time`
// steps -> placed on the AssemblyStation -> combined with a Bun (taken from a
// bun-dispensing Counter) -> AssembledBurger picked up -> handed in at the
// DeliveryWindow while an order is Pending.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "llmshape/errors.hpp"

namespace llmshape {

inline constexpr int kNumAgents = 2;
inline constexpr int kNumActions = 6;

enum class CellKind : std::uint8_t { Floor, Wall, Counter, Fridge, Stove, AssemblyStation, DeliveryWindow };
inline constexpr int kNumCellKinds = 7;

enum class ItemKind : std::uint8_t { RawPatty, CookedPatty, Bun, AssembledBurger };
inline constexpr int kNumItemKinds = 4;

enum class Facing : std::uint8_t { N, S, E, W };

enum class Action : std::uint8_t { Up, Down, Left, Right, Stay, Interact };

enum class OrderStatus : std::uint8_t { Scheduled, Pending, Delivered, Expired };

enum class EventKind : std::uint8_t { Delivered, Expired, Cooked, Assembled, Blocked, PickedUp, Placed };

struct Position {
  int row = 0;
  int col = 0;
  bool operator==(const Position&) const = default;
};

struct Item {
  ItemKind kind;
  bool operator==(const Item&) const = default;
};

struct Cell {
  CellKind kind = CellKind::Floor;
  std::optional<Item> contents;
  std::optional<int> cook_timer;
  /// Counter that refills with a Bun whenever its Bun is taken.
  bool bun_dispenser = false;
  bool operator==(const Cell&) const = default;
};

struct AgentState {
  int id = 0;
  Position position;
  Facing facing = Facing::N;
  std::optional<Item> held;
  bool operator==(const AgentState&) const = default;
};

struct Order {
  int arrival = 0;
  int deadline = 0;
  OrderStatus status = OrderStatus::Scheduled;
  bool operator==(const Order&) const = default;
};

struct OrderQueue {
  std::vector<Order> orders;  // sorted by arrival
  int total = 0;
  bool operator==(const OrderQueue&) const = default;
};

struct Event {
  EventKind kind;
  int agent = -1;  // -1 for environment-driven events (Cooked, Expired)
  bool operator==(const Event&) const = default;
};

struct RewardTable {
  double delivery = 2.0;
  double expiry = -8.0;
  double cooked = 0.0;
  double assembled = 0.0;
  double picked_up = 0.0;
  double placed = 0.0;
  double blocked = 0.0;

  double of(EventKind kind) const {
    switch (kind) {
      case EventKind::Delivered: return delivery;
      case EventKind::Expired: return expiry;
      case EventKind::Cooked: return cooked;
      case EventKind::Assembled: return assembled;
      case EventKind::PickedUp: return picked_up;
      case EventKind::Placed: return placed;
      case EventKind::Blocked: return blocked;
    }
    return 0.0;
  }
  bool operator==(const RewardTable&) const = default;
};

/// Environment section of the run configuration.
///
/// Layout characters: '#' wall, '.' floor, 'C' counter, 'B' bun-dispensing
/// counter, 'F' fridge, 'S' stove, 'A' assembly station, 'D' delivery window,
/// '0'/'1' floor cell where agent 0/1 spawns.
struct EnvConfig {
  std::string layout = "burger_kitchen";
  /// Explicit rows; overrides the named preset when non-empty.
  std::vector<std::string> layout_rows;
  int orders = 5;
  int horizon = 400;
  int cook_time = 10;
  int deadline_window = 120;
  /// Explicit arrival times; empty means evenly spaced (see default_arrivals).
  std::vector<int> order_arrivals;
  RewardTable rewards;
  bool operator==(const EnvConfig&) const = default;
};

inline std::vector<std::string> layout_preset(std::string_view name) {
  if (name == "burger_kitchen") {
    // Fridge and stove on the cook's side, bun dispenser and delivery window
    // on the server's side; the assembly station and a counter form the
    // central divider with a single doorway on the bottom row.
    return {
        "#FS#BD#",
        "#0.A.1#",
        "#..C..#",
        "#.....#",
        "#######",
    };
  }
  if (name == "toy_4x4") {
    return {
        "#FS#",
        "B01D",
        "#..A",
        "####",
    };
  }
  throw ConfigError("env.layout: unknown layout preset '" + std::string(name) + "'");
}

/// Evenly spaced arrivals with the last deadline landing at or before T.
inline std::vector<int> default_arrivals(const EnvConfig& cfg) {
  std::vector<int> out;
  const int k = cfg.orders;
  if (k <= 0) return out;
  const int first = std::max(1, cfg.horizon / 20);
  const int last = std::max(first, cfg.horizon - cfg.deadline_window - first);
  for (int i = 0; i < k; ++i) {
    out.push_back(k == 1 ? first : first + (last - first) * i / (k - 1));
  }
  return out;
}

struct GridState {
  int width = 0;
  int height = 0;
  std::vector<Cell> grid;  // row-major
  std::array<AgentState, kNumAgents> agents;
  OrderQueue order_queue;
  int t = 0;
  int horizon = 0;
  int delivered_count = 0;
  int expired_count = 0;
  int patties_taken = 0;
  bool terminal = false;

  const Cell& at(Position p) const { return grid[static_cast<std::size_t>(p.row * width + p.col)]; }
  Cell& at(Position p) { return grid[static_cast<std::size_t>(p.row * width + p.col)]; }
  bool in_bounds(Position p) const { return p.row >= 0 && p.row < height && p.col >= 0 && p.col < width; }
  bool operator==(const GridState&) const = default;
};

struct StepOutcome {
  GridState next_state;
  double base_reward = 0.0;
  std::vector<Event> events;
};

inline Position offset(Position p, Facing f) {
  switch (f) {
    case Facing::N: return {p.row - 1, p.col};
    case Facing::S: return {p.row + 1, p.col};
    case Facing::E: return {p.row, p.col + 1};
    case Facing::W: return {p.row, p.col - 1};
  }
  return p;
}

inline std::optional<Facing> direction_of(Action a) {
  switch (a) {
    case Action::Up: return Facing::N;
    case Action::Down: return Facing::S;
    case Action::Left: return Facing::W;
    case Action::Right: return Facing::E;
    default: return std::nullopt;
  }
}

inline int pending_orders(const GridState& state) {
  return static_cast<int>(std::count_if(state.order_queue.orders.begin(), state.order_queue.orders.end(),
                                        [](const Order& o) { return o.status == OrderStatus::Pending; }));
}

inline bool is_terminal(const GridState& state) {
  if (state.t >= state.horizon) return true;
  return std::all_of(state.order_queue.orders.begin(), state.order_queue.orders.end(), [](const Order& o) {
    return o.status == OrderStatus::Delivered || o.status == OrderStatus::Expired;
  });
}

/// Builds an OrderQueue from arrival times: deadlines are arrival + window
/// clamped to the horizon, and the queue is sorted by arrival.
inline OrderQueue make_order_queue(std::vector<int> arrivals, int window, int horizon) {
  std::sort(arrivals.begin(), arrivals.end());
  OrderQueue q;
  q.total = static_cast<int>(arrivals.size());
  for (int a : arrivals) q.orders.push_back({a, std::min(a + window, horizon), OrderStatus::Scheduled});
  return q;
}

class KitchenEnv {
 public:
  explicit KitchenEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
    validate();
    build_template();
  }

  const EnvConfig& config() const { return cfg_; }
  int width() const { return template_.width; }
  int height() const { return template_.height; }

  /// Initial state. The layout has no stochastic elements, so the seed only
  /// matters to callers that perturb the schedule afterwards.
  GridState reset(std::uint64_t /*seed*/ = 0) const { return template_; }

  StepOutcome step(const GridState& state, std::pair<Action, Action> joint_action) const {
    if (state.terminal) throw ContractViolation("step called on a terminal state");
    StepOutcome out{state, 0.0, {}};
    GridState& s = out.next_state;

    for (auto& cell : s.grid) {
      if (cell.kind != CellKind::Stove || !cell.cook_timer || !cell.contents) continue;
      if (cell.contents->kind != ItemKind::RawPatty) continue;
      if (--*cell.cook_timer <= 0) {
        cell.cook_timer = 0;
        cell.contents = Item{ItemKind::CookedPatty};
        out.events.push_back({EventKind::Cooked, -1});
      }
    }

    const std::array<Action, kNumAgents> actions{joint_action.first, joint_action.second};
    for (int id = 0; id < kNumAgents; ++id) apply_action(s, id, actions[static_cast<std::size_t>(id)], out.events);

    s.t += 1;
    for (auto& o : s.order_queue.orders) {
      if (o.status == OrderStatus::Scheduled && o.arrival <= s.t) o.status = OrderStatus::Pending;
    }
    for (auto& o : s.order_queue.orders) {
      if (o.status == OrderStatus::Pending && o.deadline <= s.t) {
        o.status = OrderStatus::Expired;
        s.expired_count += 1;
        out.events.push_back({EventKind::Expired, -1});
      }
    }
    s.terminal = is_terminal(s);

    for (const auto& e : out.events) out.base_reward += cfg_.rewards.of(e.kind);
    return out;
  }

 private:
  void validate() const {
    if (cfg_.orders < 1) throw ConfigError("env.orders: must be >= 1");
    if (cfg_.horizon < 2) throw ConfigError("env.horizon: must be >= 2");
    if (cfg_.cook_time < 1) throw ConfigError("env.cook_time: must be >= 1");
    if (cfg_.deadline_window < 1) throw ConfigError("env.deadline_window: must be >= 1");
    if (!cfg_.order_arrivals.empty()) {
      if (static_cast<int>(cfg_.order_arrivals.size()) != cfg_.orders)
        throw ConfigError("env.order_arrivals: length must equal env.orders");
      for (int a : cfg_.order_arrivals)
        if (a < 0 || a >= cfg_.horizon) throw ConfigError("env.order_arrivals: each arrival must lie in [0, T-1]");
    }
  }

  void build_template() {
    const auto rows = cfg_.layout_rows.empty() ? layout_preset(cfg_.layout) : cfg_.layout_rows;
    if (rows.empty() || rows.front().empty()) throw ConfigError("env.layout: empty layout");
    GridState& s = template_;
    s.height = static_cast<int>(rows.size());
    s.width = static_cast<int>(rows.front().size());
    s.grid.resize(static_cast<std::size_t>(s.width * s.height));
    std::array<std::optional<Position>, kNumAgents> spawns;
    for (int r = 0; r < s.height; ++r) {
      if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != s.width)
        throw ConfigError("env.layout: rows must have equal width");
      for (int c = 0; c < s.width; ++c) {
        Cell& cell = s.at({r, c});
        switch (rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) {
          case '#': cell.kind = CellKind::Wall; break;
          case '.': cell.kind = CellKind::Floor; break;
          case 'C': cell.kind = CellKind::Counter; break;
          case 'B':
            cell.kind = CellKind::Counter;
            cell.bun_dispenser = true;
            cell.contents = Item{ItemKind::Bun};
            break;
          case 'F': cell.kind = CellKind::Fridge; break;
          case 'S': cell.kind = CellKind::Stove; break;
          case 'A': cell.kind = CellKind::AssemblyStation; break;
          case 'D': cell.kind = CellKind::DeliveryWindow; break;
          case '0': spawns[0] = Position{r, c}; break;
          case '1': spawns[1] = Position{r, c}; break;
          default: throw ConfigError("env.layout: unknown layout character");
        }
      }
    }
    int usable = 0;
    for (const auto& sp : spawns) {
      if (!sp) continue;
      bool has_exit = false;
      for (Facing f : {Facing::N, Facing::S, Facing::E, Facing::W}) {
        const Position n = offset(*sp, f);
        if (s.in_bounds(n) && s.at(n).kind == CellKind::Floor) has_exit = true;
      }
      if (has_exit) ++usable;
    }
    if (usable < kNumAgents) throw ConfigError("env.layout: needs 2 reachable spawn cells ('0' and '1')");
    for (int id = 0; id < kNumAgents; ++id) s.agents[static_cast<std::size_t>(id)] = {id, *spawns[static_cast<std::size_t>(id)], Facing::N, std::nullopt};

    auto arrivals = cfg_.order_arrivals.empty() ? default_arrivals(cfg_) : cfg_.order_arrivals;
    s.order_queue = make_order_queue(std::move(arrivals), cfg_.deadline_window, cfg_.horizon);
    s.horizon = cfg_.horizon;
  }

  static bool occupied(const GridState& s, Position p, int except) {
    for (const auto& a : s.agents)
      if (a.id != except && a.position == p) return true;
    return false;
  }

  void apply_action(GridState& s, int id, Action action, std::vector<Event>& events) const {
    AgentState& agent = s.agents[static_cast<std::size_t>(id)];
    if (auto dir = direction_of(action)) {
      agent.facing = *dir;
      const Position target = offset(agent.position, *dir);
      if (s.in_bounds(target) && s.at(target).kind == CellKind::Floor && !occupied(s, target, id)) {
        agent.position = target;
      } else {
        events.push_back({EventKind::Blocked, id});
      }
      return;
    }
    if (action != Action::Interact) return;

    const Position front = offset(agent.position, agent.facing);
    if (!s.in_bounds(front)) return;
    Cell& cell = s.at(front);
    auto& held = agent.held;
    auto take = [&] {
      held = cell.contents;
      cell.contents.reset();
      cell.cook_timer.reset();
      events.push_back({EventKind::PickedUp, id});
    };
    auto put = [&] {
      cell.contents = held;
      held.reset();
      events.push_back({EventKind::Placed, id});
    };

    switch (cell.kind) {
      case CellKind::Fridge:
        if (!held) {
          held = Item{ItemKind::RawPatty};
          s.patties_taken += 1;
          events.push_back({EventKind::PickedUp, id});
        }
        break;
      case CellKind::Counter:
        if (!held && cell.contents) {
          const bool refill = cell.bun_dispenser && cell.contents->kind == ItemKind::Bun;
          take();
          if (refill) cell.contents = Item{ItemKind::Bun};
        } else if (held && !cell.contents) {
          put();
        }
        break;
      case CellKind::Stove:
        if (held && held->kind == ItemKind::RawPatty && !cell.contents) {
          put();
          cell.cook_timer = cfg_.cook_time;
        } else if (!held && cell.contents && cell.contents->kind == ItemKind::CookedPatty) {
          take();
        }
        break;
      case CellKind::AssemblyStation:
        if (held && held->kind == ItemKind::CookedPatty && !cell.contents) {
          put();
        } else if (held && held->kind == ItemKind::Bun && cell.contents &&
                   cell.contents->kind == ItemKind::CookedPatty) {
          cell.contents = Item{ItemKind::AssembledBurger};
          held.reset();
          events.push_back({EventKind::Assembled, id});
        } else if (!held && cell.contents) {
          take();
        }
        break;
      case CellKind::DeliveryWindow:
        if (held && held->kind == ItemKind::AssembledBurger) {
          Order* target = nullptr;
          for (auto& o : s.order_queue.orders) {
            if (o.status != OrderStatus::Pending) continue;
            if (!target || o.deadline < target->deadline) target = &o;
          }
          if (target) {
            target->status = OrderStatus::Delivered;
            held.reset();
            s.delivered_count += 1;
            events.push_back({EventKind::Delivered, id});
          }
        }
        break;
      case CellKind::Floor:
      case CellKind::Wall:
        break;
    }
  }

  EnvConfig cfg_;
  GridState template_;
};

inline const char* to_string(Action a) {
  switch (a) {
    case Action::Up: return "Up";
    case Action::Down: return "Down";
    case Action::Left: return "Left";
    case Action::Right: return "Right";
    case Action::Stay: return "Stay";
    case Action::Interact: return "Interact";
  }
  return "?";
}

inline const char* to_string(EventKind e) {
  switch (e) {
    case EventKind::Delivered: return "Delivered";
    case EventKind::Expired: return "Expired";
    case EventKind::Cooked: return "Cooked";
    case EventKind::Assembled: return "Assembled";
    case EventKind::Blocked: return "Blocked";
    case EventKind::PickedUp: return "PickedUp";
    case EventKind::Placed: return "Placed";
  }
  return "?";
}

inline const char* to_string(ItemKind k) {
  switch (k) {
    case ItemKind::RawPatty: return "raw";
    case ItemKind::CookedPatty: return "cooked";
    case ItemKind::Bun: return "bun";
    case ItemKind::AssembledBurger: return "burger";
  }
  return "?";
}

/// ASCII frame: layout glyphs with agents drawn as their id digit, followed
/// by one status line (time, pending orders, held items).
inline std::string render_ascii(const GridState& s) {
  std::string out;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const Position p{r, c};
      char ch = '.';
      const Cell& cell = s.at(p);
      switch (cell.kind) {
        case CellKind::Floor: ch = '.'; break;
        case CellKind::Wall: ch = '#'; break;
        case CellKind::Counter: ch = cell.bun_dispenser ? 'B' : (cell.contents ? 'c' : 'C'); break;
        case CellKind::Fridge: ch = 'F'; break;
        case CellKind::Stove: ch = cell.contents ? (cell.contents->kind == ItemKind::CookedPatty ? 'P' : 's') : 'S'; break;
        case CellKind::AssemblyStation: ch = cell.contents ? (cell.contents->kind == ItemKind::AssembledBurger ? 'H' : 'p') : 'A'; break;
        case CellKind::DeliveryWindow: ch = 'D'; break;
      }
      for (const auto& a : s.agents)
        if (a.position == p) ch = static_cast<char>('0' + a.id);
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  out += "t:" + std::to_string(s.t) + "/" + std::to_string(s.horizon) + " pending:" + std::to_string(pending_orders(s)) +
         " delivered:" + std::to_string(s.delivered_count) + " expired:" + std::to_string(s.expired_count);
  for (const auto& a : s.agents) out += " " + std::to_string(a.id) + ":" + (a.held ? to_string(a.held->kind) : "-");
  out.push_back('\n');
  return out;
}

}  // namespace llmshape
