#pragma once

// Per-timestep control loop: encode -> (visibility noise) -> act -> env step
// -> prompt from ground truth -> evaluator verdict -> shaping bonus.

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "llmshape/evaluator.hpp"
#include "llmshape/kitchen.hpp"
#include "llmshape/noise.hpp"
#include "llmshape/obs_encode.hpp"
#include "llmshape/ppo.hpp"
#include "llmshape/prompt.hpp"
#include "llmshape/rng.hpp"

namespace llmshape {

struct ShapingConfig {
  bool enabled = true;
  double bonus = 0.05;
  int query_stride = 1;
  bool extended_prompt = false;

  void validate() const {
    if (!(bonus >= 0.0) || !std::isfinite(bonus)) throw ConfigError("shaping.bonus: must be finite and >= 0");
    if (bonus > 1.0) throw ConfigError("shaping.bonus: must be <= 1 (bonus is meant to stay small)");
    if (query_stride < 1) throw ConfigError("shaping.query_stride: must be >= 1");
  }
  bool operator==(const ShapingConfig&) const = default;
};

/// Chooses an agent's action. `truth` is the exact state (scripted policies
/// read it); `obs` is what a learned policy is allowed to see.
class Actor {
 public:
  virtual ~Actor() = default;
  virtual ActResult act(int agent_id, const GridState& truth, const ObsVector& obs, RandomStream& rng) = 0;
};

class PolicyActor final : public Actor {
 public:
  PolicyActor(const PolicyParams<float>& params, bool deterministic) : params_(&params), deterministic_(deterministic) {}
  ActResult act(int, const GridState&, const ObsVector& obs, RandomStream& rng) override {
    return llmshape::act<float>(*params_, obs, rng, deterministic_);
  }

 private:
  const PolicyParams<float>* params_;
  bool deterministic_;
};

struct StepRecord {
  int t = 0;  // timestep before the action
  std::array<ObsVector, kNumAgents> obs;
  std::array<Action, kNumAgents> actions{};
  std::array<double, kNumAgents> log_probs{};
  std::array<double, kNumAgents> values{};
  double base_reward = 0.0;
  double bonus = 0.0;
  double shaped_reward = 0.0;
  std::string prompt;
  std::optional<EvaluatorVerdict> verdict;
  bool queried = false;  // evaluator consulted on this step (vs. stride reuse)
  bool terminal = false;
  std::vector<Event> events;
  std::array<bool, kNumAgents> idle{};
  std::int64_t latency_ns = 0;
};

/// Agent-step is idle when position and held item are unchanged and the
/// action was Stay or was blocked.
inline std::array<bool, kNumAgents> idle_flags(const GridState& before, const GridState& after,
                                               const std::array<Action, kNumAgents>& actions,
                                               const std::vector<Event>& events) {
  std::array<bool, kNumAgents> out{};
  for (int i = 0; i < kNumAgents; ++i) {
    const auto& b = before.agents[static_cast<std::size_t>(i)];
    const auto& a = after.agents[static_cast<std::size_t>(i)];
    bool blocked = false;
    for (const auto& e : events) blocked = blocked || (e.kind == EventKind::Blocked && e.agent == i);
    const bool unchanged = b.position == a.position && b.held == a.held;
    out[static_cast<std::size_t>(i)] = unchanged && (actions[static_cast<std::size_t>(i)] == Action::Stay || blocked);
  }
  return out;
}

class ShapingLoop {
 public:
  using Clock = std::chrono::steady_clock;

  ShapingLoop(KitchenEnv env, NoiseSpec noise, ShapingConfig shaping, std::shared_ptr<EvaluatorBackend> evaluator)
      : env_(std::move(env)), noise_(noise), shaping_(shaping), evaluator_(std::move(evaluator)) {
    if (shaping_.enabled && !evaluator_) throw ConfigError("shaping enabled but no evaluator configured");
    begin_episode(0);
  }

  const KitchenEnv& env() const { return env_; }
  const NoiseSpec& noise() const { return noise_; }
  const ShapingConfig& shaping() const { return shaping_; }
  const GridState& state() const { return state_; }
  bool done() const { return state_.terminal; }
  std::uint64_t episode_seed() const { return seed_; }

  /// Fresh episode: reset, one schedule perturbation, reseeded noise/actor streams.
  void begin_episode(std::uint64_t seed) {
    seed_ = seed;
    state_ = env_.reset(seed);
    RandomStream schedule_rng(mix_seed(seed, 0));
    state_.order_queue = perturb_schedule(state_.order_queue, noise_, state_.horizon, schedule_rng);
    obs_rng_ = RandomStream(mix_seed(seed, 1));
    for (int i = 0; i < kNumAgents; ++i) act_rng_[static_cast<std::size_t>(i)] = RandomStream(mix_seed(seed, 2 + static_cast<std::uint64_t>(i)));
    last_verdict_.reset();
    steps_in_episode_ = 0;
    obs_ready_ = false;
  }

  /// Observation each agent sees at the current state; computed once per
  /// state so bootstrap reads and the next step agree.
  const ObsVector& observation(int agent) {
    ensure_observations();
    return obs_[static_cast<std::size_t>(agent)];
  }

  StepRecord step(const std::array<Actor*, kNumAgents>& actors) {
    StepRecord rec;
    rec.t = state_.t;
    ensure_observations();
    std::int64_t latency = encode_ns_;
    const auto t0 = Clock::now();
    std::array<ActResult, kNumAgents> acts;
    for (int i = 0; i < kNumAgents; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      acts[ui] = actors[ui]->act(i, state_, obs_[ui], act_rng_[ui]);
      rec.actions[ui] = acts[ui].action;
      rec.log_probs[ui] = acts[ui].log_prob;
      rec.values[ui] = acts[ui].value;
    }
    latency += std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();

    StepOutcome outcome = env_.step(state_, {rec.actions[0], rec.actions[1]});

    const auto t1 = Clock::now();
    if (shaping_.enabled) {
      rec.prompt = render_prompt(outcome.next_state, shaping_.extended_prompt);
      if (steps_in_episode_ % shaping_.query_stride == 0 || !last_verdict_) {
        last_verdict_ = evaluator_->judge(rec.prompt);
        rec.queried = true;
      }
      rec.verdict = last_verdict_;
      rec.bonus = shaping_signal(*last_verdict_, shaping_.bonus).bonus;
    }
    latency += std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t1).count();

    rec.base_reward = outcome.base_reward;
    rec.shaped_reward = shape_reward(rec.base_reward, rec.bonus);
    rec.idle = idle_flags(state_, outcome.next_state, rec.actions, outcome.events);
    rec.events = std::move(outcome.events);
    rec.terminal = outcome.next_state.terminal;
    rec.obs = std::move(obs_);
    rec.latency_ns = latency;

    state_ = std::move(outcome.next_state);
    obs_ready_ = false;
    ++steps_in_episode_;
    return rec;
  }

 private:
  void ensure_observations() {
    if (obs_ready_) return;
    const auto t0 = Clock::now();
    for (int i = 0; i < kNumAgents; ++i)
      obs_[static_cast<std::size_t>(i)] = corrupt_observation(encode(state_, i, state_.order_queue.total), noise_, obs_rng_);
    encode_ns_ = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    obs_ready_ = true;
  }

  KitchenEnv env_;
  NoiseSpec noise_;
  ShapingConfig shaping_;
  std::shared_ptr<EvaluatorBackend> evaluator_;

  GridState state_;
  std::uint64_t seed_ = 0;
  RandomStream obs_rng_;
  std::array<RandomStream, kNumAgents> act_rng_;
  std::optional<EvaluatorVerdict> last_verdict_;
  int steps_in_episode_ = 0;
  std::array<ObsVector, kNumAgents> obs_;
  bool obs_ready_ = false;
  std::int64_t encode_ns_ = 0;
};

}  // namespace llmshape
