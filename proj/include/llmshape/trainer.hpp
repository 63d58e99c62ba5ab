#pragma once

// On-policy training of the two independent PPO learners on the shared team
// reward (base reward plus shaping bonus).

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "llmshape/config.hpp"
#include "llmshape/evaluator.hpp"
#include "llmshape/logging.hpp"
#include "llmshape/ppo.hpp"
#include "llmshape/shaping_loop.hpp"

namespace llmshape {

inline std::uint64_t learner_init_seed(std::uint64_t train_seed, int agent) {
  return mix_seed(train_seed, 100 + static_cast<std::uint64_t>(agent));
}
inline std::uint64_t learner_update_seed(std::uint64_t train_seed, int agent) {
  return mix_seed(train_seed, 200 + static_cast<std::uint64_t>(agent));
}
inline std::uint64_t training_episode_seed(std::uint64_t train_seed, std::uint64_t episode) {
  return mix_seed(train_seed, 1'000'000 + episode);
}

/// One rollout worth of experience for both agents.
struct Trajectory {
  std::array<PpoBatch<float>, kNumAgents> batches;
  std::vector<double> shaped_rewards;
  std::vector<double> base_rewards;
  std::vector<std::uint8_t> terminal;
  std::array<std::vector<double>, kNumAgents> values;
  std::array<double, kNumAgents> bootstrap{};
  std::vector<double> finished_base_returns;
  std::vector<double> finished_shaped_returns;
  long long bonus_steps = 0;

  std::size_t size() const { return shaped_rewards.size(); }
};

struct TrainingRow {
  int update = 0;
  long long env_steps = 0;
  int episodes_finished = 0;
  double mean_base_return = 0.0;
  double mean_shaped_return = 0.0;
  double bonus_rate = 0.0;  // fraction of steps that earned the bonus
  std::array<UpdateStats, kNumAgents> stats{};
};

inline std::string training_csv_header() {
  return "update,env_steps,episodes,mean_base_return,mean_shaped_return,bonus_rate,"
         "policy_loss_0,value_loss_0,entropy_0,approx_kl_0,early_stop_0,"
         "policy_loss_1,value_loss_1,entropy_1,approx_kl_1,early_stop_1";
}

inline std::string training_csv_row(const TrainingRow& r) {
  std::string s = std::to_string(r.update) + "," + std::to_string(r.env_steps) + "," +
                  std::to_string(r.episodes_finished) + "," + fmt_double(r.mean_base_return) + "," +
                  fmt_double(r.mean_shaped_return) + "," + fmt_double(r.bonus_rate);
  for (const auto& st : r.stats)
    s += "," + fmt_double(st.policy_loss) + "," + fmt_double(st.value_loss) + "," + fmt_double(st.entropy) + "," +
         fmt_double(st.approx_kl) + "," + (st.early_stopped ? "1" : "0");
  return s;
}

/// The environment the learners train in: env with the training reward table.
inline EnvConfig training_env(const RunConfig& cfg) {
  EnvConfig e = cfg.env;
  e.rewards = cfg.training_rewards();
  return e;
}

class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::shared_ptr<EvaluatorBackend> evaluator)
      : cfg_(cfg),
        loop_(KitchenEnv(training_env(cfg)), cfg.noise, cfg.shaping, std::move(evaluator)) {
    const int dim = obs_dim(loop_.env());
    for (int i = 0; i < kNumAgents; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      learners_[ui].params = init_policy<float>(learner_init_seed(cfg.seeds.train, i), dim, cfg.ppo.hidden);
      update_rng_[ui] = RandomStream(learner_update_seed(cfg.seeds.train, i));
    }
    loop_.begin_episode(training_episode_seed(cfg.seeds.train, episode_++));
  }

  const RunConfig& config() const { return cfg_; }
  const PolicyParams<float>& params(int agent) const { return learners_[static_cast<std::size_t>(agent)].params; }
  long long env_steps() const { return env_steps_; }
  bool finished() const { return env_steps_ >= cfg_.train_steps; }

  /// Optional JSONL logging of every training step.
  void set_log(JsonlLogWriter* log, std::string method) {
    log_ = log;
    log_ctx_.method = std::move(method);
    log_ctx_.condition = to_string(cfg_.condition());
  }

  Trajectory collect(int n_steps) {
    Trajectory tr;
    const int dim = obs_dim(loop_.env());
    for (auto& b : tr.batches) {
      b.obs_dim = dim;
      b.obs.reserve(static_cast<std::size_t>(n_steps * dim));
    }
    PolicyActor a0(learners_[0].params, false);
    PolicyActor a1(learners_[1].params, false);
    const std::array<Actor*, kNumAgents> actors{&a0, &a1};
    for (int n = 0; n < n_steps; ++n) {
      StepRecord rec = loop_.step(actors);
      for (int i = 0; i < kNumAgents; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        auto& b = tr.batches[ui];
        b.obs.insert(b.obs.end(), rec.obs[ui].begin(), rec.obs[ui].end());
        b.actions.push_back(static_cast<int>(rec.actions[ui]));
        b.old_log_probs.push_back(rec.log_probs[ui]);
        tr.values[ui].push_back(rec.values[ui]);
      }
      tr.shaped_rewards.push_back(rec.shaped_reward);
      tr.base_rewards.push_back(rec.base_reward);
      tr.terminal.push_back(rec.terminal ? 1 : 0);
      if (rec.bonus > 0.0) ++tr.bonus_steps;
      ep_base_ += rec.base_reward;
      ep_shaped_ += rec.shaped_reward;
      if (log_) {
        log_ctx_.episode = static_cast<int>(episode_ - 1);
        log_ctx_.seed = loop_.episode_seed();
        log_->write_step(log_ctx_, rec);
      }
      if (rec.terminal) {
        tr.finished_base_returns.push_back(ep_base_);
        tr.finished_shaped_returns.push_back(ep_shaped_);
        ep_base_ = ep_shaped_ = 0.0;
        if (log_) log_->flush();
        loop_.begin_episode(training_episode_seed(cfg_.seeds.train, episode_++));
      }
    }
    for (int i = 0; i < kNumAgents; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (tr.terminal.back()) {
        tr.bootstrap[ui] = 0.0;
      } else {
        const auto v = learners_[ui].params.value.forward(loop_.observation(i));
        tr.bootstrap[ui] = static_cast<double>(v[0]);
      }
    }
    env_steps_ += n_steps;
    return tr;
  }

  /// One rollout followed by one PPO update per agent.
  TrainingRow iterate() {
    const auto remaining = cfg_.train_steps - env_steps_;
    const int n = static_cast<int>(std::min<long long>(cfg_.ppo.rollout_len, std::max<long long>(remaining, 1)));
    Trajectory tr = collect(n);
    TrainingRow row;
    row.update = ++updates_;
    row.env_steps = env_steps_;
    row.episodes_finished = static_cast<int>(tr.finished_base_returns.size());
    for (double r : tr.finished_base_returns) row.mean_base_return += r;
    for (double r : tr.finished_shaped_returns) row.mean_shaped_return += r;
    if (row.episodes_finished > 0) {
      row.mean_base_return /= row.episodes_finished;
      row.mean_shaped_return /= row.episodes_finished;
    }
    row.bonus_rate = static_cast<double>(tr.bonus_steps) / static_cast<double>(tr.size());

    std::unique_ptr<bool[]> term(new bool[tr.size()]);
    for (std::size_t k = 0; k < tr.size(); ++k) term[k] = tr.terminal[k] != 0;
    const std::span<const bool> term_span(term.get(), tr.size());
    for (int i = 0; i < kNumAgents; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      compute_batch_targets<float>(tr.batches[ui], tr.shaped_rewards, tr.values[ui], term_span, tr.bootstrap[ui], cfg_.gae);
      row.stats[ui] = ppo_update<float>(learners_[ui], tr.batches[ui], cfg_.ppo, update_rng_[ui]);
    }
    return row;
  }

  /// Trains to `train_steps`, calling `on_row` after every update.
  void run(const std::function<void(const TrainingRow&)>& on_row = {}) {
    while (!finished()) {
      const TrainingRow row = iterate();
      if (on_row) on_row(row);
    }
  }

 private:
  RunConfig cfg_;
  ShapingLoop loop_;
  std::array<PpoLearner<float>, kNumAgents> learners_;
  std::array<RandomStream, kNumAgents> update_rng_;
  std::uint64_t episode_ = 0;
  long long env_steps_ = 0;
  int updates_ = 0;
  double ep_base_ = 0.0;
  double ep_shaped_ = 0.0;
  JsonlLogWriter* log_ = nullptr;
  StepLogContext log_ctx_;
};

}  // namespace llmshape
