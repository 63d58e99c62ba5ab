#pragma once

// Evaluation suites, per-condition metrics, and the equilibrium probe.

#include <cstdlib>
#include <array>
#include <map>
#include <span>
#include <tuple>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "llmshape/config.hpp"
#include "llmshape/evaluator.hpp"
#include "llmshape/logging.hpp"
#include "llmshape/metrics.hpp"
#include "llmshape/ppo.hpp"
#include "llmshape/scripted.hpp"
#include "llmshape/shaping_loop.hpp"

namespace llmshape {

inline constexpr const char* kEndpointEnvVar = "LLMSHAPE_EVALUATOR_ENDPOINT";

/// Builds the configured backend. The endpoint may be overridden through
/// LLMSHAPE_EVALUATOR_ENDPOINT; nothing else reads the environment.
inline std::shared_ptr<EvaluatorBackend> make_evaluator(const RunConfig& cfg) {
  switch (cfg.evaluator.kind) {
    case EvaluatorKind::Heuristic:
      return std::make_shared<HeuristicEvaluator>(cfg.env.orders);
    case EvaluatorKind::Remote: {
      RemoteClientConfig rc;
      rc.endpoint = cfg.evaluator.endpoint;
      if (const char* env = std::getenv(kEndpointEnvVar); env && *env) rc.endpoint = env;
      rc.timeout_ms = cfg.evaluator.timeout_ms;
      return std::make_shared<RemoteEvaluator>(rc);
    }
    case EvaluatorKind::Replay:
      return std::make_shared<ReplayEvaluator>(ReplayEvaluator::from_jsonl(cfg.evaluator.replay_path));
  }
  throw ConfigError("evaluator.kind: unsupported");
}

/// Config with the noise flags switched to `c`.
inline RunConfig with_condition(RunConfig cfg, Condition c) {
  cfg.noise = cfg.noise.with_condition(c);
  return cfg;
}

struct EpisodeRecord {
  std::string condition;
  std::uint64_t seed = 0;
  double base_return = 0.0;
  double shaped_return = 0.0;
  int deliveries = 0;
  int expiries = 0;
  std::array<int, kNumAgents> idle{};
  std::vector<std::int64_t> latency_ns;
  std::vector<std::uint8_t> cold;  // per step: an uncached remote call was made
  int steps = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

inline int idle_steps(const EpisodeRecord& r) {
  int n = 0;
  for (int v : r.idle) n += v;
  return n;
}

/// Runs one full episode of `loop` from `seed`.
inline EpisodeRecord run_episode(ShapingLoop& loop, const std::array<Actor*, kNumAgents>& actors, std::uint64_t seed,
                                 JsonlLogWriter* log = nullptr, StepLogContext ctx = {}) {
  EpisodeRecord rec;
  rec.condition = to_string(loop.noise().condition());
  rec.seed = seed;
  loop.begin_episode(seed);
  ctx.seed = seed;
  while (!loop.done()) {
    const StepRecord s = loop.step(actors);
    rec.base_return += s.base_reward;
    rec.shaped_return += s.shaped_reward;
    for (const auto& e : s.events) {
      if (e.kind == EventKind::Delivered) ++rec.deliveries;
      if (e.kind == EventKind::Expired) ++rec.expiries;
    }
    for (int i = 0; i < kNumAgents; ++i) rec.idle[static_cast<std::size_t>(i)] += s.idle[static_cast<std::size_t>(i)] ? 1 : 0;
    rec.latency_ns.push_back(s.latency_ns);
    rec.cold.push_back(s.queried && s.verdict && s.verdict->source == VerdictSource::Remote ? 1 : 0);
    ++rec.steps;
    if (log) log->write_step(ctx, s);
  }
  if (log) log->flush();
  return rec;
}

/// Convenience form: builds a loop for `cfg` under `condition`.
inline EpisodeRecord run_episode(const std::array<Actor*, kNumAgents>& actors, const RunConfig& cfg, Condition condition,
                                 std::uint64_t seed, std::shared_ptr<EvaluatorBackend> evaluator = nullptr) {
  const RunConfig c = with_condition(cfg, condition);
  if (!evaluator && c.shaping.enabled) evaluator = make_evaluator(c);
  ShapingLoop loop(KitchenEnv(c.env), c.noise, c.shaping, std::move(evaluator));
  return run_episode(loop, actors, seed);
}

inline EpisodeRecord run_episode(const std::array<const PolicyParams<float>*, kNumAgents>& policies, const RunConfig& cfg,
                                 Condition condition, std::uint64_t seed, bool deterministic_actions) {
  PolicyActor a0(*policies[0], deterministic_actions);
  PolicyActor a1(*policies[1], deterministic_actions);
  return run_episode({&a0, &a1}, cfg, condition, seed);
}

struct ConditionMetrics {
  std::string method;
  std::string condition;
  int episodes = 0;
  MeanStd base_return;
  MeanStd shaped_return;
  double completion = 0.0;
  double mean_idle = 0.0;
  double mean_deliveries = 0.0;
  double mean_expiries = 0.0;
  LatencySummary latency;
};

struct MetricsReport {
  std::vector<ConditionMetrics> rows;
};

inline ConditionMetrics summarize(std::string method, std::string condition, std::span<const EpisodeRecord> eps) {
  ConditionMetrics m;
  m.method = std::move(method);
  m.condition = std::move(condition);
  m.episodes = static_cast<int>(eps.size());
  std::vector<double> base, shaped, lat;
  for (const auto& e : eps) {
    base.push_back(e.base_return);
    shaped.push_back(e.shaped_return);
    m.mean_idle += idle_steps(e);
    m.mean_deliveries += e.deliveries;
    m.mean_expiries += e.expiries;
    for (auto ns : e.latency_ns) lat.push_back(static_cast<double>(ns) / 1e6);
  }
  if (!eps.empty()) {
    const auto n = static_cast<double>(eps.size());
    m.mean_idle /= n;
    m.mean_deliveries /= n;
    m.mean_expiries /= n;
    m.completion = completion_rate(base);
  }
  m.base_return = mean_std(base);
  m.shaped_return = mean_std(shaped);
  if (!lat.empty()) m.latency = latency_stats(lat);
  return m;
}

inline std::string metrics_csv_header() {
  return "method,condition,episodes,mean_return,std_return,mean_shaped_return,std_shaped_return,completion_rate,"
         "mean_idle_steps,mean_deliveries,mean_expiries,latency_mean_ms,latency_median_ms,latency_p95_ms";
}

inline std::string metrics_csv_row(const ConditionMetrics& m) {
  return csv_escape(m.method) + "," + csv_escape(m.condition) + "," + std::to_string(m.episodes) + "," +
         fmt_double(m.base_return.mean) + "," + fmt_double(m.base_return.std) + "," + fmt_double(m.shaped_return.mean) +
         "," + fmt_double(m.shaped_return.std) + "," + fmt_double(m.completion) + "," + fmt_double(m.mean_idle) + "," +
         fmt_double(m.mean_deliveries) + "," + fmt_double(m.mean_expiries) + "," + fmt_double(m.latency.mean) + "," +
         fmt_double(m.latency.median) + "," + fmt_double(m.latency.p95);
}

inline std::string metrics_csv(const MetricsReport& r) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& row : r.rows) out += metrics_csv_row(row) + "\n";
  return out;
}

/// Deterministic evaluation of a policy pair on every seed of `cfg.seeds`
/// under each condition. Episodes run sequentially; aggregation is a reduce
/// over the finished records.
struct SuiteResult {
  MetricsReport report;
  std::map<std::string, std::vector<EpisodeRecord>> episodes;  // by condition
};

inline SuiteResult evaluate_suite(const std::array<const PolicyParams<float>*, kNumAgents>& policies, const RunConfig& cfg,
                                  std::span<const Condition> conditions, const std::string& method,
                                  JsonlLogWriter* log = nullptr) {
  SuiteResult out;
  const auto seeds = cfg.seeds.eval_seeds();
  for (Condition c : conditions) {
    const RunConfig cc = with_condition(cfg, c);
    ShapingLoop loop(KitchenEnv(cc.env), cc.noise, cc.shaping, cc.shaping.enabled ? make_evaluator(cc) : nullptr);
    PolicyActor a0(*policies[0], true);
    PolicyActor a1(*policies[1], true);
    auto& eps = out.episodes[to_string(c)];
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      StepLogContext ctx{method, to_string(c), static_cast<int>(k), seeds[k]};
      eps.push_back(run_episode(loop, {&a0, &a1}, seeds[k], log, ctx));
    }
    out.report.rows.push_back(summarize(method, to_string(c), eps));
  }
  return out;
}

/// Recomputes the metrics table from step logs (and the optional latency
/// sidecar). Rows follow first appearance of (method, condition).
inline MetricsReport report_from_logs(const std::vector<nlohmann::json>& steps,
                                      const std::vector<nlohmann::json>& latency = {}) {
  struct Key {
    std::string method, condition;
    int episode;
    bool operator<(const Key& o) const {
      return std::tie(method, condition, episode) < std::tie(o.method, o.condition, o.episode);
    }
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<int>> episode_order;
  std::map<Key, EpisodeRecord> eps;
  for (const auto& j : steps) {
    if (!j.contains("type") || j["type"] != "step") continue;
    const Key key{j["method"].get<std::string>(), j["condition"].get<std::string>(), j["episode"].get<int>()};
    const auto group = std::make_pair(key.method, key.condition);
    if (!episode_order.count(group)) order.push_back(group);
    auto [it, fresh] = eps.try_emplace(key);
    if (fresh) episode_order[group].push_back(key.episode);
    auto& e = it->second;
    e.condition = key.condition;
    e.seed = j["seed"].get<std::uint64_t>();
    e.base_return += j["base_reward"].get<double>();
    e.shaped_return += j["shaped_reward"].get<double>();
    for (const auto& ev : j["events"]) {
      if (ev["kind"] == "Delivered") ++e.deliveries;
      if (ev["kind"] == "Expired") ++e.expiries;
    }
    for (int i = 0; i < kNumAgents; ++i) e.idle[static_cast<std::size_t>(i)] += j["idle"][static_cast<std::size_t>(i)].get<bool>() ? 1 : 0;
    ++e.steps;
  }
  for (const auto& j : latency) {
    const Key key{j["method"].get<std::string>(), j["condition"].get<std::string>(), j["episode"].get<int>()};
    if (auto it = eps.find(key); it != eps.end()) {
      it->second.latency_ns.push_back(j["latency_ns"].get<std::int64_t>());
      it->second.cold.push_back(j["cold"].get<bool>() ? 1 : 0);
    }
  }
  MetricsReport out;
  for (const auto& group : order) {
    std::vector<EpisodeRecord> list;
    for (int ep : episode_order[group]) list.push_back(eps[Key{group.first, group.second, ep}]);
    out.rows.push_back(summarize(group.first, group.second, list));
  }
  return out;
}

struct LatencySample {
  std::vector<double> ms;
  std::vector<std::uint8_t> cold;
};

/// Per-decision latency over exactly `steps` steps of stochastic play from
/// consecutive seeds, with shaping forced on or off.
inline LatencySample measure_latency(const std::array<const PolicyParams<float>*, kNumAgents>& policies,
                                     const RunConfig& cfg, bool shaped, long long steps, std::uint64_t first_seed) {
  RunConfig c = cfg;
  c.shaping.enabled = shaped;
  ShapingLoop loop(KitchenEnv(c.env), c.noise, c.shaping, shaped ? make_evaluator(c) : nullptr);
  PolicyActor a0(*policies[0], false), a1(*policies[1], false);
  std::vector<std::int64_t> ns;
  LatencySample out;
  std::uint64_t ep = 0;
  while (static_cast<long long>(ns.size()) < steps) {
    const auto rec = run_episode(loop, {&a0, &a1}, first_seed + ep++);
    ns.insert(ns.end(), rec.latency_ns.begin(), rec.latency_ns.end());
    out.cold.insert(out.cold.end(), rec.cold.begin(), rec.cold.end());
  }
  ns.resize(static_cast<std::size_t>(steps));
  out.cold.resize(static_cast<std::size_t>(steps));
  out.ms = ns_to_ms(ns);
  return out;
}

struct ProbeEpisode {
  std::uint64_t seed = 0;
  double cooperative = 0.0;
  double deviation_a = 0.0;
  double deviation_b = 0.0;
};

struct ProbeReport {
  double cooperative_mean = 0.0;
  double deviation_a_mean = 0.0;
  double deviation_b_mean = 0.0;
  std::vector<ProbeEpisode> episodes;

  bool deviations_lower() const { return deviation_a_mean < cooperative_mean && deviation_b_mean < cooperative_mean; }
};

/// Cooperative arm (both learned policies, argmax actions) against two arms
/// where one agent is replaced by the other role's script: agent 0 (cook
/// side) runs the server script, agent 1 (server side) runs the cook script.
/// Returns are base returns on the clean condition.
inline ProbeReport deviation_probe(const std::array<const PolicyParams<float>*, kNumAgents>& policies,
                                   const RunConfig& cfg, int n_episodes) {
  const RunConfig cc = with_condition(cfg, Condition::Clean);
  ShapingLoop loop(KitchenEnv(cc.env), cc.noise, cc.shaping, cc.shaping.enabled ? make_evaluator(cc) : nullptr);
  PolicyActor p0(*policies[0], true);
  PolicyActor p1(*policies[1], true);
  ScriptedActor server(Role::Server);
  ScriptedActor cook(Role::Cook);
  const auto seeds = cfg.seeds.eval_seeds();
  ProbeReport out;
  for (int k = 0; k < n_episodes; ++k) {
    const std::uint64_t seed = seeds[static_cast<std::size_t>(k) % seeds.size()] +
                               static_cast<std::uint64_t>(k / static_cast<int>(seeds.size())) * 1'000'003ULL;
    ProbeEpisode e;
    e.seed = seed;
    e.cooperative = run_episode(loop, {&p0, &p1}, seed).base_return;
    e.deviation_a = run_episode(loop, {&server, &p1}, seed).base_return;
    e.deviation_b = run_episode(loop, {&p0, &cook}, seed).base_return;
    out.cooperative_mean += e.cooperative;
    out.deviation_a_mean += e.deviation_a;
    out.deviation_b_mean += e.deviation_b;
    out.episodes.push_back(e);
  }
  if (n_episodes > 0) {
    out.cooperative_mean /= n_episodes;
    out.deviation_a_mean /= n_episodes;
    out.deviation_b_mean /= n_episodes;
  }
  return out;
}

}  // namespace llmshape
