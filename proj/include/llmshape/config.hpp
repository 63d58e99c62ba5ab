#pragma once

// RunConfig: the versioned TOML run description. Every section is optional
// and defaults are filled in; unknown keys and out-of-range values are
// rejected with the offending key path.

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "llmshape/errors.hpp"
#include "llmshape/kitchen.hpp"
#include "llmshape/noise.hpp"
#include "llmshape/ppo.hpp"
#include "llmshape/shaping_gae.hpp"
#include "llmshape/shaping_loop.hpp"

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

namespace llmshape {

inline constexpr std::string_view kConfigSchemaVersion = "llmshape-config/v1";

enum class EvaluatorKind { Heuristic, Remote, Replay };

inline const char* to_string(EvaluatorKind k) {
  switch (k) {
    case EvaluatorKind::Heuristic: return "heuristic";
    case EvaluatorKind::Remote: return "remote";
    case EvaluatorKind::Replay: return "replay";
  }
  return "?";
}

struct EvaluatorConfig {
  EvaluatorKind kind = EvaluatorKind::Heuristic;
  std::string endpoint = "http://127.0.0.1:8000";
  int timeout_ms = 50;
  std::string replay_path;
  bool operator==(const EvaluatorConfig&) const = default;
};

struct SeedConfig {
  std::uint64_t train = 0;
  std::vector<std::uint64_t> eval;  // explicit list; empty -> [eval_first, eval_first + eval_count)
  std::uint64_t eval_first = 1000;
  int eval_count = 200;

  std::vector<std::uint64_t> eval_seeds() const {
    if (!eval.empty()) return eval;
    std::vector<std::uint64_t> out;
    for (int i = 0; i < eval_count; ++i) out.push_back(eval_first + static_cast<std::uint64_t>(i));
    return out;
  }
  bool operator==(const SeedConfig&) const = default;
};

struct RunConfig {
  std::string schema_version = std::string(kConfigSchemaVersion);
  EnvConfig env;
  NoiseSpec noise;  // enabled flags follow `condition`
  PpoHparams ppo;
  long long train_steps = 200000;
  // Reward table seen by the learners; evaluation always scores env.rewards.
  std::optional<RewardTable> train_rewards;
  GaeConfig gae;
  ShapingConfig shaping;
  EvaluatorConfig evaluator;
  SeedConfig seeds;

  Condition condition() const { return noise.condition(); }
  const RewardTable& training_rewards() const { return train_rewards ? *train_rewards : env.rewards; }
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

class TableReader {
 public:
  TableReader(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  std::string key_path(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  const toml::node* find(std::string_view key) {
    seen_.insert(std::string(key));
    return table_ ? table_->get(key) : nullptr;
  }

  void read(std::string_view key, int& out) {
    if (auto* n = find(key)) {
      auto v = n->value_exact<std::int64_t>();
      if (!v) throw ConfigError(key_path(key) + ": expected an integer");
      out = static_cast<int>(*v);
    }
  }
  void read(std::string_view key, long long& out) {
    if (auto* n = find(key)) {
      auto v = n->value_exact<std::int64_t>();
      if (!v) throw ConfigError(key_path(key) + ": expected an integer");
      out = *v;
    }
  }
  void read(std::string_view key, std::uint64_t& out) {
    if (auto* n = find(key)) {
      auto v = n->value_exact<std::int64_t>();
      if (!v || *v < 0) throw ConfigError(key_path(key) + ": expected a non-negative integer");
      out = static_cast<std::uint64_t>(*v);
    }
  }
  void read(std::string_view key, double& out) {
    if (auto* n = find(key)) {
      if (auto f = n->value_exact<double>()) out = *f;
      else if (auto i = n->value_exact<std::int64_t>()) out = static_cast<double>(*i);
      else throw ConfigError(key_path(key) + ": expected a number");
    }
  }
  void read(std::string_view key, bool& out) {
    if (auto* n = find(key)) {
      auto v = n->value_exact<bool>();
      if (!v) throw ConfigError(key_path(key) + ": expected a boolean");
      out = *v;
    }
  }
  void read(std::string_view key, std::string& out) {
    if (auto* n = find(key)) {
      auto v = n->value_exact<std::string>();
      if (!v) throw ConfigError(key_path(key) + ": expected a string");
      out = *v;
    }
  }
  template <typename T>
  void read_array(std::string_view key, std::vector<T>& out) {
    auto* n = find(key);
    if (!n) return;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(key_path(key) + ": expected an array");
    out.clear();
    for (const auto& el : *arr) {
      if constexpr (std::is_same_v<T, std::string>) {
        auto v = el.value_exact<std::string>();
        if (!v) throw ConfigError(key_path(key) + ": expected an array of strings");
        out.push_back(*v);
      } else {
        auto v = el.value_exact<std::int64_t>();
        if (!v || (std::is_unsigned_v<T> && *v < 0)) throw ConfigError(key_path(key) + ": expected an array of integers");
        out.push_back(static_cast<T>(*v));
      }
    }
  }

  TableReader sub(std::string_view key) {
    auto* n = find(key);
    if (!n) return {nullptr, key_path(key)};
    if (!n->is_table()) throw ConfigError(key_path(key) + ": expected a table");
    return {n->as_table(), key_path(key)};
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) throw ConfigError(key_path(k.str()) + ": unknown key");
    }
  }

 private:
  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_rewards(TableReader& rw, RewardTable& out) {
  rw.read("delivery", out.delivery);
  rw.read("expiry", out.expiry);
  rw.read("cooked", out.cooked);
  rw.read("assembled", out.assembled);
  rw.read("picked_up", out.picked_up);
  rw.read("placed", out.placed);
  rw.read("blocked", out.blocked);
  rw.finish();
}

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace detail

/// Range checks shared by parsing and programmatic construction.
inline void validate(const RunConfig& cfg) {
  detail::check(cfg.schema_version == kConfigSchemaVersion,
                "schema_version: expected '" + std::string(kConfigSchemaVersion) + "'");
  const auto& e = cfg.env;
  detail::check(e.orders >= 1 && e.orders <= 64, "env.orders: must lie in [1, 64]");
  detail::check(e.horizon >= 2 && e.horizon <= 100000, "env.horizon: must lie in [2, 100000]");
  detail::check(e.cook_time >= 1, "env.cook_time: must be >= 1");
  detail::check(e.deadline_window >= 1, "env.deadline_window: must be >= 1");
  cfg.noise.validate();
  cfg.ppo.validate();
  detail::check(cfg.train_steps >= 0, "ppo.train_steps: must be >= 0");
  cfg.gae.validate();
  cfg.shaping.validate();
  detail::check(cfg.evaluator.timeout_ms >= 1, "evaluator.timeout_ms: must be >= 1");
  detail::check(cfg.evaluator.kind != EvaluatorKind::Replay || !cfg.evaluator.replay_path.empty(),
                "evaluator.replay_path: required when evaluator.kind = \"replay\"");
  detail::check(cfg.seeds.eval_count >= 0, "seeds.eval_count: must be >= 0");
  // Constructing the env validates the layout and schedule.
  KitchenEnv probe(e);
}

inline RunConfig parse_config(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& err) {
    std::ostringstream os;
    os << "config: TOML parse error at line " << err.source().begin.line << ": " << err.description();
    throw ConfigError(os.str());
  }

  RunConfig cfg;
  detail::TableReader top(&root, "");
  if (!root.contains("schema_version")) throw ConfigError("schema_version: required key missing");
  top.read("schema_version", cfg.schema_version);

  {
    auto env = top.sub("env");
    env.read("layout", cfg.env.layout);
    env.read_array("layout_rows", cfg.env.layout_rows);
    env.read("orders", cfg.env.orders);
    env.read("horizon", cfg.env.horizon);
    env.read("cook_time", cfg.env.cook_time);
    env.read("deadline_window", cfg.env.deadline_window);
    env.read_array("order_arrivals", cfg.env.order_arrivals);
    auto rw = env.sub("rewards");
    detail::read_rewards(rw, cfg.env.rewards);
    env.finish();
  }
  {
    auto noise = top.sub("noise");
    std::string condition = "clean";
    noise.read("condition", condition);
    noise.read("visibility_mask_prob", cfg.noise.visibility_mask_prob);
    noise.read("scalar_jitter", cfg.noise.scalar_jitter);
    noise.read("timing_jitter", cfg.noise.timing_jitter);
    noise.finish();
    try {
      cfg.noise = cfg.noise.with_condition(parse_condition(condition));
    } catch (const ConfigError&) {
      throw ConfigError("noise.condition: expected one of clean, visibility, timing, combined");
    }
  }
  {
    auto ppo = top.sub("ppo");
    ppo.read("clip_eps", cfg.ppo.clip_eps);
    ppo.read("learning_rate", cfg.ppo.learning_rate);
    ppo.read("rollout_len", cfg.ppo.rollout_len);
    ppo.read("minibatch", cfg.ppo.minibatch);
    ppo.read("epochs", cfg.ppo.epochs);
    ppo.read("entropy_coef", cfg.ppo.entropy_coef);
    ppo.read("value_coef", cfg.ppo.value_coef);
    ppo.read("max_grad_norm", cfg.ppo.max_grad_norm);
    ppo.read("kl_guard", cfg.ppo.kl_guard);
    ppo.read_array("hidden", cfg.ppo.hidden);
    ppo.read("train_steps", cfg.train_steps);
    if (ppo.find("train_rewards")) {
      // Unlisted keys inherit from env.rewards.
      RewardTable t = cfg.env.rewards;
      auto tr = ppo.sub("train_rewards");
      detail::read_rewards(tr, t);
      cfg.train_rewards = t;
    }
    ppo.finish();
  }
  {
    auto gae = top.sub("gae");
    gae.read("gamma", cfg.gae.gamma);
    gae.read("lambda_gae", cfg.gae.lambda_gae);
    gae.finish();
  }
  {
    auto sh = top.sub("shaping");
    sh.read("enabled", cfg.shaping.enabled);
    sh.read("lambda_bonus", cfg.shaping.bonus);
    sh.read("query_stride", cfg.shaping.query_stride);
    sh.read("extended_prompt", cfg.shaping.extended_prompt);
    sh.finish();
  }
  {
    auto ev = top.sub("evaluator");
    std::string kind = "heuristic";
    ev.read("kind", kind);
    if (kind == "heuristic") cfg.evaluator.kind = EvaluatorKind::Heuristic;
    else if (kind == "remote") cfg.evaluator.kind = EvaluatorKind::Remote;
    else if (kind == "replay") cfg.evaluator.kind = EvaluatorKind::Replay;
    else throw ConfigError("evaluator.kind: expected heuristic, remote or replay");
    ev.read("endpoint", cfg.evaluator.endpoint);
    ev.read("timeout_ms", cfg.evaluator.timeout_ms);
    ev.read("replay_path", cfg.evaluator.replay_path);
    ev.finish();
  }
  {
    auto sd = top.sub("seeds");
    sd.read("train", cfg.seeds.train);
    sd.read_array("eval", cfg.seeds.eval);
    sd.read("eval_first", cfg.seeds.eval_first);
    sd.read("eval_count", cfg.seeds.eval_count);
    sd.finish();
  }
  top.finish();
  validate(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace detail {
inline nlohmann::ordered_json rewards_json(const RewardTable& r) {
  return {{"delivery", r.delivery}, {"expiry", r.expiry},     {"cooked", r.cooked}, {"assembled", r.assembled},
          {"picked_up", r.picked_up}, {"placed", r.placed}, {"blocked", r.blocked}};
}
}  // namespace detail

/// Canonical JSON form; stable key order, used for hashing and log headers.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["env"] = {{"layout", c.env.layout},
              {"layout_rows", c.env.layout_rows},
              {"orders", c.env.orders},
              {"horizon", c.env.horizon},
              {"cook_time", c.env.cook_time},
              {"deadline_window", c.env.deadline_window},
              {"order_arrivals", c.env.order_arrivals},
              {"rewards", detail::rewards_json(c.env.rewards)}};
  j["noise"] = {{"condition", to_string(c.condition())},
                {"visibility_mask_prob", c.noise.visibility_mask_prob},
                {"scalar_jitter", c.noise.scalar_jitter},
                {"timing_jitter", c.noise.timing_jitter}};
  j["ppo"] = {{"clip_eps", c.ppo.clip_eps},         {"learning_rate", c.ppo.learning_rate},
              {"rollout_len", c.ppo.rollout_len},   {"minibatch", c.ppo.minibatch},
              {"epochs", c.ppo.epochs},             {"entropy_coef", c.ppo.entropy_coef},
              {"value_coef", c.ppo.value_coef},     {"max_grad_norm", c.ppo.max_grad_norm},
              {"kl_guard", c.ppo.kl_guard},         {"hidden", c.ppo.hidden},
              {"train_steps", c.train_steps}};
  if (c.train_rewards) j["ppo"]["train_rewards"] = detail::rewards_json(*c.train_rewards);
  j["gae"] = {{"gamma", c.gae.gamma}, {"lambda_gae", c.gae.lambda_gae}};
  j["shaping"] = {{"enabled", c.shaping.enabled},
                  {"lambda_bonus", c.shaping.bonus},
                  {"query_stride", c.shaping.query_stride},
                  {"extended_prompt", c.shaping.extended_prompt}};
  j["evaluator"] = {{"kind", to_string(c.evaluator.kind)},
                    {"endpoint", c.evaluator.endpoint},
                    {"timeout_ms", c.evaluator.timeout_ms},
                    {"replay_path", c.evaluator.replay_path}};
  j["seeds"] = {{"train", c.seeds.train},
                {"eval", c.seeds.eval},
                {"eval_first", c.seeds.eval_first},
                {"eval_count", c.seeds.eval_count}};
  return j;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

/// 8 hex digits of the CRC-32 of the canonical JSON form, seeds excluded so
/// a `--seed` override does not change it.
inline std::string config_hash(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("seeds");
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of(j.dump()));
  return buf;
}

}  // namespace llmshape
