#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "llmshape/llmshape.hpp"

using namespace llmshape;

namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig defaults() { return parse_config("schema_version = \"llmshape-config/v1\"\n"); }

// Always says "good" (or always "bad") without looking at the prompt.
class FixedEvaluator final : public EvaluatorBackend {
 public:
  explicit FixedEvaluator(bool good) : good_(good) {}
  EvaluatorVerdict judge(std::string_view) override {
    ++calls;
    return good_ ? EvaluatorVerdict{2.0, 0.0, VerdictSource::Replay} : EvaluatorVerdict{0.0, 2.0, VerdictSource::Replay};
  }
  int calls = 0;

 private:
  bool good_;
};

}  // namespace

// ------------------------------------------------------------------ config

TEST(Config, DefaultsFilled) {
  const RunConfig c = defaults();
  EXPECT_EQ(c.env.layout, "burger_kitchen");
  EXPECT_EQ(c.env.horizon, 400);
  EXPECT_EQ(c.env.orders, 5);
  EXPECT_EQ(c.env.rewards.delivery, 2.0);
  EXPECT_EQ(c.env.rewards.expiry, -8.0);
  EXPECT_EQ(c.shaping.bonus, 0.05);
  EXPECT_EQ(c.gae.gamma, 0.99);
  EXPECT_EQ(c.gae.lambda_gae, 0.95);
  EXPECT_EQ(c.noise.visibility_mask_prob, 0.15);
  EXPECT_EQ(c.noise.timing_jitter, 20);
  EXPECT_EQ(c.train_steps, 200000);
  EXPECT_EQ(c.condition(), Condition::Clean);
  EXPECT_FALSE(c.train_rewards.has_value());
  EXPECT_EQ(c.seeds.eval_seeds().size(), 200u);
  EXPECT_EQ(c.seeds.eval_seeds().front(), 1000u);
  EXPECT_EQ(c, RunConfig{});
}

TEST(Config, RangeErrorNamesKey) {
  try {
    parse_config("schema_version = \"llmshape-config/v1\"\n[noise]\nvisibility_mask_prob = 1.5\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("visibility_mask_prob"), std::string::npos);
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(Config, UnknownKeyRejected) {
  try {
    parse_config("schema_version = \"llmshape-config/v1\"\n[shaping]\nlamda_bonus = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("shaping.lamda_bonus"), std::string::npos);
  }
}

TEST(Config, MalformedInputs) {
  EXPECT_THROW(parse_config(""), ConfigError);
  EXPECT_THROW(parse_config("schema_version = \"other/v9\"\n"), ConfigError);
  EXPECT_THROW(parse_config("schema_version = \"llmshape-config/v1\"\n[ppo\n"), ConfigError);
  EXPECT_THROW(parse_config("schema_version = \"llmshape-config/v1\"\n[ppo]\nepochs = \"ten\"\n"), ConfigError);
  EXPECT_THROW(parse_config("schema_version = \"llmshape-config/v1\"\n[shaping]\nlambda_bonus = -1.0\n"), ConfigError);
  EXPECT_THROW(parse_config("schema_version = \"llmshape-config/v1\"\n[noise]\ncondition = \"foggy\"\n"), ConfigError);
  EXPECT_THROW(parse_config("schema_version = \"llmshape-config/v1\"\n[env]\nlayout = \"nowhere\"\n"), ConfigError);
  EXPECT_THROW(load_config(temp_path("does_not_exist.toml")), ConfigError);
}

TEST(Config, OverridesAndTrainingRewards) {
  const RunConfig c = parse_config(R"(schema_version = "llmshape-config/v1"
[env]
deadline_window = 300
[env.rewards]
delivery = 3.0
[noise]
condition = "combined"
[ppo]
epochs = 4
[ppo.train_rewards]
expiry = 0.0
cooked = 0.5
[seeds]
train = 7
eval = [1, 2, 3]
)");
  EXPECT_EQ(c.env.deadline_window, 300);
  EXPECT_EQ(c.env.rewards.delivery, 3.0);
  EXPECT_EQ(c.condition(), Condition::Combined);
  EXPECT_EQ(c.ppo.epochs, 4);
  ASSERT_TRUE(c.train_rewards.has_value());
  EXPECT_EQ(c.training_rewards().delivery, 3.0);  // inherited
  EXPECT_EQ(c.training_rewards().expiry, 0.0);
  EXPECT_EQ(c.training_rewards().cooked, 0.5);
  EXPECT_EQ(c.env.rewards.expiry, -8.0);
  EXPECT_EQ(training_env(c).rewards, c.training_rewards());
  EXPECT_EQ(c.seeds.eval_seeds(), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_THROW(parse_config("schema_version = \"llmshape-config/v1\"\n[ppo.train_rewards]\nbogus = 1.0\n"), ConfigError);
}

TEST(Config, HashIgnoresSeedsOnly) {
  RunConfig a = defaults();
  RunConfig b = a;
  b.seeds.train = 99;
  b.seeds.eval_first = 5;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.shaping.bonus = 0.06;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 8u);
}

// -------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripBitExact) {
  RunConfig cfg = defaults();
  const auto params = init_policy<float>(3, 772);
  const CheckpointHeader h{kPolicySchemaVersion, config_hash(cfg), std::string(kObsSchemaVersion), 1, 772};
  const std::string path = temp_path("rt.ckpt");
  save_checkpoint(path, params, h);
  const auto loaded = load_checkpoint(path, 772, config_hash(cfg));
  EXPECT_EQ(loaded.params, params);
  EXPECT_EQ(loaded.header.agent_id, 1);
  EXPECT_FALSE(loaded.config_hash_mismatch);
  EXPECT_EQ(serialize_checkpoint(loaded.params, loaded.header), slurp(path));
  EXPECT_TRUE(load_checkpoint(path, 772, "deadbeef").config_hash_mismatch);
}

TEST(Checkpoint, WeightsAreLittleEndianF32) {
  const auto params = init_policy<float>(4, 6);
  const auto bytes = serialize_checkpoint(params, {kPolicySchemaVersion, "00000000", std::string(kObsSchemaVersion), 0, 6});
  const float w = params.policy.layers[0].weight[0];
  unsigned char expect[4];
  std::uint32_t u;
  std::memcpy(&u, &w, 4);
  for (int k = 0; k < 4; ++k) expect[k] = static_cast<unsigned char>((u >> (8 * k)) & 0xff);
  EXPECT_NE(bytes.find(std::string(reinterpret_cast<char*>(expect), 4)), std::string::npos);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto params = init_policy<float>(5, 772);
  const auto bytes = serialize_checkpoint(params, {kPolicySchemaVersion, "abc", std::string(kObsSchemaVersion), 0, 772});
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), IntegrityError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), IntegrityError);
  EXPECT_THROW(deserialize_checkpoint("garbage-bytes"), IntegrityError);
  EXPECT_THROW(deserialize_checkpoint(bytes, 354), SchemaError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), IoError);
}

// ----------------------------------------------------------------- metrics

TEST(Metrics, CompletionRateExamples) {
  const std::vector<double> r{9.8, 9.8, 3.0};
  EXPECT_DOUBLE_EQ(completion_rate(r), 2.0 / 3.0);
  const std::vector<double> edge{9.4, 9.3999};
  EXPECT_DOUBLE_EQ(completion_rate(edge), 0.5);
  EXPECT_THROW(completion_rate(std::vector<double>{}), ContractViolation);
}

TEST(Metrics, CompletionMonotoneInThreshold) {
  RandomStream rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(rng.uniform_int(1, 50)));
    for (auto& x : r) x = rng.uniform() * 50.0 - 40.0;
    double prev = 1.0;
    for (double th = -45.0; th <= 15.0; th += 0.5) {
      const double c = completion_rate(r, th);
      ASSERT_LE(c, prev);
      prev = c;
    }
  }
}

TEST(Metrics, LatencyStats) {
  const std::vector<double> ms{1, 2, 3, 4};
  const auto s = latency_stats(ms);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.min, 1);
  EXPECT_DOUBLE_EQ(s.max, 4);
  EXPECT_DOUBLE_EQ(s.q1, 1.75);
  EXPECT_DOUBLE_EQ(s.q3, 3.25);
  const auto part = partition_latency(ms, std::vector<std::uint8_t>{1, 0, 0, 1});
  EXPECT_EQ(part.cold_ms, (std::vector<double>{1, 4}));
  EXPECT_EQ(part.warm_ms, (std::vector<double>{2, 3}));
  EXPECT_EQ(ns_to_ms(std::vector<std::int64_t>{1'500'000})[0], 1.5);
}

TEST(Metrics, MeanStdPopulation) {
  const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_std(x);
  EXPECT_DOUBLE_EQ(m.mean, 5.0);
  EXPECT_DOUBLE_EQ(m.std, 2.0);
}

// ------------------------------------------------------------ shaping loop

TEST(ShapingLoop, AllGoodAddsBonusEveryStep) {
  RunConfig cfg = defaults();
  auto ev = std::make_shared<FixedEvaluator>(true);
  ConstantActor stay(Action::Stay);
  const auto rec = run_episode({&stay, &stay}, cfg, Condition::Clean, 1, ev);
  // The last order expires at 260 + 120, which ends the episode.
  EXPECT_EQ(rec.steps, 380);
  EXPECT_EQ(ev->calls, 380);
  EXPECT_DOUBLE_EQ(rec.base_return, -40.0);
  EXPECT_NEAR(rec.shaped_return - rec.base_return, 380 * 0.05, 1e-9);
  EXPECT_EQ(idle_steps(rec), 760);
}

TEST(ShapingLoop, AllBadAddsNothing) {
  RunConfig cfg = defaults();
  ConstantActor stay(Action::Stay);
  const auto rec = run_episode({&stay, &stay}, cfg, Condition::Clean, 1, std::make_shared<FixedEvaluator>(false));
  EXPECT_DOUBLE_EQ(rec.shaped_return, rec.base_return);
}

TEST(ShapingLoop, StrideReusesVerdicts) {
  RunConfig cfg = defaults();
  cfg.shaping.query_stride = 10;
  auto ev = std::make_shared<FixedEvaluator>(true);
  ConstantActor stay(Action::Stay);
  const auto rec = run_episode({&stay, &stay}, cfg, Condition::Clean, 1, ev);
  EXPECT_EQ(ev->calls, 38);
  EXPECT_NEAR(rec.shaped_return - rec.base_return, 19.0, 1e-9);
}

TEST(ShapingLoop, DisabledNeedsNoEvaluator) {
  RunConfig cfg = defaults();
  cfg.shaping.enabled = false;
  ConstantActor stay(Action::Stay);
  const auto rec = run_episode({&stay, &stay}, cfg, Condition::Combined, 3);
  EXPECT_EQ(rec.shaped_return, rec.base_return);
  RunConfig on = defaults();
  EXPECT_THROW(ShapingLoop(KitchenEnv(on.env), on.noise, on.shaping, nullptr), ConfigError);
}

TEST(ShapingLoop, PromptUsesGroundTruthUnderNoise) {
  RunConfig cfg = with_condition(defaults(), Condition::Combined);
  ShapingLoop loop(KitchenEnv(cfg.env), cfg.noise, cfg.shaping, std::make_shared<HeuristicEvaluator>(5));
  ConstantActor stay(Action::Stay);
  loop.begin_episode(9);
  while (!loop.done()) {
    const auto rec = loop.step({&stay, &stay});
    ASSERT_EQ(rec.prompt, render_prompt(loop.state(), false));
    ASSERT_TRUE(rec.bonus == 0.0 || rec.bonus == 0.05);
  }
}

TEST(ShapingLoop, ShapingBoundOnRandomPlay) {
  RunConfig cfg = defaults();
  const auto p0 = init_policy<float>(1, 772), p1 = init_policy<float>(2, 772);
  for (Condition c : kAllConditions) {
    const RunConfig cc = with_condition(cfg, c);
    ShapingLoop loop(KitchenEnv(cc.env), cc.noise, cc.shaping, make_evaluator(cc));
    PolicyActor a0(p0, false), a1(p1, false);
    loop.begin_episode(5);
    while (!loop.done()) {
      const auto rec = loop.step({&a0, &a1});
      const double d = rec.shaped_reward - rec.base_reward;
      ASSERT_GE(d, 0.0);
      ASSERT_LE(d, cc.shaping.bonus);
    }
  }
}

// ------------------------------------------------------- scripted / probe

TEST(Scripted, OracleCompletesEveryOrder) {
  RunConfig cfg = defaults();
  ScriptedActor cook(Role::Cook), server(Role::Server);
  for (Condition c : kAllConditions) {
    const auto rec = run_episode({&cook, &server}, cfg, c, 1000);
    EXPECT_EQ(rec.base_return, 10.0) << to_string(c);
    EXPECT_EQ(rec.deliveries, 5);
    EXPECT_EQ(rec.expiries, 0);
  }
}

TEST(Scripted, RoleSwapDoesWorse) {
  RunConfig cfg = defaults();
  ScriptedActor cook(Role::Cook), server(Role::Server);
  const double coop = run_episode({&cook, &server}, cfg, Condition::Clean, 1).base_return;
  EXPECT_LT(run_episode({&server, &server}, cfg, Condition::Clean, 1).base_return, coop);
  EXPECT_LT(run_episode({&cook, &cook}, cfg, Condition::Clean, 1).base_return, coop);
}

TEST(Probe, DeterministicAndShaped) {
  RunConfig cfg = defaults();
  const auto p0 = init_policy<float>(1, 772), p1 = init_policy<float>(2, 772);
  const auto a = deviation_probe({&p0, &p1}, cfg, 3);
  const auto b = deviation_probe({&p0, &p1}, cfg, 3);
  ASSERT_EQ(a.episodes.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.episodes[k].cooperative, b.episodes[k].cooperative);
    EXPECT_EQ(a.episodes[k].deviation_a, b.episodes[k].deviation_a);
    EXPECT_EQ(a.episodes[k].deviation_b, b.episodes[k].deviation_b);
  }
  EXPECT_EQ(a.cooperative_mean, b.cooperative_mean);
}

// ------------------------------------------------------- logging / report

TEST(Logging, StepRecordSchema) {
  RunConfig cfg = defaults();
  ShapingLoop loop(KitchenEnv(cfg.env), cfg.noise, cfg.shaping, std::make_shared<HeuristicEvaluator>(5));
  ConstantActor stay(Action::Stay);
  loop.begin_episode(1);
  const auto rec = loop.step({&stay, &stay});
  const auto j = step_log_record({"ppo+llm", "clean", 4, 1}, rec);
  EXPECT_EQ(j["type"], "step");
  EXPECT_EQ(j["method"], "ppo+llm");
  EXPECT_EQ(j["episode"], 4);
  EXPECT_EQ(j["t"], 0);
  EXPECT_EQ(j["actions"], nlohmann::json::array({"Stay", "Stay"}));
  EXPECT_EQ(j["prompt"], "orders:0 t:1/400");
  EXPECT_EQ(j["logit_good"], 1.0);
  EXPECT_EQ(j["source"], "heuristic");
  EXPECT_DOUBLE_EQ(j["shaped_reward"].get<double>(), 0.05);
  EXPECT_EQ(j["idle"], nlohmann::json::array({true, true}));
  EXPECT_FALSE(j.contains("latency_ns"));
  const auto lat = latency_log_record({"ppo+llm", "clean", 4, 1}, rec);
  EXPECT_EQ(lat["cold"], false);
  EXPECT_GE(lat["latency_ns"].get<std::int64_t>(), 0);
}

TEST(Logging, ReportRecomputesMetricsFromLogs) {
  RunConfig cfg = defaults();
  cfg.seeds.eval_count = 6;
  const auto p0 = init_policy<float>(1, 772), p1 = init_policy<float>(2, 772);
  const std::string steps = temp_path("rep_steps.jsonl"), lat = temp_path("rep_lat.jsonl");
  SuiteResult suite;
  {
    JsonlLogWriter log(steps, lat);
    suite = evaluate_suite({&p0, &p1}, cfg, kAllConditions, "ppo+llm", &log);
  }
  const auto rebuilt = report_from_logs(read_jsonl(steps), read_jsonl(lat));
  ASSERT_EQ(rebuilt.rows.size(), suite.report.rows.size());
  for (std::size_t k = 0; k < rebuilt.rows.size(); ++k) {
    const auto& a = suite.report.rows[k];
    const auto& b = rebuilt.rows[k];
    EXPECT_EQ(a.condition, b.condition);
    EXPECT_EQ(a.episodes, b.episodes);
    EXPECT_NEAR(a.base_return.mean, b.base_return.mean, 1e-9);
    EXPECT_NEAR(a.shaped_return.mean, b.shaped_return.mean, 1e-9);
    EXPECT_NEAR(a.completion, b.completion, 1e-9);
    EXPECT_NEAR(a.mean_idle, b.mean_idle, 1e-9);
    EXPECT_NEAR(a.latency.mean, b.latency.mean, 1e-9);
  }
}

TEST(Logging, EvaluationLogsAreReproducible) {
  RunConfig cfg = defaults();
  cfg.seeds.eval_count = 3;
  const auto p0 = init_policy<float>(1, 772), p1 = init_policy<float>(2, 772);
  const std::string a = temp_path("repro_a.jsonl"), b = temp_path("repro_b.jsonl");
  {
    JsonlLogWriter log(a, "");
    evaluate_suite({&p0, &p1}, cfg, kAllConditions, "ppo", &log);
  }
  {
    JsonlLogWriter log(b, "");
    evaluate_suite({&p0, &p1}, cfg, kAllConditions, "ppo", &log);
  }
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Logging, CsvHelpers) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(std::stod(fmt_double(0.1)), 0.1);
  EXPECT_EQ(metrics_csv_header().substr(0, 25), "method,condition,episodes");
}

TEST(Logging, UnwritablePathIsIoError) {
  EXPECT_THROW(JsonlLogWriter("/nonexistent-dir/x.jsonl", ""), IoError);
}

// ----------------------------------------------------------------- trainer

TEST(Trainer, ShortRunIsDeterministic) {
  RunConfig cfg = defaults();
  cfg.ppo.rollout_len = 256;
  cfg.ppo.minibatch = 64;
  cfg.ppo.epochs = 2;
  cfg.train_steps = 512;
  auto run = [&] {
    Trainer t(cfg, make_evaluator(cfg));
    std::vector<TrainingRow> rows;
    t.run([&](const TrainingRow& r) { rows.push_back(r); });
    return std::pair{rows, t.params(0)};
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.first.size(), 2u);
  EXPECT_EQ(a.first[1].env_steps, 512);
  for (std::size_t k = 0; k < a.first.size(); ++k) EXPECT_EQ(training_csv_row(a.first[k]), training_csv_row(b.first[k]));
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.second, init_policy<float>(learner_init_seed(cfg.seeds.train, 0), 772));
}

TEST(Trainer, EndpointOverrideOnlyAffectsRemote) {
  RunConfig cfg = defaults();
  EXPECT_NE(dynamic_cast<HeuristicEvaluator*>(make_evaluator(cfg).get()), nullptr);
  cfg.evaluator.kind = EvaluatorKind::Remote;
  EXPECT_NE(dynamic_cast<RemoteEvaluator*>(make_evaluator(cfg).get()), nullptr);
}
