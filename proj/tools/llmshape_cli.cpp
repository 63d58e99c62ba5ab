// llmshape command-line interface.
//
// Exit codes: 0 success, 2 config error, 3 numeric fault, 4 protocol error,
// 1 anything else.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "llmshape/llmshape.hpp"
#include "llmshape/plot.hpp"

namespace fs = std::filesystem;
using namespace llmshape;

namespace {

struct CommonOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "TOML run configuration (defaults when omitted)");
  cmd->add_option("--seed", o.seed, "Seed override (training seed, or first evaluation seed)");
}

RunConfig load(const CommonOpts& o) {
  RunConfig cfg = o.config.empty() ? parse_config("schema_version = \"llmshape-config/v1\"\n") : load_config(o.config);
  return cfg;
}

void apply_eval_seed(RunConfig& cfg, const CommonOpts& o) {
  if (o.seed) {
    cfg.seeds.eval.clear();
    cfg.seeds.eval_first = *o.seed;
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::string method_name(const RunConfig& cfg) { return cfg.shaping.enabled ? "ppo+llm" : "ppo"; }

std::array<PolicyParams<float>, kNumAgents> load_policies(const fs::path& dir, const RunConfig& cfg) {
  std::array<PolicyParams<float>, kNumAgents> out;
  const int dim = obs_dim(KitchenEnv(cfg.env));
  const std::string hash = config_hash(cfg);
  for (int i = 0; i < kNumAgents; ++i) {
    const auto path = dir / ("agent" + std::to_string(i) + ".ckpt");
    auto ck = load_checkpoint(path.string(), dim, hash);
    if (ck.config_hash_mismatch)
      std::cerr << "warning: " << path.string() << " was trained under config " << ck.header.config_hash
                << ", current config is " << hash << "\n";
    out[static_cast<std::size_t>(i)] = std::move(ck.params);
  }
  return out;
}

std::vector<Condition> parse_conditions(const std::vector<std::string>& names) {
  std::vector<Condition> out;
  if (names.empty()) return {kAllConditions.begin(), kAllConditions.end()};
  for (const auto& n : names) out.push_back(parse_condition(n));
  return out;
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonOpts& o, const std::string& out_dir, const std::string& shaping, bool log_steps) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.seeds.train = *o.seed;
  if (shaping == "on") cfg.shaping.enabled = true;
  if (shaping == "off") cfg.shaping.enabled = false;
  fs::create_directories(out_dir);
  Trainer trainer(cfg, cfg.shaping.enabled ? make_evaluator(cfg) : nullptr);
  JsonlLogWriter log;
  if (log_steps) {
    log.open((fs::path(out_dir) / "train_steps.jsonl").string(), "");
    trainer.set_log(&log, method_name(cfg) + "/train");
  }
  std::ofstream csv(fs::path(out_dir) / "training.csv", std::ios::trunc);
  csv << training_csv_header() << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  trainer.run([&](const TrainingRow& row) {
    csv << training_csv_row(row) << "\n";
    if (row.update % 10 == 0 || trainer.finished())
      std::fprintf(stderr, "update %d  steps %lld  base %.2f  shaped %.2f  bonus_rate %.3f\n", row.update, row.env_steps,
                   row.mean_base_return, row.mean_shaped_return, row.bonus_rate);
  });
  log.flush();
  const std::string hash = config_hash(cfg);
  for (int i = 0; i < kNumAgents; ++i) {
    CheckpointHeader h{kPolicySchemaVersion, hash, std::string(kObsSchemaVersion), i, trainer.params(i).obs_dim()};
    save_checkpoint((fs::path(out_dir) / ("agent" + std::to_string(i) + ".ckpt")).string(), trainer.params(i), h);
  }
  write_file(fs::path(out_dir) / "config.json", to_json(cfg).dump(2) + "\n");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("trained %lld steps in %.1f s -> %s\n", trainer.env_steps(), secs, out_dir.c_str());
  return 0;
}

// ------------------------------------------------------------- evaluate

int cmd_evaluate(const CommonOpts& o, const std::string& ckpt_dir, const std::string& out_dir,
                 const std::vector<std::string>& conds, std::string method) {
  RunConfig cfg = load(o);
  apply_eval_seed(cfg, o);
  const auto policies = load_policies(ckpt_dir, cfg);
  if (method.empty()) method = method_name(cfg);
  fs::create_directories(out_dir);
  JsonlLogWriter log((fs::path(out_dir) / "steps.jsonl").string(), (fs::path(out_dir) / "latency.jsonl").string());
  const auto conditions = parse_conditions(conds);
  const auto suite = evaluate_suite({&policies[0], &policies[1]}, cfg, conditions, method, &log);
  const std::string csv = metrics_csv(suite.report);
  write_file(fs::path(out_dir) / "metrics.csv", csv);
  std::cout << csv;
  return 0;
}

// -------------------------------------------------------- bench-latency

int cmd_bench(const CommonOpts& o, const std::string& ckpt_dir, long long steps, const std::string& out_csv) {
  RunConfig cfg = load(o);
  const std::uint64_t base_seed = o.seed.value_or(cfg.seeds.eval_first);
  const int dim = obs_dim(KitchenEnv(cfg.env));
  std::array<PolicyParams<float>, kNumAgents> policies;
  if (!ckpt_dir.empty()) {
    policies = load_policies(ckpt_dir, cfg);
  } else {
    for (int i = 0; i < kNumAgents; ++i)
      policies[static_cast<std::size_t>(i)] = init_policy<float>(learner_init_seed(cfg.seeds.train, i), dim, cfg.ppo.hidden);
  }
  const std::array<const PolicyParams<float>*, kNumAgents> ptrs{&policies[0], &policies[1]};
  // Warm-up pass so both arms run with hot caches and allocations.
  (void)measure_latency(ptrs, cfg, false, steps, base_seed);
  const auto ppo_sample = measure_latency(ptrs, cfg, false, steps, base_seed);
  const auto llm_sample = measure_latency(ptrs, cfg, true, steps, base_seed);
  const auto& ppo_ms = ppo_sample.ms;
  const auto& llm_ms = llm_sample.ms;
  const auto& llm_cold = llm_sample.cold;
  const auto ppo = latency_stats(ppo_ms);
  const auto part = partition_latency(llm_ms, llm_cold);
  const auto llm = latency_stats(llm_ms);
  const double overhead = llm.mean / ppo.mean - 1.0;
  std::string csv = "arm,count,mean_ms,median_ms,q1_ms,q3_ms,p95_ms,max_ms\n";
  auto row = [&](const char* name, const LatencySummary& s) {
    csv += std::string(name) + "," + std::to_string(s.count) + "," + fmt_double(s.mean) + "," + fmt_double(s.median) + "," +
           fmt_double(s.q1) + "," + fmt_double(s.q3) + "," + fmt_double(s.p95) + "," + fmt_double(s.max) + "\n";
  };
  row("ppo", ppo);
  row("ppo+llm", llm);
  if (!part.warm_ms.empty() && !part.cold_ms.empty()) {
    row("ppo+llm:warm", latency_stats(part.warm_ms));
    row("ppo+llm:cold", latency_stats(part.cold_ms));
  }
  if (!out_csv.empty()) write_file(out_csv, csv);
  std::cout << csv;
  std::printf("shaping overhead: %.1f%% of the PPO-only mean\n", 100.0 * overhead);
  return 0;
}

// ---------------------------------------------------- probe-equilibrium

int cmd_probe(const CommonOpts& o, const std::string& ckpt_dir, int episodes, const std::string& out_csv) {
  RunConfig cfg = load(o);
  apply_eval_seed(cfg, o);
  const auto policies = load_policies(ckpt_dir, cfg);
  const auto rep = deviation_probe({&policies[0], &policies[1]}, cfg, episodes);
  std::string csv = "seed,cooperative,deviation_a,deviation_b\n";
  for (const auto& e : rep.episodes)
    csv += std::to_string(e.seed) + "," + fmt_double(e.cooperative) + "," + fmt_double(e.deviation_a) + "," +
           fmt_double(e.deviation_b) + "\n";
  if (!out_csv.empty()) write_file(out_csv, csv);
  std::printf("cooperative %.3f  deviation_a %.3f  deviation_b %.3f  (%s)\n", rep.cooperative_mean, rep.deviation_a_mean,
              rep.deviation_b_mean, rep.deviations_lower() ? "both deviations lower" : "a deviation is not lower");
  return 0;
}

// --------------------------------------------------------------- replay

class LoggedActor final : public Actor {
 public:
  explicit LoggedActor(const std::vector<Action>& actions) : actions_(&actions) {}
  ActResult act(int, const GridState& truth, const ObsVector&, RandomStream&) override {
    const auto t = static_cast<std::size_t>(truth.t);
    if (t >= actions_->size()) throw ProtocolError("log ends before the episode does");
    return {(*actions_)[t], 0.0, 0.0};
  }

 private:
  const std::vector<Action>* actions_;
};

Action parse_action(const std::string& s) {
  for (int a = 0; a < kNumActions; ++a)
    if (s == to_string(static_cast<Action>(a))) return static_cast<Action>(a);
  throw ProtocolError("unknown action '" + s + "' in log");
}

int cmd_replay(const CommonOpts& o, const std::string& log_path, int episode, std::string method, bool quiet) {
  RunConfig cfg = load(o);
  const auto lines = read_jsonl(log_path);
  std::vector<nlohmann::json> steps;
  std::string condition;
  for (const auto& j : lines) {
    if (!j.contains("type") || j["type"] != "step" || j["episode"].get<int>() != episode) continue;
    if (method.empty()) method = j["method"].get<std::string>();
    if (j["method"] != method) continue;
    if (condition.empty()) condition = j["condition"].get<std::string>();
    if (j["condition"] != condition) continue;
    steps.push_back(j);
  }
  if (steps.empty()) throw ProtocolError("no steps for episode " + std::to_string(episode) + " in " + log_path);
  const std::uint64_t seed = steps.front()["seed"].get<std::uint64_t>();
  std::array<std::vector<Action>, kNumAgents> actions;
  for (const auto& s : steps)
    for (int i = 0; i < kNumAgents; ++i) actions[static_cast<std::size_t>(i)].push_back(parse_action(s["actions"][static_cast<std::size_t>(i)]));

  // Drive the environment with the logged actions; verdicts come from the
  // log itself, and every bonus must follow from its verdict.
  const RunConfig cc = with_condition(cfg, parse_condition(condition));
  ShapingConfig sh = cc.shaping;
  sh.enabled = false;
  // Training logs carry the training reward table.
  ShapingLoop loop(KitchenEnv(method.ends_with("/train") ? training_env(cc) : cc.env), cc.noise, sh, nullptr);
  loop.begin_episode(seed);
  LoggedActor a0(actions[0]), a1(actions[1]);
  int mismatches = 0;
  if (!quiet) std::cout << render_ascii(loop.state());
  for (const auto& s : steps) {
    const StepRecord rec = loop.step({&a0, &a1});
    const double logged_base = s["base_reward"].get<double>();
    const double logged_bonus = s["bonus"].get<double>();
    double expect_bonus = 0.0;
    if (!s["logit_good"].is_null()) {
      const std::string src = s["source"].get<std::string>();
      const EvaluatorVerdict v{s["logit_good"].get<double>(), s["logit_bad"].get<double>(),
                               src == "fallback" ? VerdictSource::Fallback : VerdictSource::Replay};
      expect_bonus = shaping_signal(v, cc.shaping.bonus).bonus;
      if (s["prompt"].get<std::string>() != render_prompt(loop.state(), cc.shaping.extended_prompt)) ++mismatches;
    }
    if (rec.base_reward != logged_base || expect_bonus != logged_bonus ||
        s["shaped_reward"].get<double>() != shape_reward(logged_base, logged_bonus))
      ++mismatches;
    if (!quiet) {
      std::cout << "step " << rec.t << ": " << to_string(rec.actions[0]) << " / " << to_string(rec.actions[1])
                << "  r=" << logged_base << " bonus=" << logged_bonus;
      for (const auto& e : rec.events) std::cout << " " << to_string(e.kind);
      std::cout << "\n" << render_ascii(loop.state());
    }
  }
  std::printf("replayed %zu steps of episode %d (%s, %s): %d mismatches\n", steps.size(), episode, method.c_str(),
              condition.c_str(), mismatches);
  if (mismatches > 0) throw ProtocolError("log does not match its replay");
  return 0;
}

// --------------------------------------------------------------- report

int cmd_report(const CommonOpts& o, const std::string& log_path, const std::string& latency_path,
               const std::string& out_csv) {
  (void)load(o);  // validates the config that produced the logs
  const auto steps = read_jsonl(log_path);
  const auto lat = latency_path.empty() ? std::vector<nlohmann::json>{} : read_jsonl(latency_path);
  const std::string csv = metrics_csv(report_from_logs(steps, lat));
  if (!out_csv.empty()) write_file(out_csv, csv);
  std::cout << csv;
  return 0;
}

// ----------------------------------------------------------------- plot

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += line[++i];
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int cmd_plot(const CommonOpts& o, const std::vector<std::string>& metrics_paths, const std::vector<std::string>& latency_paths,
             const std::string& out_dir) {
  (void)load(o);
  fs::create_directories(out_dir);
  std::vector<std::string> conditions;
  std::map<std::string, BarSeries> ret, comp;
  std::vector<std::string> methods;
  for (const auto& path : metrics_paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    auto col = [&](const std::string& name) {
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
      throw IoError(path + ": missing column '" + name + "'");
    };
    const auto c_method = col("method"), c_cond = col("condition"), c_ret = col("mean_return"), c_comp = col("completion_rate");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      const auto& m = f[c_method];
      const auto& c = f[c_cond];
      if (std::find(conditions.begin(), conditions.end(), c) == conditions.end()) conditions.push_back(c);
      if (!ret.count(m)) methods.push_back(m);
      ret[m].name = m;
      comp[m].name = m;
      ret[m].values[c] = std::stod(f[c_ret]);
      comp[m].values[c] = std::stod(f[c_comp]);
    }
  }
  std::vector<BarSeries> rs, cs;
  for (const auto& m : methods) {
    rs.push_back(ret[m]);
    cs.push_back(comp[m]);
  }
  write_file(fs::path(out_dir) / "returns.svg", svg_bar_chart("Mean episodic return", "return", conditions, rs));
  write_file(fs::path(out_dir) / "completion.svg", svg_bar_chart("Completion rate (return >= 9.4)", "rate", conditions, cs));

  if (!latency_paths.empty()) {
    std::map<std::string, std::vector<double>> samples;
    std::vector<std::string> order;
    for (const auto& path : latency_paths)
      for (const auto& j : read_jsonl(path)) {
        const std::string key = j["method"].get<std::string>();
        if (!samples.count(key)) order.push_back(key);
        samples[key].push_back(static_cast<double>(j["latency_ns"].get<std::int64_t>()) / 1e6);
      }
    std::vector<std::pair<std::string, LatencySummary>> boxes;
    for (const auto& k : order) boxes.emplace_back(k, latency_stats(samples[k]));
    write_file(fs::path(out_dir) / "latency.svg", svg_box_plot("Per-decision latency", "ms", boxes));
  }
  std::printf("plots written to %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"llmshape: two-agent kitchen PPO with evaluator-gated reward shaping"};
  app.require_subcommand(1);

  CommonOpts train_o, eval_o, bench_o, probe_o, replay_o, report_o, plot_o;

  auto* train = app.add_subcommand("train", "Train both PPO learners and write checkpoints");
  add_common(train, train_o);
  std::string train_out = "runs/train", shaping = "config";
  bool log_steps = false;
  train->add_option("--out", train_out, "Output directory");
  train->add_option("--shaping", shaping, "on | off | config")->check(CLI::IsMember({"on", "off", "config"}));
  train->add_flag("--log-steps", log_steps, "Write every training step to train_steps.jsonl");

  auto* eval = app.add_subcommand("evaluate", "Evaluate checkpoints across noise conditions");
  add_common(eval, eval_o);
  std::string eval_ckpt = "runs/train", eval_out = "runs/eval", eval_method;
  std::vector<std::string> eval_conds;
  eval->add_option("--checkpoints", eval_ckpt, "Directory holding agent0.ckpt and agent1.ckpt");
  eval->add_option("--out", eval_out, "Output directory");
  eval->add_option("--conditions", eval_conds, "Subset of clean, visibility, timing, combined");
  eval->add_option("--method", eval_method, "Method label written to logs and metrics");

  auto* bench = app.add_subcommand("bench-latency", "Per-decision latency with and without shaping");
  add_common(bench, bench_o);
  std::string bench_ckpt, bench_out;
  long long bench_steps = 10000;
  bench->add_option("--checkpoints", bench_ckpt, "Checkpoint directory (fresh policies when omitted)");
  bench->add_option("--steps", bench_steps, "Decision steps per arm")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "CSV output path");

  auto* probe = app.add_subcommand("probe-equilibrium", "Unilateral deviation probe");
  add_common(probe, probe_o);
  std::string probe_ckpt = "runs/train", probe_out;
  int probe_eps = 50;
  probe->add_option("--checkpoints", probe_ckpt, "Checkpoint directory");
  probe->add_option("--episodes", probe_eps, "Episodes per arm")->check(CLI::PositiveNumber);
  probe->add_option("--out", probe_out, "CSV output path");

  auto* replay = app.add_subcommand("replay", "ASCII replay of a logged episode with bonus re-verification");
  add_common(replay, replay_o);
  std::string replay_log, replay_method;
  int replay_ep = 0;
  bool replay_quiet = false;
  replay->add_option("--log", replay_log, "Step log (JSONL)")->required();
  replay->add_option("--episode", replay_ep, "Episode index within the log");
  replay->add_option("--method", replay_method, "Method label to select");
  replay->add_flag("--quiet", replay_quiet, "Only print the verification summary");

  auto* report = app.add_subcommand("report", "Recompute the metrics table from logs");
  add_common(report, report_o);
  std::string report_log, report_lat, report_out;
  report->add_option("--log", report_log, "Step log (JSONL)")->required();
  report->add_option("--latency", report_lat, "Latency sidecar log (JSONL)");
  report->add_option("--out", report_out, "CSV output path");

  auto* plot = app.add_subcommand("plot", "SVG charts from metrics CSVs and latency logs");
  add_common(plot, plot_o);
  std::vector<std::string> plot_metrics, plot_lat;
  std::string plot_out = "runs/plots";
  plot->add_option("--metrics", plot_metrics, "metrics.csv files")->required();
  plot->add_option("--latency", plot_lat, "latency.jsonl files");
  plot->add_option("--out", plot_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_o, train_out, shaping, log_steps);
    if (*eval) return cmd_evaluate(eval_o, eval_ckpt, eval_out, eval_conds, eval_method);
    if (*bench) return cmd_bench(bench_o, bench_ckpt, bench_steps, bench_out);
    if (*probe) return cmd_probe(probe_o, probe_ckpt, probe_eps, probe_out);
    if (*replay) return cmd_replay(replay_o, replay_log, replay_ep, replay_method, replay_quiet);
    if (*report) return cmd_report(report_o, report_log, report_lat, report_out);
    if (*plot) return cmd_plot(plot_o, plot_metrics, plot_lat, plot_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
