#pragma once

// JSONL step logs and CSV tables.
//
// Step records are a deterministic function of (config, seeds). Wall-clock
// latency is written to a separate sidecar stream so the step log stays
// byte-identical across replays.

#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "llmshape/errors.hpp"
#include "llmshape/evaluator.hpp"
#include "llmshape/kitchen.hpp"
#include "llmshape/shaping_loop.hpp"

namespace llmshape {

struct StepLogContext {
  std::string method;     // "ppo" or "ppo+llm" (or a probe arm name)
  std::string condition;  // clean | visibility | timing | combined
  int episode = 0;
  std::uint64_t seed = 0;
};

inline nlohmann::ordered_json step_log_record(const StepLogContext& ctx, const StepRecord& rec) {
  nlohmann::ordered_json j;
  j["type"] = "step";
  j["method"] = ctx.method;
  j["condition"] = ctx.condition;
  j["episode"] = ctx.episode;
  j["seed"] = ctx.seed;
  j["t"] = rec.t;
  j["actions"] = {to_string(rec.actions[0]), to_string(rec.actions[1])};
  j["base_reward"] = rec.base_reward;
  j["bonus"] = rec.bonus;
  j["shaped_reward"] = rec.shaped_reward;
  j["prompt"] = rec.prompt;
  if (rec.verdict) {
    j["logit_good"] = rec.verdict->logit_good;
    j["logit_bad"] = rec.verdict->logit_bad;
    j["source"] = to_string(rec.verdict->source);
  } else {
    j["logit_good"] = nullptr;
    j["logit_bad"] = nullptr;
    j["source"] = nullptr;
  }
  auto events = nlohmann::ordered_json::array();
  for (const auto& e : rec.events) {
    nlohmann::ordered_json ev;
    ev["kind"] = to_string(e.kind);
    if (e.agent >= 0) ev["agent"] = e.agent;
    events.push_back(std::move(ev));
  }
  j["events"] = std::move(events);
  j["idle"] = {rec.idle[0], rec.idle[1]};
  j["terminal"] = rec.terminal;
  return j;
}

inline nlohmann::ordered_json latency_log_record(const StepLogContext& ctx, const StepRecord& rec) {
  nlohmann::ordered_json j;
  j["method"] = ctx.method;
  j["condition"] = ctx.condition;
  j["episode"] = ctx.episode;
  j["t"] = rec.t;
  j["latency_ns"] = rec.latency_ns;
  j["cold"] = rec.queried && rec.verdict && rec.verdict->source == VerdictSource::Remote;
  return j;
}

/// Appends `record` as one newline-terminated line.
inline void append_log_record(const nlohmann::ordered_json& record, std::ostream& out) {
  out << record.dump() << '\n';
  if (!out) throw IoError("failed to append log record");
}

/// Step log plus optional latency sidecar. On a write failure it tries to
/// leave a partial-log marker line and rethrows.
class JsonlLogWriter {
 public:
  JsonlLogWriter() = default;
  JsonlLogWriter(const std::string& steps_path, const std::string& latency_path) { open(steps_path, latency_path); }

  void open(const std::string& steps_path, const std::string& latency_path) {
    steps_.open(steps_path, std::ios::trunc);
    if (!steps_) throw IoError("cannot open log '" + steps_path + "'");
    if (!latency_path.empty()) {
      latency_.open(latency_path, std::ios::trunc);
      if (!latency_) throw IoError("cannot open log '" + latency_path + "'");
    }
  }

  bool is_open() const { return steps_.is_open(); }

  void write_step(const StepLogContext& ctx, const StepRecord& rec) {
    if (!steps_.is_open()) return;
    guarded([&] {
      append_log_record(step_log_record(ctx, rec), steps_);
      if (latency_.is_open()) append_log_record(latency_log_record(ctx, rec), latency_);
    });
  }

  /// Called at the end of every episode.
  void flush() {
    if (!steps_.is_open()) return;
    guarded([&] {
      steps_.flush();
      if (latency_.is_open()) latency_.flush();
      if (!steps_) throw IoError("failed to flush step log");
    });
  }

 private:
  template <typename F>
  void guarded(F&& f) {
    try {
      f();
    } catch (const IoError& e) {
      steps_.clear();
      steps_ << R"({"type":"partial","reason":)" << nlohmann::json(std::string(e.what())).dump() << "}\n";
      steps_.flush();
      throw;
    }
  }

  std::ofstream steps_;
  std::ofstream latency_;
};

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError(path + ":" + std::to_string(lineno) + ": invalid JSON line");
    out.push_back(std::move(j));
  }
  return out;
}

/// Minimal CSV emission: fields containing ',' or '"' are quoted.
inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace llmshape
