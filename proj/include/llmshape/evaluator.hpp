#pragma once

// Cooperation verdicts: a pair of logits for the tokens "good" and "bad" per
// prompt, produced by interchangeable backends, and the binary shaping
// signal derived from them.

#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "llmshape/errors.hpp"
#include "llmshape/prompt.hpp"

namespace llmshape {

enum class VerdictSource { Heuristic, Remote, Cache, Replay, Fallback };

inline const char* to_string(VerdictSource s) {
  switch (s) {
    case VerdictSource::Heuristic: return "heuristic";
    case VerdictSource::Remote: return "remote";
    case VerdictSource::Cache: return "cache";
    case VerdictSource::Replay: return "replay";
    case VerdictSource::Fallback: return "fallback";
  }
  return "?";
}

struct EvaluatorVerdict {
  double logit_good = 0.0;
  double logit_bad = 0.0;
  VerdictSource source = VerdictSource::Heuristic;

  bool good() const { return logit_good > logit_bad; }
  bool operator==(const EvaluatorVerdict&) const = default;
};

struct ShapingSignal {
  double bonus = 0.0;
  bool operator==(const ShapingSignal&) const = default;
};

/// λ_bonus when logit("good") strictly exceeds logit("bad"), otherwise 0.
inline ShapingSignal shaping_signal(const EvaluatorVerdict& verdict, double bonus) {
  if (!(bonus >= 0.0) || !std::isfinite(bonus)) throw ConfigError("shaping.bonus: must be finite and >= 0");
  if (verdict.source == VerdictSource::Fallback) return {0.0};
  return {verdict.good() ? bonus : 0.0};
}

/// A frozen judge: the same prompt must always map to the same logits.
/// Implementations must tolerate concurrent `judge` calls.
class EvaluatorBackend {
 public:
  virtual ~EvaluatorBackend() = default;
  virtual EvaluatorVerdict judge(std::string_view prompt) = 0;
};

/// On-pace rule: good iff pending <= ceil(K * (1 - t/T)) + 1.
class HeuristicEvaluator final : public EvaluatorBackend {
 public:
  explicit HeuristicEvaluator(int total_orders) : total_orders_(total_orders) {}

  EvaluatorVerdict judge(std::string_view prompt) override {
    const TaskContext ctx = parse_prompt(prompt);
    // Integer form of ceil(K * (T - t) / T).
    const long long num = static_cast<long long>(total_orders_) * (ctx.horizon - ctx.t);
    const long long allowed = (num + ctx.horizon - 1) / ctx.horizon + 1;
    const bool good = ctx.pending <= allowed;
    return good ? EvaluatorVerdict{1.0, -1.0, VerdictSource::Heuristic}
                : EvaluatorVerdict{-1.0, 1.0, VerdictSource::Heuristic};
  }

 private:
  int total_orders_;
};

/// Prompt-keyed verdict store shared across episodes and workers.
class VerdictCache {
 public:
  std::optional<std::pair<double, double>> find(std::string_view prompt) const {
    std::shared_lock lock(mutex_);
    auto it = map_.find(std::string(prompt));
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void insert(std::string_view prompt, std::pair<double, double> logits) {
    std::unique_lock lock(mutex_);
    map_.insert_or_assign(std::string(prompt), logits);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return map_.size();
  }

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::pair<double, double>> map_;
};

struct RemoteClientConfig {
  std::string endpoint = "http://127.0.0.1:8000";
  int timeout_ms = 50;
};

/// Client for the logit server: POST /v1/logits with
/// {"prompt": ..., "candidates": ["good", "bad"]} -> {"logits": [g, b], "model": ...}.
///
/// Transport failures (timeout, refused connection) yield a Fallback verdict
/// and are not cached. A reply that is not 200 or violates the schema raises
/// ProtocolError.
class RemoteEvaluator final : public EvaluatorBackend {
 public:
  explicit RemoteEvaluator(RemoteClientConfig cfg, std::shared_ptr<VerdictCache> cache = std::make_shared<VerdictCache>())
      : cfg_(std::move(cfg)), cache_(std::move(cache)), client_(cfg_.endpoint) {
    const auto sec = cfg_.timeout_ms / 1000;
    const auto usec = (cfg_.timeout_ms % 1000) * 1000;
    client_.set_connection_timeout(sec, usec);
    client_.set_read_timeout(sec, usec);
    client_.set_write_timeout(sec, usec);
    client_.set_keep_alive(true);
  }

  EvaluatorVerdict judge(std::string_view prompt) override {
    if (auto hit = cache_->find(prompt)) return {hit->first, hit->second, VerdictSource::Cache};

    const nlohmann::json request = {{"prompt", std::string(prompt)}, {"candidates", {"good", "bad"}}};
    httplib::Result res;
    {
      std::lock_guard lock(client_mutex_);
      res = client_.Post("/v1/logits", request.dump(), "application/json");
    }
    if (!res) return {0.0, 0.0, VerdictSource::Fallback};
    const auto logits = parse_response(res->status, res->body);
    cache_->insert(prompt, logits);
    return {logits.first, logits.second, VerdictSource::Remote};
  }

  const std::shared_ptr<VerdictCache>& cache() const { return cache_; }

  static std::pair<double, double> parse_response(int status, const std::string& body) {
    if (status != 200) throw ProtocolError("logit server returned HTTP " + std::to_string(status));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("logit server body is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("logits") || !j.contains("model") || !j["model"].is_string())
      throw ProtocolError("logit server response missing 'logits' or 'model'");
    const auto& logits = j["logits"];
    if (!logits.is_array() || logits.size() != 2 || !logits[0].is_number() || !logits[1].is_number())
      throw ProtocolError("logit server 'logits' must be an array of two numbers");
    const double g = logits[0].get<double>();
    const double b = logits[1].get<double>();
    if (!std::isfinite(g) || !std::isfinite(b)) throw ProtocolError("logit server returned non-finite logits");
    return {g, b};
  }

 private:
  RemoteClientConfig cfg_;
  std::shared_ptr<VerdictCache> cache_;
  std::mutex client_mutex_;
  httplib::Client client_;
};

/// Serves verdicts recorded earlier. Accepts any JSONL file whose lines carry
/// "prompt", "logit_good" and "logit_bad" (step logs qualify); other lines are
/// skipped. An unknown prompt is a protocol error.
class ReplayEvaluator final : public EvaluatorBackend {
 public:
  ReplayEvaluator() = default;

  static ReplayEvaluator from_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open replay fixture '" + path + "'");
    ReplayEvaluator out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw ProtocolError("replay fixture line is not a JSON object");
      if (!j.contains("prompt") || !j.contains("logit_good") || !j.contains("logit_bad")) continue;
      if (!j["logit_good"].is_number() || !j["logit_bad"].is_number()) continue;
      out.add(j["prompt"].get<std::string>(), j["logit_good"].get<double>(), j["logit_bad"].get<double>());
    }
    return out;
  }

  void add(std::string prompt, double logit_good, double logit_bad) {
    table_.insert_or_assign(std::move(prompt), std::pair{logit_good, logit_bad});
  }

  EvaluatorVerdict judge(std::string_view prompt) override {
    auto it = table_.find(std::string(prompt));
    if (it == table_.end()) throw ProtocolError("replay fixture has no verdict for '" + std::string(prompt) + "'");
    return {it->second.first, it->second.second, VerdictSource::Replay};
  }

  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, std::pair<double, double>> table_;
};

/// Write-through cache in front of any backend. Cached answers report
/// source Cache; Fallback verdicts are never stored.
class CachedEvaluator final : public EvaluatorBackend {
 public:
  explicit CachedEvaluator(std::shared_ptr<EvaluatorBackend> inner,
                           std::shared_ptr<VerdictCache> cache = std::make_shared<VerdictCache>())
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  EvaluatorVerdict judge(std::string_view prompt) override {
    if (auto hit = cache_->find(prompt)) return {hit->first, hit->second, VerdictSource::Cache};
    EvaluatorVerdict v = inner_->judge(prompt);
    if (v.source != VerdictSource::Fallback) cache_->insert(prompt, {v.logit_good, v.logit_bad});
    return v;
  }

  const std::shared_ptr<VerdictCache>& cache() const { return cache_; }

 private:
  std::shared_ptr<EvaluatorBackend> inner_;
  std::shared_ptr<VerdictCache> cache_;
};

}  // namespace llmshape
