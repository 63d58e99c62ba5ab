#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "llmshape/errors.hpp"

namespace llmshape {

/// Fraction of returns at or above `threshold`.
inline double completion_rate(std::span<const double> returns, double threshold = 9.4) {
  if (returns.empty()) throw ContractViolation("completion_rate: empty return list");
  const auto hits = std::count_if(returns.begin(), returns.end(), [&](double r) { return r >= threshold; });
  return static_cast<double>(hits) / static_cast<double>(returns.size());
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

/// Linear-interpolated quantile of a sorted sample (numpy's default rule).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractViolation("quantile: empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Summary of per-decision latencies, all in milliseconds.
struct LatencySummary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double p95 = 0.0;
  double min = 0.0;
  double max = 0.0;

  double iqr() const { return q3 - q1; }
};

inline LatencySummary latency_stats(std::span<const double> samples_ms) {
  if (samples_ms.empty()) throw ContractViolation("latency_stats: no samples");
  std::vector<double> s(samples_ms.begin(), samples_ms.end());
  std::sort(s.begin(), s.end());
  LatencySummary out;
  out.count = s.size();
  for (double x : s) out.mean += x;
  out.mean /= static_cast<double>(s.size());
  out.median = quantile_sorted(s, 0.5);
  out.q1 = quantile_sorted(s, 0.25);
  out.q3 = quantile_sorted(s, 0.75);
  out.p95 = quantile_sorted(s, 0.95);
  out.min = s.front();
  out.max = s.back();
  return out;
}

inline std::vector<double> ns_to_ms(std::span<const std::int64_t> ns) {
  std::vector<double> out;
  out.reserve(ns.size());
  for (auto v : ns) out.push_back(static_cast<double>(v) / 1e6);
  return out;
}

/// Latency split by whether the evaluator had to make a cold (uncached
/// remote) call on that step.
struct LatencyPartition {
  std::vector<double> warm_ms;
  std::vector<double> cold_ms;
};

inline LatencyPartition partition_latency(std::span<const double> samples_ms, std::span<const std::uint8_t> cold) {
  if (samples_ms.size() != cold.size()) throw ContractViolation("partition_latency: length mismatch");
  LatencyPartition out;
  for (std::size_t i = 0; i < samples_ms.size(); ++i) (cold[i] ? out.cold_ms : out.warm_ms).push_back(samples_ms[i]);
  return out;
}

}  // namespace llmshape
