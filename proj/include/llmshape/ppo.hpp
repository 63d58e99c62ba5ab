#pragma once

// Clipped-surrogate PPO for one agent: separate policy and value networks,
// action sampling, and minibatch updates with global gradient-norm clipping.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "llmshape/errors.hpp"
#include "llmshape/kitchen.hpp"
#include "llmshape/mlp.hpp"
#include "llmshape/rng.hpp"
#include "llmshape/shaping_gae.hpp"

namespace llmshape {

inline constexpr const char* kPolicySchemaVersion = "llmshape-policy/v1";

struct PpoHparams {
  double clip_eps = 0.2;
  double learning_rate = 3e-4;
  int rollout_len = 2048;
  int minibatch = 64;
  int epochs = 10;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double kl_guard = 0.15;
  std::vector<int> hidden = {64, 64};

  void validate() const {
    if (!(clip_eps > 0.0)) throw ConfigError("ppo.clip_eps: must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("ppo.learning_rate: must be > 0");
    if (rollout_len < 1) throw ConfigError("ppo.rollout_len: must be >= 1");
    if (minibatch < 1) throw ConfigError("ppo.minibatch: must be >= 1");
    if (rollout_len % minibatch != 0) throw ConfigError("ppo.rollout_len: must be divisible by ppo.minibatch");
    if (epochs < 1) throw ConfigError("ppo.epochs: must be >= 1");
    if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef: must be >= 0");
    if (!(value_coef >= 0.0)) throw ConfigError("ppo.value_coef: must be >= 0");
    if (!(max_grad_norm > 0.0)) throw ConfigError("ppo.max_grad_norm: must be > 0");
    if (!(kl_guard > 0.0)) throw ConfigError("ppo.kl_guard: must be > 0");
    if (hidden.empty()) throw ConfigError("ppo.hidden: need at least one hidden layer");
    for (int h : hidden)
      if (h < 1) throw ConfigError("ppo.hidden: layer widths must be >= 1");
  }
  bool operator==(const PpoHparams&) const = default;
};

template <typename Scalar>
struct PolicyParams {
  Mlp<Scalar> policy;  // obs -> hidden... -> action logits
  Mlp<Scalar> value;   // obs -> hidden... -> 1
  std::string schema_version = kPolicySchemaVersion;

  int obs_dim() const { return policy.input_dim(); }
  int num_actions() const { return policy.output_dim(); }
  bool all_finite() const { return policy.all_finite() && value.all_finite(); }
  bool operator==(const PolicyParams&) const = default;
};

template <typename Scalar>
PolicyParams<Scalar> init_policy(std::uint64_t seed, int obs_dim, std::span<const int> hidden = std::array{64, 64},
                                 int num_actions = kNumActions) {
  if (obs_dim <= 0) throw ContractViolation("init_policy: obs_dim must be positive");
  RandomStream rng(seed);
  std::vector<int> pi_sizes{obs_dim};
  pi_sizes.insert(pi_sizes.end(), hidden.begin(), hidden.end());
  std::vector<int> vf_sizes = pi_sizes;
  pi_sizes.push_back(num_actions);
  vf_sizes.push_back(1);
  PolicyParams<Scalar> p;
  p.policy = make_mlp<Scalar>(pi_sizes, std::sqrt(2.0), 0.01, rng);
  p.value = make_mlp<Scalar>(vf_sizes, std::sqrt(2.0), 1.0, rng);
  return p;
}

/// log-softmax computed in double.
template <typename Scalar>
std::vector<double> log_softmax(std::span<const Scalar> logits) {
  double mx = -INFINITY;
  for (Scalar z : logits) mx = std::max(mx, static_cast<double>(z));
  double sum = 0.0;
  for (Scalar z : logits) sum += std::exp(static_cast<double>(z) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

struct ActResult {
  Action action = Action::Stay;
  double log_prob = 0.0;
  double value = 0.0;
};

template <typename Scalar>
ActResult act(const PolicyParams<Scalar>& params, std::span<const Scalar> obs, RandomStream& rng, bool deterministic) {
  if (static_cast<int>(obs.size()) != params.obs_dim())
    throw ContractViolation("act: observation length does not match the policy input");
  const auto logits = params.policy.forward(obs);
  const auto v = params.value.forward(obs);
  const auto logp = log_softmax<Scalar>(logits);
  for (double lp : logp)
    if (std::isnan(lp)) throw NumericFault("policy network produced NaN logits");
  if (!std::isfinite(static_cast<double>(v[0]))) throw NumericFault("value network produced a non-finite value");

  std::size_t choice = 0;
  if (deterministic) {
    choice = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  } else {
    const double u = rng.uniform();
    double cum = 0.0;
    choice = logp.size() - 1;
    for (std::size_t i = 0; i < logp.size(); ++i) {
      cum += std::exp(logp[i]);
      if (u < cum) {
        choice = i;
        break;
      }
    }
  }
  return {static_cast<Action>(choice), logp[choice], static_cast<double>(v[0])};
}

/// Log-probabilities of the given actions under `params` (no sampling).
template <typename Scalar>
std::vector<double> evaluate_actions(const PolicyParams<Scalar>& params, std::span<const Scalar> obs_flat,
                                     std::span<const int> actions) {
  const auto d = static_cast<std::size_t>(params.obs_dim());
  std::vector<double> out(actions.size());
  for (std::size_t n = 0; n < actions.size(); ++n) {
    const auto logits = params.policy.forward(obs_flat.subspan(n * d, d));
    out[n] = log_softmax<Scalar>(logits)[static_cast<std::size_t>(actions[n])];
  }
  return out;
}

/// Per-agent training batch; `obs` is row-major (size * obs_dim).
template <typename Scalar>
struct PpoBatch {
  int obs_dim = 0;
  std::vector<Scalar> obs;
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;  // already normalized when used by ppo_update
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

template <typename Scalar>
struct PolicyGrad {
  Mlp<Scalar> policy;
  Mlp<Scalar> value;
};

/// Loss  -mean(min(ρÂ, clip(ρ)Â)) + c_v mean((V-G)^2) - c_e mean(H)  over the
/// samples `idx` of `batch`, with its exact gradient accumulated into `grad`
/// (pass nullptr for loss only).
template <typename Scalar>
LossTerms ppo_loss(const PolicyParams<Scalar>& params, const PpoBatch<Scalar>& batch, std::span<const std::size_t> idx,
                   const PpoHparams& hp, PolicyGrad<Scalar>* grad) {
  LossTerms terms;
  const auto d = static_cast<std::size_t>(batch.obs_dim);
  const double n = static_cast<double>(idx.size());
  MlpTape<Scalar> pi_tape;
  MlpTape<Scalar> vf_tape;
  std::vector<Scalar> d_logits;
  std::array<Scalar, 1> d_value{};
  int clipped = 0;
  for (std::size_t s : idx) {
    const std::span<const Scalar> x(batch.obs.data() + s * d, d);
    const auto logits = params.policy.forward(x, pi_tape);
    const auto v_out = params.value.forward(x, vf_tape);
    const auto logp = log_softmax<Scalar>(logits);
    const auto a = static_cast<std::size_t>(batch.actions[s]);
    const double adv = batch.advantages[s];
    const double log_ratio = logp[a] - batch.old_log_probs[s];
    const double ratio = std::exp(log_ratio);
    const double clipped_ratio = std::clamp(ratio, 1.0 - hp.clip_eps, 1.0 + hp.clip_eps);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped_ratio * adv;
    const bool through_ratio = unclipped_obj <= clipped_obj;
    if (std::abs(ratio - 1.0) > hp.clip_eps) ++clipped;

    double entropy = 0.0;
    for (double lp : logp) entropy -= std::exp(lp) * lp;
    const double v = static_cast<double>(v_out[0]);
    const double err = v - batch.returns[s];

    terms.policy += -std::min(unclipped_obj, clipped_obj) / n;
    terms.value += err * err / n;
    terms.entropy += entropy / n;
    terms.approx_kl += ((ratio - 1.0) - log_ratio) / n;

    if (grad) {
      // dL/dlogp[a] from the surrogate; dlogp[a]/dz_k = 1[k=a] - p_k.
      const double g_logp = through_ratio ? -adv * ratio / n : 0.0;
      d_logits.assign(logits.size(), Scalar(0));
      for (std::size_t k = 0; k < logits.size(); ++k) {
        const double p = std::exp(logp[k]);
        double g = g_logp * ((k == a ? 1.0 : 0.0) - p);
        // dH/dz_k = -p_k (log p_k + H); the loss carries -c_e H / n.
        g += hp.entropy_coef * p * (logp[k] + entropy) / n;
        d_logits[k] = static_cast<Scalar>(g);
      }
      params.policy.backward(pi_tape, d_logits, grad->policy);
      d_value[0] = static_cast<Scalar>(2.0 * hp.value_coef * err / n);
      params.value.backward(vf_tape, d_value, grad->value);
    }
  }
  terms.clip_fraction = static_cast<double>(clipped) / n;
  terms.total = terms.policy + hp.value_coef * terms.value - hp.entropy_coef * terms.entropy;
  return terms;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  int epochs_completed = 0;
  int minibatches = 0;
  bool early_stopped = false;
  bool operator==(const UpdateStats&) const = default;
};

/// One agent's learner: parameters plus optimizer state.
template <typename Scalar>
struct PpoLearner {
  PolicyParams<Scalar> params;
  AdamState<Scalar> adam;
};

/// Runs `epochs` passes of shuffled minibatches over `batch`. Stops early when
/// a minibatch's approximate KL to the pre-update policy exceeds the guard.
template <typename Scalar>
UpdateStats ppo_update(PpoLearner<Scalar>& learner, const PpoBatch<Scalar>& batch, const PpoHparams& hp,
                       RandomStream& rng) {
  UpdateStats stats;
  const std::size_t n = batch.size();
  if (n == 0) return stats;
  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(hp.minibatch), n);
  std::vector<std::size_t> order(n);
  PolicyGrad<Scalar> grad{learner.params.policy.zeros_like(), learner.params.value.zeros_like()};
  double kl_sum = 0.0;

  for (int epoch = 0; epoch < hp.epochs && !stats.early_stopped; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start + mb <= n; start += mb) {
      grad.policy = learner.params.policy.zeros_like();
      grad.value = learner.params.value.zeros_like();
      const std::span<const std::size_t> idx(order.data() + start, mb);
      const LossTerms terms = ppo_loss(learner.params, batch, idx, hp, &grad);
      if (!std::isfinite(terms.total)) throw NumericFault("PPO loss is not finite");
      if (terms.approx_kl > hp.kl_guard) {
        stats.early_stopped = true;
        break;
      }

      double sq = 0.0;
      grad.policy.for_each_param([&](Scalar g) { sq += static_cast<double>(g) * static_cast<double>(g); });
      grad.value.for_each_param([&](Scalar g) { sq += static_cast<double>(g) * static_cast<double>(g); });
      const double norm = std::sqrt(sq);
      if (norm > hp.max_grad_norm) {
        const auto scale = static_cast<Scalar>(hp.max_grad_norm / (norm + 1e-6));
        grad.policy.for_each_param([&](Scalar& g) { g *= scale; });
        grad.value.for_each_param([&](Scalar& g) { g *= scale; });
      }
      std::array<Mlp<Scalar>*, 2> nets{&learner.params.policy, &learner.params.value};
      std::array<const Mlp<Scalar>*, 2> grads{&grad.policy, &grad.value};
      adam_step<Scalar>(nets, grads, hp.learning_rate, learner.adam);

      stats.policy_loss += terms.policy;
      stats.value_loss += terms.value;
      stats.entropy += terms.entropy;
      stats.clip_fraction += terms.clip_fraction;
      stats.grad_norm += norm;
      kl_sum += terms.approx_kl;
      stats.minibatches += 1;
    }
    if (!stats.early_stopped) stats.epochs_completed += 1;
  }
  if (stats.minibatches > 0) {
    const double m = stats.minibatches;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_fraction /= m;
    stats.grad_norm /= m;
    stats.approx_kl = kl_sum / m;
  }
  if (!learner.params.all_finite()) throw NumericFault("PPO update produced non-finite parameters");
  return stats;
}

/// Fills advantages (normalized) and returns of `batch` from per-step rewards,
/// values, terminal flags and the bootstrap value after the last step.
template <typename Scalar>
void compute_batch_targets(PpoBatch<Scalar>& batch, std::span<const double> shaped_rewards,
                           std::span<const double> values, std::span<const bool> terminal, double bootstrap_value,
                           const GaeConfig& gae, bool normalize = true) {
  const std::size_t n = shaped_rewards.size();
  std::vector<ShapedTransition<double>> tr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double next_v = i + 1 < n ? values[i + 1] : bootstrap_value;
    tr[i] = {0.0, 0.0, shaped_rewards[i], values[i], next_v, terminal[i]};
  }
  batch.advantages = gae_advantages<double>(tr, gae);
  batch.returns.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.returns[i] = batch.advantages[i] + values[i];
  if (normalize) normalize_advantages<double>(batch.advantages);
}

}  // namespace llmshape
