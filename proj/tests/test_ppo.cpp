#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "llmshape/ppo.hpp"

using namespace llmshape;

namespace {

std::vector<float> unit_input(RandomStream& rng, int dim) {
  std::vector<float> x(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& v : x) {
    v = static_cast<float>(rng.normal());
    norm += static_cast<double>(v) * v;
  }
  for (auto& v : x) v = static_cast<float>(v / std::sqrt(norm));
  return x;
}

PpoBatch<double> random_batch(RandomStream& rng, int dim, int n, const PolicyParams<double>& p) {
  PpoBatch<double> b;
  b.obs_dim = dim;
  for (int s = 0; s < n; ++s) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (auto& v : x) v = rng.normal();
    // A few exact zeros exercise the sparse path.
    x[static_cast<std::size_t>(s % dim)] = 0.0;
    b.obs.insert(b.obs.end(), x.begin(), x.end());
    const int a = static_cast<int>(rng.uniform_int(0, kNumActions - 1));
    b.actions.push_back(a);
    const auto logp = log_softmax<double>(p.policy.forward(x));
    // Old log-probs near the current ones keep most samples inside the clip range.
    b.old_log_probs.push_back(logp[static_cast<std::size_t>(a)] + 0.05 * rng.normal());
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  return b;
}

}  // namespace

TEST(PpoInit, DeterministicPerSeed) {
  EXPECT_EQ(init_policy<float>(7, 772), init_policy<float>(7, 772));
  EXPECT_NE(init_policy<float>(7, 772), init_policy<float>(8, 772));
}

TEST(PpoInit, ShapesAndSchema) {
  const auto p = init_policy<float>(1, 772);
  EXPECT_EQ(p.obs_dim(), 772);
  EXPECT_EQ(p.num_actions(), 6);
  EXPECT_EQ(p.value.output_dim(), 1);
  ASSERT_EQ(p.policy.layers.size(), 3u);
  EXPECT_EQ(p.policy.layers[0].out, 64);
  EXPECT_EQ(p.policy.layers[1].out, 64);
  EXPECT_EQ(p.schema_version, "llmshape-policy/v1");
  EXPECT_THROW(init_policy<float>(1, 0), ContractViolation);
}

TEST(PpoInit, HiddenLayersAreOrthogonal) {
  RandomStream rng(3);
  const auto l = orthogonal_layer<double>(64, 64, 1.0, rng);
  for (int a = 0; a < 64; ++a)
    for (int b = 0; b < 64; ++b) {
      double dot = 0.0;
      for (int i = 0; i < 64; ++i) dot += l.weight[static_cast<std::size_t>(i * 64 + a)] * l.weight[static_cast<std::size_t>(i * 64 + b)];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-9);
    }
}

TEST(PpoInit, InitialValuesBounded) {
  const auto p = init_policy<float>(11, 772);
  RandomStream rng(12);
  for (int k = 0; k < 1000; ++k) {
    const auto x = unit_input(rng, 772);
    EXPECT_LT(std::abs(p.value.forward(x)[0]), 10.0f);
  }
}

TEST(PpoAct, SoftmaxNormalizes) {
  const auto p = init_policy<float>(2, 772);
  RandomStream rng(5);
  for (int k = 0; k < 100; ++k) {
    const auto x = unit_input(rng, 772);
    const auto logp = log_softmax<float>(p.policy.forward(x));
    double sum = 0.0;
    for (double lp : logp) sum += std::exp(lp);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  const std::vector<double> big{1000.0, 999.0, -1000.0};
  const auto lp = log_softmax<double>(big);
  EXPECT_NEAR(std::exp(lp[0]) + std::exp(lp[1]) + std::exp(lp[2]), 1.0, 1e-12);
}

TEST(PpoAct, DeterministicIsArgmaxAndLogProbMatches) {
  const auto p = init_policy<float>(4, 772);
  RandomStream rng(6), act_rng(7);
  for (int k = 0; k < 200; ++k) {
    const auto x = unit_input(rng, 772);
    const auto logits = p.policy.forward(x);
    const auto logp = log_softmax<float>(logits);
    const ActResult det = act<float>(p, x, act_rng, true);
    const auto argmax = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    EXPECT_EQ(static_cast<std::size_t>(det.action), argmax);
    const ActResult sto = act<float>(p, x, act_rng, false);
    EXPECT_DOUBLE_EQ(sto.log_prob, logp[static_cast<std::size_t>(sto.action)]);
    EXPECT_FLOAT_EQ(static_cast<float>(sto.value), p.value.forward(x)[0]);
  }
}

TEST(PpoAct, SamplingFollowsSoftmax) {
  auto p = init_policy<double>(9, 4);
  // Force known logits through the output bias.
  auto& last = p.policy.layers.back();
  std::fill(last.weight.begin(), last.weight.end(), 0.0);
  last.bias = {0.0, 1.0, 2.0, 0.0, -1.0, 0.5};
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  const auto logp = log_softmax<double>(last.bias);
  RandomStream rng(10);
  std::array<int, 6> counts{};
  const int n = 60000;
  for (int k = 0; k < n; ++k) ++counts[static_cast<std::size_t>(act<double>(p, x, rng, false).action)];
  for (std::size_t a = 0; a < 6; ++a) EXPECT_NEAR(counts[a] / static_cast<double>(n), std::exp(logp[a]), 0.01);
}

TEST(PpoAct, WrongLengthAndNanRejected) {
  auto p = init_policy<float>(1, 8);
  RandomStream rng(1);
  const std::vector<float> short_obs(7, 0.0f);
  EXPECT_THROW(act<float>(p, short_obs, rng, false), ContractViolation);
  p.policy.layers.back().bias[0] = NAN;
  const std::vector<float> x(8, 0.5f);
  EXPECT_THROW(act<float>(p, x, rng, false), NumericFault);
}

TEST(PpoLoss, GradientMatchesFiniteDifferences) {
  const std::array<int, 2> hidden{8, 8};
  auto p = init_policy<double>(21, 6, hidden);
  RandomStream rng(22);
  const auto batch = random_batch(rng, 6, 16, p);
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  PpoHparams hp;
  PolicyGrad<double> grad{p.policy.zeros_like(), p.value.zeros_like()};
  ppo_loss(p, batch, idx, hp, &grad);

  std::vector<double*> params;
  std::vector<double> analytic;
  p.policy.for_each_param([&](double& w) { params.push_back(&w); });
  p.value.for_each_param([&](double& w) { params.push_back(&w); });
  grad.policy.for_each_param([&](double g) { analytic.push_back(g); });
  grad.value.for_each_param([&](double g) { analytic.push_back(g); });
  ASSERT_EQ(params.size(), analytic.size());

  RandomStream pick(23);
  int checked = 0;
  for (int k = 0; k < 100; ++k) {
    const auto j = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(params.size() - 1)));
    const double h = 1e-6, w0 = *params[j];
    *params[j] = w0 + h;
    const double up = ppo_loss<double>(p, batch, idx, hp, nullptr).total;
    *params[j] = w0 - h;
    const double down = ppo_loss<double>(p, batch, idx, hp, nullptr).total;
    *params[j] = w0;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - analytic[j]) / std::max({std::abs(fd), std::abs(analytic[j]), 1e-8});
    if (std::abs(fd) < 1e-9 && std::abs(analytic[j]) < 1e-9) continue;
    EXPECT_LT(rel, 1e-4) << "param " << j << " fd " << fd << " analytic " << analytic[j];
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(PpoUpdate, ZeroAdvantageZeroEntropyLeavesPolicyUnchanged) {
  auto learner = PpoLearner<float>{init_policy<float>(31, 6), {}};
  const auto before = learner.params.policy;
  RandomStream rng(32);
  auto pd = init_policy<double>(31, 6);
  auto b = random_batch(rng, 6, 64, pd);
  PpoBatch<float> batch;
  batch.obs_dim = 6;
  batch.obs.assign(b.obs.begin(), b.obs.end());
  batch.actions = b.actions;
  batch.old_log_probs = b.old_log_probs;
  batch.advantages.assign(64, 0.0);
  batch.returns = b.returns;
  PpoHparams hp;
  hp.entropy_coef = 0.0;
  hp.minibatch = 16;
  hp.kl_guard = 1e9;
  ppo_update(learner, batch, hp, rng);
  EXPECT_EQ(learner.params.policy, before);
}

TEST(PpoUpdate, StatsDeterministicPerSeed) {
  auto run = [] {
    auto learner = PpoLearner<float>{init_policy<float>(41, 6), {}};
    RandomStream data(42);
    auto pd = init_policy<double>(41, 6);
    auto b = random_batch(data, 6, 128, pd);
    PpoBatch<float> batch{6, {b.obs.begin(), b.obs.end()}, b.actions, b.old_log_probs, b.advantages, b.returns};
    PpoHparams hp;
    hp.minibatch = 32;
    RandomStream rng(43);
    const auto stats = ppo_update(learner, batch, hp, rng);
    return std::pair{stats, learner.params};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(PpoUpdate, LearnsContextualBandit) {
  // Four one-hot contexts; the rewarded action is context + 1.
  auto learner = PpoLearner<float>{init_policy<float>(51, 4), {}};
  RandomStream rng(52);
  PpoHparams hp;
  hp.minibatch = 64;
  hp.epochs = 4;
  GaeConfig gae;
  for (int iter = 0; iter < 40; ++iter) {
    PpoBatch<float> batch;
    batch.obs_dim = 4;
    std::vector<double> rewards, values;
    std::vector<bool> term_vec;
    for (int s = 0; s < 256; ++s) {
      const int ctx = static_cast<int>(rng.uniform_int(0, 3));
      std::vector<float> x(4, 0.0f);
      x[static_cast<std::size_t>(ctx)] = 1.0f;
      const ActResult r = act<float>(learner.params, x, rng, false);
      batch.obs.insert(batch.obs.end(), x.begin(), x.end());
      batch.actions.push_back(static_cast<int>(r.action));
      batch.old_log_probs.push_back(r.log_prob);
      rewards.push_back(static_cast<int>(r.action) == ctx + 1 ? 1.0 : 0.0);
      values.push_back(r.value);
    }
    std::unique_ptr<bool[]> term(new bool[256]);
    std::fill(term.get(), term.get() + 256, true);
    compute_batch_targets<float>(batch, rewards, values, std::span<const bool>(term.get(), 256), 0.0, gae);
    ppo_update(learner, batch, hp, rng);
  }
  RandomStream eval(53);
  for (int ctx = 0; ctx < 4; ++ctx) {
    std::vector<float> x(4, 0.0f);
    x[static_cast<std::size_t>(ctx)] = 1.0f;
    EXPECT_EQ(static_cast<int>(act<float>(learner.params, x, eval, true).action), ctx + 1);
  }
}

TEST(PpoHparams, Validation) {
  PpoHparams hp;
  EXPECT_NO_THROW(hp.validate());
  hp.rollout_len = 100;
  hp.minibatch = 64;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.clip_eps = 0.0;
  EXPECT_THROW(hp.validate(), ConfigError);
}
