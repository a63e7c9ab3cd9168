#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ratecraft/policy.hpp"

using namespace ratecraft;

TEST(Policy, LogStdIsClampedAndActionsStayInBounds) {
  PolicyConfig cfg;
  Policy p(2, 1, cfg, 1);
  p.log_std()[0] = 5.0;
  EXPECT_EQ(p.clamped_log_std()[0], cfg.log_std_max);
  p.log_std()[0] = -9.0;
  EXPECT_EQ(p.clamped_log_std()[0], cfg.log_std_min);
  p.log_std()[0] = cfg.log_std_max;
  LineWalker env;
  env.reset(0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto tr = env.step(p.sample({0.0, 0.0}, rng));
    ASSERT_LE(std::abs(tr.action[0]), 1.0);
  }
}

TEST(Policy, FlatRoundTrip) {
  Policy p(3, 2, PolicyConfig{}, 4);
  VectorXd f = p.flat();
  f.array() += 0.5;
  Policy q = p;
  q.set_flat(f);
  EXPECT_EQ(q.flat(), f);
  EXPECT_FALSE(p == q);
}

TEST(PolicyTrainer, ZeroRewardWithoutEntropyLeavesParametersUnchanged) {
  LineWalker env;
  PolicyConfig cfg;
  cfg.entropy_coef = 0.0;
  PolicyTrainer trainer(env.spec(), cfg, 5);
  const VectorXd before = trainer.policy().flat();
  const VectorXd value_before = trainer.value_net().params();
  for (int i = 0; i < 5; ++i) trainer.update(trainer.collect(env, 500), zero_reward());
  EXPECT_EQ(trainer.policy().flat(), before);
  EXPECT_EQ(trainer.value_net().params(), value_before);
}

TEST(PolicyTrainer, ZeroRewardWithEntropyOnlyMovesLogStd) {
  LineWalker env;
  PolicyConfig cfg;
  PolicyTrainer trainer(env.spec(), cfg, 5);
  const Policy before = trainer.policy();
  for (int i = 0; i < 5; ++i) trainer.update(trainer.collect(env, 500), zero_reward());
  EXPECT_EQ(trainer.policy().mean_net().params(), before.mean_net().params());
  EXPECT_GT(trainer.policy().log_std()[0], before.log_std()[0]);
}

TEST(PolicyTrainer, NeverReadsEnvironmentReward) {
  LineWalker env_a, env_b;
  PolicyConfig cfg;
  PolicyTrainer clean(env_a.spec(), cfg, 6), poisoned(env_b.spec(), cfg, 6);
  RewardFn velocity = [](const MatrixXd& x) { VectorXd r = x.row(1).transpose() + 0.1 * x.row(2).transpose(); return r; };
  for (int i = 0; i < 10; ++i) {
    Rollout a = clean.collect(env_a, 500);
    Rollout b = poisoned.collect(env_b, 500);
    std::fill(b.env_rewards.begin(), b.env_rewards.end(), std::numeric_limits<double>::quiet_NaN());
    clean.update(a, velocity);
    auto stats = poisoned.update(b, velocity);
    ASSERT_FALSE(stats.skipped);
  }
  EXPECT_EQ(clean.policy().flat(), poisoned.policy().flat());
  EXPECT_EQ(clean.value_net().params(), poisoned.value_net().params());
  EXPECT_TRUE(poisoned.policy().flat().allFinite());
}

TEST(PolicyTrainer, NonFiniteAdvantageSkipsTheStep) {
  LineWalker env;
  PolicyTrainer trainer(env.spec(), PolicyConfig{}, 7);
  const VectorXd before = trainer.policy().flat();
  RewardFn bad = [](const MatrixXd& x) {
    VectorXd r = VectorXd::Zero(x.cols());
    r[3] = std::numeric_limits<double>::quiet_NaN();
    return r;
  };
  auto stats = trainer.update(trainer.collect(env, 100), bad);
  EXPECT_TRUE(stats.skipped);
  EXPECT_EQ(trainer.skipped_updates(), 1u);
  EXPECT_EQ(trainer.policy().flat(), before);
}

TEST(PolicyTrainer, RewardSourceCalledOncePerUpdate) {
  LineWalker env;
  PolicyTrainer trainer(env.spec(), PolicyConfig{}, 8);
  int calls = 0;
  RewardFn counting = [&calls](const MatrixXd& x) {
    ++calls;
    return VectorXd::Ones(x.cols());
  };
  trainer.update(trainer.collect(env, 200), counting);
  EXPECT_EQ(calls, 1);
}

TEST(PolicyTrainer, BanditMeanConvergesToTarget) {
  TargetBandit env(0.3);
  PolicyConfig cfg;
  cfg.rollout_steps = 64;
  auto result = train_policy(env, ground_truth_reward_fn(env), 20000, cfg, 1);
  EXPECT_NEAR(result.policy.mean_action({0.0})[0], 0.3, 0.05);
}

TEST(PolicyTrainer, DeterministicCurve) {
  LineWalker env;
  PolicyConfig cfg;
  auto a = train_policy(env, ground_truth_reward_fn(env), 5000, cfg, 11);
  auto b = train_policy(env, ground_truth_reward_fn(env), 5000, cfg, 11);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].mean_learned_return, b.curve[i].mean_learned_return);
  EXPECT_EQ(a.policy.flat(), b.policy.flat());
}

TEST(PolicyTrainer, LineWalkerOracleReachesHighVelocity) {
  LineWalker env;
  auto result = train_policy(env, ground_truth_reward_fn(env), 50000, PolicyConfig{}, 3);
  auto ev = evaluate_policy(env, result.policy, 10, 99);
  const double mean_velocity = ev.mean / env.spec().episode_length;
  EXPECT_GT(mean_velocity, 0.8 * env.config().v_max);
}

TEST(Evaluate, RandomMazePolicyIsNegativeAndReproducible) {
  PointMaze2D env;
  Policy p(4, 2, PolicyConfig{}, 2);
  auto a = evaluate_policy(env, p, 3, 5);
  EXPECT_LT(a.mean, 0.0);
  EXPECT_EQ(evaluate_policy(env, p, 1, 5).returns[0], a.returns[0]);
  EXPECT_THROW(evaluate_policy(env, p, 0, 5), std::invalid_argument);
}
