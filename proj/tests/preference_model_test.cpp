#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gradient_cases.hpp"
#include "ratecraft/preference_model.hpp"

using namespace ratecraft;

namespace {

// Net whose per-step reward is exactly the output bias.
RewardNet bias_net(double c) {
  RewardNetConfig cfg;
  cfg.hidden = {2};
  RewardNet net(1, 1, cfg);
  net.mlp().params().setZero();
  net.mlp().bias(1)[0] = c;
  return net;
}

// Net whose per-step reward is w * tanh(state[0]).
RewardNet tanh_net(double w) {
  RewardNetConfig cfg;
  cfg.hidden = {1};
  RewardNet net(1, 1, cfg);
  net.mlp().params().setZero();
  net.mlp().weight(0)(0, 0) = 1.0;
  net.mlp().weight(1)(0, 0) = w;
  return net;
}

SegmentPtr flat_segment(SegmentId id, double state, std::size_t length = 2) {
  auto s = std::make_shared<Segment>();
  s->id = id;
  for (std::size_t t = 0; t < length; ++t) {
    s->states.push_back({state});
    s->actions.push_back({0.0});
  }
  return s;
}

}  // namespace

TEST(PreferenceProbability, Examples) {
  EXPECT_DOUBLE_EQ(preference_probability(2.0, 2.0), 0.5);
  EXPECT_NEAR(preference_probability(std::log(3.0), 0.0), 0.75, 1e-15);
  EXPECT_GE(preference_probability(1000.0, 0.0), 1.0 - 1e-12);
  EXPECT_LE(preference_probability(0.0, 1000.0), 1e-12);
  EXPECT_TRUE(std::isfinite(preference_probability(-1e308, 1e308)));
}

TEST(PreferenceProbability, AntisymmetryAndShiftInvariance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 20.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = g(rng), y = g(rng), c = g(rng);
    ASSERT_NEAR(preference_probability(x, y) + preference_probability(y, x), 1.0, 1e-12);
    ASSERT_NEAR(preference_probability(x + c, y + c), preference_probability(x, y), 1e-12);
    const double p = preference_probability(x, y);
    ASSERT_GE(p, 0.0);
    ASSERT_LE(p, 1.0);
  }
}

TEST(PreferenceLoss, EqualReturnsGiveLogTwo) {
  PreferenceBatch batch{{flat_segment(1, 0.3), flat_segment(2, -0.4), Side::first}};
  EXPECT_NEAR(preference_loss(batch, bias_net(0.8)), std::log(2.0), 1e-15);
}

TEST(PreferenceLoss, PreferredHigherReturnBeatsLogTwo) {
  auto net = tanh_net(1.0);
  PreferenceBatch batch{{flat_segment(1, 0.9), flat_segment(2, -0.4), Side::first}};
  EXPECT_LT(preference_loss(batch, net), std::log(2.0));
  batch[0].preferred = Side::second;
  EXPECT_GT(preference_loss(batch, net), std::log(2.0));
}

TEST(PreferenceLoss, BatchIsSumOfPairs) {
  auto net = tanh_net(1.5);
  PreferenceBatch batch{{flat_segment(1, 0.9), flat_segment(2, -0.4), Side::first},
                        {flat_segment(3, 0.1), flat_segment(4, 0.2), Side::second},
                        {flat_segment(5, -2.0), flat_segment(6, 1.0), Side::first},
                        {flat_segment(7, 0.0), flat_segment(8, 0.5), Side::first}};
  double expected = 0.0;
  for (const auto& p : batch) {
    const double ra = 2.0 * 1.5 * std::tanh(p.a->states[0][0]);
    const double rb = 2.0 * 1.5 * std::tanh(p.b->states[0][0]);
    const double pa = std::exp(ra) / (std::exp(ra) + std::exp(rb));
    expected -= std::log(p.preferred == Side::first ? pa : 1.0 - pa);
  }
  EXPECT_NEAR(preference_loss(batch, net), expected, 1e-12);
  VectorXd grad;
  EXPECT_NEAR(preference_loss_gradient(batch, net, 1.0, grad), expected, 1e-12);
}

TEST(PreferenceLoss, StableForLargeReturnGaps) {
  auto net = bias_net(0.0);
  net.mlp().weight(0)(0, 0) = 1.0;
  net.mlp().weight(1)(0, 0) = 1e4;
  PreferenceBatch batch{{flat_segment(1, 5.0), flat_segment(2, -5.0), Side::second}};
  const double loss = preference_loss(batch, net);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 1e4);
}

TEST(PreferenceLoss, RejectsIdenticalPair) {
  auto s = flat_segment(1, 0.0);
  PreferenceBatch batch{{s, s, Side::first}};
  EXPECT_THROW(preference_loss(batch, bias_net(0.0)), std::invalid_argument);
  VectorXd grad;
  EXPECT_THROW(preference_loss_gradient(batch, bias_net(0.0), 1.0, grad), std::invalid_argument);
}

TEST(PreferenceLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    auto rep = gradient_cases::preference_case(seed, 4);
    EXPECT_LT(rep.max_relative_error, 1e-4) << "seed " << seed;
  }
}
