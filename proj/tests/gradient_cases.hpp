#pragma once

// Randomized gradient-check instances shared by the unit and acceptance
// suites. Losses here are recomputed step by step from the parameter vector,
// independent of the batched forward pass used in training.

#include <random>
#include <vector>

#include "oracles.hpp"
#include "ratecraft/preference_model.hpp"
#include "ratecraft/reward_learning.hpp"

namespace gradient_cases {

using namespace ratecraft;

inline std::vector<SegmentPtr> random_segments(std::mt19937_64& rng, std::size_t count, std::size_t length,
                                               int state_dim, int action_dim, SegmentId first_id = 0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<SegmentPtr> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto s = std::make_shared<Segment>();
    s->id = first_id + i;
    for (std::size_t t = 0; t < length; ++t) {
      Vec st(static_cast<std::size_t>(state_dim)), ac(static_cast<std::size_t>(action_dim));
      for (auto& v : st) v = g(rng);
      for (auto& v : ac) v = g(rng);
      s->states.push_back(st);
      s->actions.push_back(ac);
    }
    out.push_back(s);
  }
  return out;
}

inline RewardNet random_net(std::mt19937_64& rng, int state_dim, int action_dim) {
  RewardNetConfig cfg;
  cfg.hidden = {3 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 5)};
  cfg.seed = rng();
  RewardNet net(state_dim, action_dim, cfg);
  std::normal_distribution<double> g(0.0, 0.1);
  for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(net.mlp().num_layers()); ++l)
    for (auto& b : net.mlp().bias(static_cast<std::size_t>(l))) b = g(rng);
  return net;
}

/// Step-by-step discounted return with the net's parameters replaced by `p`.
inline double oracle_return(RewardNet net, const Eigen::VectorXd& p, const Segment& s, double gamma) {
  net.mlp().params() = p;
  double total = 0.0;
  double w = 1.0;
  for (std::size_t t = 0; t < s.length(); ++t) {
    total += w * net.predict(s.states[t], s.actions[t]);
    w *= gamma;
  }
  return total;
}

/// Rating cross-entropy with the frame fixed at the starting parameters.
inline oracle::GradientReport rating_case(std::uint64_t seed, std::size_t batch = 8) {
  std::mt19937_64 rng(seed);
  const int sd = 1 + static_cast<int>(rng() % 3);
  const int ad = 1 + static_cast<int>(rng() % 2);
  const std::size_t length = 2 + rng() % 4;
  const double gamma = rng() % 2 ? 1.0 : 0.9;
  const int n = 2 + static_cast<int>(rng() % 4);
  RewardNet net = random_net(rng, sd, ad);
  auto segs = random_segments(rng, batch, length, sd, ad);
  RatedDataset data(n, length);
  std::vector<int> classes;
  for (const auto& s : segs) {
    classes.push_back(static_cast<int>(rng() % static_cast<unsigned>(n)));
    data.append(s, {s->id, classes.back(), LabelSource::synthetic, 0});
  }
  const RatingFrame frame = fit_rating_frame(net, data, gamma);
  const NoiseSharpness k(5.0 + 25.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  Eigen::VectorXd grad;
  rating_loss_gradient(net, segs, classes, frame, k, gamma, grad);
  auto f = [&](const Eigen::VectorXd& p) {
    std::vector<RatedReturn> items;
    for (std::size_t i = 0; i < segs.size(); ++i)
      items.push_back({frame.ctx.affine(oracle_return(net, p, *segs[i], gamma)), classes[i]});
    return rating_loss(items, frame.boundaries, k);
  };
  return oracle::compare_gradient(f, net.mlp().params(), grad, oracle::all_indices(net.mlp().num_params()));
}

/// Bradley-Terry loss over random pairs.
inline oracle::GradientReport preference_case(std::uint64_t seed, std::size_t pairs = 8) {
  std::mt19937_64 rng(seed);
  const int sd = 1 + static_cast<int>(rng() % 3);
  const int ad = 1 + static_cast<int>(rng() % 2);
  const std::size_t length = 2 + rng() % 4;
  const double gamma = rng() % 2 ? 1.0 : 0.9;
  RewardNet net = random_net(rng, sd, ad);
  auto segs = random_segments(rng, 2 * pairs, length, sd, ad);
  PreferenceBatch batch;
  for (std::size_t i = 0; i < pairs; ++i)
    batch.push_back({segs[2 * i], segs[2 * i + 1], rng() % 2 ? Side::first : Side::second});
  Eigen::VectorXd grad;
  preference_loss_gradient(batch, net, gamma, grad);
  auto f = [&](const Eigen::VectorXd& p) {
    double loss = 0.0;
    for (const auto& pr : batch) {
      const double ra = oracle_return(net, p, *pr.a, gamma);
      const double rb = oracle_return(net, p, *pr.b, gamma);
      const double pa = 1.0 / (1.0 + std::exp(rb - ra));
      loss -= std::log(pr.preferred == Side::first ? pa : 1.0 - pa);
    }
    return loss;
  };
  return oracle::compare_gradient(f, net.mlp().params(), grad, oracle::all_indices(net.mlp().num_params()));
}

}  // namespace gradient_cases
