#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "reward_net.hpp"
#include "segment.hpp"

namespace ratecraft {

/// Bradley-Terry probability that segment a is preferred, computed as the
/// logistic of the return difference.
inline double preference_probability(double return_a, double return_b) {
  const double d = return_a - return_b;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

/// -log sigmoid(d), stable for large |d|.
inline double log1p_exp_neg(double d) { return d >= 0.0 ? std::log1p(std::exp(-d)) : -d + std::log1p(std::exp(d)); }

struct PreferencePair {
  SegmentPtr a;
  SegmentPtr b;
  Side preferred = Side::first;
};

using PreferenceBatch = std::vector<PreferencePair>;

/// Loss over returns laid out as [R_a0, R_b0, R_a1, R_b1, ...].
inline ReturnLossFn preference_return_loss(std::vector<Side> preferred) {
  return [preferred = std::move(preferred)](const VectorXd& returns) {
    ReturnLoss out;
    out.d_returns = VectorXd::Zero(returns.size());
    out.terms.resize(preferred.size());
    for (std::size_t i = 0; i < preferred.size(); ++i) {
      const auto ia = static_cast<Eigen::Index>(2 * i);
      const double sign = preferred[i] == Side::first ? 1.0 : -1.0;
      const double d = sign * (returns[ia] - returns[ia + 1]);
      out.terms[i] = log1p_exp_neg(d);
      out.loss += out.terms[i];
      // d/dd of -log sigmoid(d) = -(1 - sigmoid(d))
      const double g = -(1.0 - preference_probability(d, 0.0));
      out.d_returns[ia] += sign * g;
      out.d_returns[ia + 1] -= sign * g;
    }
    return out;
  };
}

inline std::vector<SegmentPtr> flatten_pairs(const PreferenceBatch& batch) {
  std::vector<SegmentPtr> segs;
  segs.reserve(2 * batch.size());
  for (const auto& p : batch) {
    if (p.a->id == p.b->id) throw std::invalid_argument("preference pair must reference distinct segments");
    segs.push_back(p.a);
    segs.push_back(p.b);
  }
  return segs;
}

inline double preference_loss(const PreferenceBatch& batch, const RewardNet& net, double gamma = 1.0) {
  double loss = 0.0;
  for (const auto& p : batch) {
    if (p.a->id == p.b->id) throw std::invalid_argument("preference pair must reference distinct segments");
    const double ra = segment_return(net, *p.a, gamma);
    const double rb = segment_return(net, *p.b, gamma);
    loss += log1p_exp_neg(p.preferred == Side::first ? ra - rb : rb - ra);
  }
  return loss;
}

inline double preference_loss_gradient(const PreferenceBatch& batch, const RewardNet& net, double gamma,
                                       VectorXd& grad) {
  std::vector<Side> sides;
  for (const auto& p : batch) sides.push_back(p.preferred);
  auto segs = flatten_pairs(batch);
  return return_loss_gradient(net, std::span<const SegmentPtr>(segs), gamma, preference_return_loss(sides), grad);
}

}  // namespace ratecraft
