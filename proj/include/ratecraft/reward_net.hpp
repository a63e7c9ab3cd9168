#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlp.hpp"
#include "segment.hpp"

namespace ratecraft {

struct RewardNetConfig {
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;
  double output_scale = 1.0;
};

/// Learned state-action reward r(s, a): an Mlp over the concatenated
/// (state, action) vector with a scalar output.
class RewardNet {
 public:
  RewardNet() = default;

  RewardNet(int state_dim, int action_dim, const RewardNetConfig& config = {})
      : state_dim_(state_dim), action_dim_(action_dim), seed_(config.seed) {
    if (state_dim < 1 || action_dim < 1) throw ShapeError("reward net needs positive state and action dims");
    std::vector<int> sizes{state_dim + action_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(1);
    mlp_ = Mlp(sizes, config.seed, config.output_scale);
  }

  RewardNet(int state_dim, int action_dim, Mlp mlp)
      : state_dim_(state_dim), action_dim_(action_dim), mlp_(std::move(mlp)) {
    if (mlp_.input_size() != state_dim + action_dim || mlp_.output_size() != 1)
      throw ShapeError("mlp shape does not fit a reward net");
  }

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  std::uint64_t seed() const { return seed_; }
  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }

  /// Column t holds (s_t, a_t).
  MatrixXd inputs(const Segment& segment) const {
    segment.validate();
    MatrixXd x(state_dim_ + action_dim_, static_cast<Eigen::Index>(segment.length()));
    for (std::size_t t = 0; t < segment.length(); ++t) fill_column(x, static_cast<Eigen::Index>(t), segment.states[t], segment.actions[t]);
    return x;
  }

  MatrixXd inputs(const Vec& state, const Vec& action) const {
    MatrixXd x(state_dim_ + action_dim_, 1);
    fill_column(x, 0, state, action);
    return x;
  }

  double predict(const Vec& state, const Vec& action) const { return mlp_.forward(inputs(state, action))(0, 0); }

  /// Per-step predictions for a batch of columns.
  VectorXd predict_columns(const MatrixXd& x) const { return mlp_.forward(x).row(0).transpose(); }

  friend bool operator==(const RewardNet& a, const RewardNet& b) {
    return a.state_dim_ == b.state_dim_ && a.action_dim_ == b.action_dim_ && a.mlp_ == b.mlp_;
  }

 private:
  void fill_column(MatrixXd& x, Eigen::Index col, const Vec& state, const Vec& action) const {
    if (static_cast<int>(state.size()) != state_dim_ || static_cast<int>(action.size()) != action_dim_)
      throw ShapeError("state/action dims (" + std::to_string(state.size()) + ", " + std::to_string(action.size()) +
                       ") do not match reward net (" + std::to_string(state_dim_) + ", " +
                       std::to_string(action_dim_) + ")");
    for (int i = 0; i < state_dim_; ++i) x(i, col) = state[i];
    for (int i = 0; i < action_dim_; ++i) x(state_dim_ + i, col) = action[i];
  }

  int state_dim_ = 0;
  int action_dim_ = 0;
  std::uint64_t seed_ = 0;
  Mlp mlp_;
};

inline double predict_reward(const RewardNet& net, const Vec& state, const Vec& action) {
  return net.predict(state, action);
}

/// gamma^0 .. gamma^(length-1).
inline VectorXd discount_weights(std::size_t length, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("discount must lie in (0, 1]");
  VectorXd w(static_cast<Eigen::Index>(length));
  double g = 1.0;
  for (Eigen::Index t = 0; t < w.size(); ++t, g *= gamma) w[t] = g;
  return w;
}

inline double segment_return(const RewardNet& net, const Segment& segment, double gamma) {
  if (segment.length() == 0) throw std::invalid_argument("segment_return of an empty segment");
  return net.predict_columns(net.inputs(segment)).dot(discount_weights(segment.length(), gamma));
}

/// Returns of several equal-length segments whose input columns are laid out
/// back to back in `x` (one forward pass).
inline VectorXd packed_returns(const RewardNet& net, const MatrixXd& x, std::size_t length, double gamma) {
  const auto count = x.cols() / static_cast<Eigen::Index>(length);
  VectorXd r = net.predict_columns(x);
  VectorXd w = discount_weights(length, gamma);
  return Eigen::Map<const MatrixXd>(r.data(), static_cast<Eigen::Index>(length), count).transpose() * w;
}

/// Value of a loss over segment returns and its derivative with respect to
/// each return. `terms` holds the per-element contributions.
struct ReturnLoss {
  double loss = 0.0;
  VectorXd d_returns;
  std::vector<double> terms;
};

using ReturnLossFn = std::function<ReturnLoss(const VectorXd& returns)>;

class NonFiniteLoss : public std::domain_error {
 public:
  NonFiniteLoss(std::size_t element, const std::string& what)
      : std::domain_error(what), element_(element) {}
  std::size_t element() const { return element_; }

 private:
  std::size_t element_;
};

inline MatrixXd pack_inputs(const RewardNet& net, std::span<const SegmentPtr> segments) {
  if (segments.empty()) throw std::invalid_argument("empty segment batch");
  const auto length = static_cast<Eigen::Index>(segments.front()->length());
  MatrixXd x(net.state_dim() + net.action_dim(), length * static_cast<Eigen::Index>(segments.size()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (static_cast<Eigen::Index>(segments[i]->length()) != length)
      throw std::invalid_argument("segments in a batch must share one length");
    x.middleCols(static_cast<Eigen::Index>(i) * length, length) = net.inputs(*segments[i]);
  }
  return x;
}

/// Reverse-mode gradient of `loss_fn(returns)` with respect to the net's
/// parameters, where returns are the discounted sums over the packed
/// segments in `x`. Gradient is written to `grad` (overwritten).
inline double return_loss_gradient(const RewardNet& net, const MatrixXd& x, std::size_t length, double gamma,
                                   const ReturnLossFn& loss_fn, VectorXd& grad) {
  Mlp::Tape tape;
  VectorXd per_step = net.mlp().forward(x, tape).row(0).transpose();
  const auto count = x.cols() / static_cast<Eigen::Index>(length);
  VectorXd w = discount_weights(length, gamma);
  VectorXd returns = Eigen::Map<const MatrixXd>(per_step.data(), static_cast<Eigen::Index>(length), count).transpose() * w;
  ReturnLoss l = loss_fn(returns);
  if (!std::isfinite(l.loss)) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < l.terms.size(); ++i)
      if (!std::isfinite(l.terms[i])) {
        bad = i;
        break;
      }
    throw NonFiniteLoss(bad, "non-finite loss at batch element " + std::to_string(bad));
  }
  if (l.d_returns.size() != count) throw ShapeError("loss gradient does not match batch size");
  // d loss / d step_output(t of segment i) = d_returns[i] * gamma^t
  MatrixXd grad_out = (w * l.d_returns.transpose()).reshaped(1, x.cols());
  grad = VectorXd::Zero(net.mlp().num_params());
  net.mlp().backward(tape, grad_out, grad);
  return l.loss;
}

inline double return_loss_gradient(const RewardNet& net, std::span<const SegmentPtr> segments, double gamma,
                                   const ReturnLossFn& loss_fn, VectorXd& grad) {
  return return_loss_gradient(net, pack_inputs(net, segments), segments.front()->length(), gamma, loss_fn, grad);
}

class RewardEnsemble {
 public:
  RewardEnsemble() = default;

  RewardEnsemble(int state_dim, int action_dim, int members, const RewardNetConfig& config) {
    if (members < 1) throw std::invalid_argument("ensemble needs at least one member");
    for (int i = 0; i < members; ++i) {
      RewardNetConfig c = config;
      c.seed = config.seed + static_cast<std::uint64_t>(i) * 7919u;
      members_.emplace_back(state_dim, action_dim, c);
    }
  }

  explicit RewardEnsemble(std::vector<RewardNet> members) : members_(std::move(members)) {
    if (members_.empty()) throw std::invalid_argument("ensemble needs at least one member");
    for (const auto& m : members_)
      if (m.mlp().sizes() != members_.front().mlp().sizes() || m.state_dim() != members_.front().state_dim())
        throw ShapeError("ensemble members must share an architecture");
  }

  std::size_t size() const { return members_.size(); }
  const RewardNet& operator[](std::size_t i) const { return members_[i]; }
  RewardNet& operator[](std::size_t i) { return members_[i]; }
  const std::vector<RewardNet>& members() const { return members_; }
  std::vector<RewardNet>& members() { return members_; }

 private:
  std::vector<RewardNet> members_;
};

inline VectorXd ensemble_returns(const RewardEnsemble& ensemble, const Segment& segment, double gamma) {
  VectorXd out(static_cast<Eigen::Index>(ensemble.size()));
  for (std::size_t i = 0; i < ensemble.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = segment_return(ensemble[i], segment, gamma);
  return out;
}

}  // namespace ratecraft
