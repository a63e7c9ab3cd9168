#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "envs.hpp"
#include "mlp.hpp"

namespace ratecraft {

/// Batched reward source: column j of `x` is (s_j; a_j).
using RewardFn = std::function<VectorXd(const MatrixXd& x)>;

inline RewardFn zero_reward() {
  return [](const MatrixXd& x) { return VectorXd::Zero(x.cols()); };
}

/// Ground-truth reward of `env` as a RewardFn, for the oracle policy.
inline RewardFn ground_truth_reward_fn(const Env& env) {
  const int sd = env.spec().state_dim;
  const int ad = env.spec().action_dim;
  return [&env, sd, ad](const MatrixXd& x) {
    VectorXd r(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Vec s(x.col(j).data(), x.col(j).data() + sd);
      Vec a(x.col(j).data() + sd, x.col(j).data() + sd + ad);
      r[j] = env.ground_truth_reward(s, a);
    }
    return r;
  };
}

struct PolicyConfig {
  std::vector<int> hidden = {32, 32};
  double log_std_init = -0.5;
  double log_std_min = -3.0;
  double log_std_max = 0.5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double entropy_coef = 1e-3;
  double actor_lr = 1e-3;
  double critic_lr = 3e-3;
  int critic_iters = 5;
  std::size_t rollout_steps = 500;
};

/// Gaussian policy: mean from an Mlp, state-independent log standard
/// deviation.
class Policy {
 public:
  Policy() = default;

  Policy(int state_dim, int action_dim, const PolicyConfig& config, std::uint64_t seed)
      : log_std_min_(config.log_std_min), log_std_max_(config.log_std_max) {
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(action_dim);
    mean_ = Mlp(sizes, seed);
    mean_.zero_output_layer();
    log_std_ = VectorXd::Constant(action_dim, config.log_std_init);
  }

  int state_dim() const { return mean_.input_size(); }
  int action_dim() const { return mean_.output_size(); }
  const Mlp& mean_net() const { return mean_; }
  Mlp& mean_net() { return mean_; }
  const VectorXd& log_std() const { return log_std_; }
  VectorXd& log_std() { return log_std_; }

  VectorXd clamped_log_std() const { return log_std_.cwiseMax(log_std_min_).cwiseMin(log_std_max_); }

  Vec mean_action(const Vec& state) const {
    MatrixXd x = Eigen::Map<const VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
    MatrixXd mu = mean_.forward(x);
    return {mu.data(), mu.data() + mu.size()};
  }

  Vec sample(const Vec& state, std::mt19937_64& rng) const {
    Vec a = mean_action(state);
    VectorXd ls = clamped_log_std();
    std::normal_distribution<double> n01;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += std::exp(ls[static_cast<Eigen::Index>(i)]) * n01(rng);
    return a;
  }

  /// Flat parameter vector [mean net params, log std].
  VectorXd flat() const {
    VectorXd p(mean_.num_params() + log_std_.size());
    p << mean_.params(), log_std_;
    return p;
  }

  void set_flat(const VectorXd& p) {
    mean_.params() = p.head(mean_.num_params());
    log_std_ = p.tail(log_std_.size());
  }

  friend bool operator==(const Policy& a, const Policy& b) { return a.mean_ == b.mean_ && a.log_std_ == b.log_std_; }

 private:
  Mlp mean_;
  VectorXd log_std_;
  double log_std_min_ = -3.0;
  double log_std_max_ = 0.5;
};

/// On-policy experience. env_rewards are kept for teachers and bookkeeping;
/// the policy update never reads them.
struct Rollout {
  MatrixXd states;       // state_dim x T
  MatrixXd actions;      // action_dim x T (as executed, after clamping)
  MatrixXd raw_actions;  // action_dim x T (as sampled)
  MatrixXd next_states;  // state_dim x T
  std::vector<bool> dones;
  std::vector<double> env_rewards;

  Eigen::Index size() const { return states.cols(); }

  MatrixXd reward_inputs() const {
    MatrixXd x(states.rows() + actions.rows(), states.cols());
    x << states, actions;
    return x;
  }
};

struct UpdateStats {
  double mean_learned_reward = 0.0;
  double mean_learned_return = 0.0;  // per completed episode in the batch
  bool skipped = false;
};

/// Advantage actor-critic with generalized advantage estimation.
class PolicyTrainer {
 public:
  PolicyTrainer(const EnvSpec& spec, PolicyConfig config, std::uint64_t seed)
      : spec_(spec), config_(config), policy_(spec.state_dim, spec.action_dim, config, seed),
        actor_opt_({config.actor_lr}), critic_opt_({config.critic_lr}), rng_(seed ^ 0x9e3779b97f4a7c15ull),
        episode_seed_(seed * 7777u) {
    std::vector<int> sizes{spec.state_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(1);
    value_ = Mlp(sizes, seed + 1);
    value_.zero_output_layer();
  }

  const Policy& policy() const { return policy_; }
  const Mlp& value_net() const { return value_; }
  const PolicyConfig& config() const { return config_; }
  std::uint64_t skipped_updates() const { return skipped_; }

  /// Steps `env` with the current stochastic policy. Episodes continue across
  /// calls.
  Rollout collect(Env& env, std::size_t steps) {
    Rollout r;
    r.states.resize(spec_.state_dim, static_cast<Eigen::Index>(steps));
    r.next_states.resize(spec_.state_dim, static_cast<Eigen::Index>(steps));
    r.actions.resize(spec_.action_dim, static_cast<Eigen::Index>(steps));
    r.raw_actions.resize(spec_.action_dim, static_cast<Eigen::Index>(steps));
    for (std::size_t t = 0; t < steps; ++t) {
      if (env.done() || state_.empty()) state_ = env.reset(episode_seed_++);
      Vec a = policy_.sample(state_, rng_);
      Transition tr = env.step(a);
      const auto c = static_cast<Eigen::Index>(t);
      r.states.col(c) = Eigen::Map<const VectorXd>(tr.state.data(), spec_.state_dim);
      r.next_states.col(c) = Eigen::Map<const VectorXd>(tr.next_state.data(), spec_.state_dim);
      r.actions.col(c) = Eigen::Map<const VectorXd>(tr.action.data(), spec_.action_dim);
      r.raw_actions.col(c) = Eigen::Map<const VectorXd>(a.data(), spec_.action_dim);
      r.dones.push_back(tr.done);
      r.env_rewards.push_back(tr.env_reward);
      state_ = tr.done ? Vec{} : tr.next_state;
    }
    return r;
  }

  /// One actor step and `critic_iters` critic steps on a rollout labeled by
  /// `reward`.
  UpdateStats update(const Rollout& r, const RewardFn& reward) {
    UpdateStats stats;
    const Eigen::Index T = r.size();
    if (T == 0) return stats;
    VectorXd rewards = reward(r.reward_inputs());
    stats.mean_learned_reward = rewards.mean();
    {
      double ep = 0.0, sum = 0.0;
      int episodes = 0;
      for (Eigen::Index t = 0; t < T; ++t) {
        ep += rewards[t];
        if (r.dones[t]) {
          sum += ep;
          ep = 0.0;
          ++episodes;
        }
      }
      stats.mean_learned_return = episodes > 0 ? sum / episodes : ep;
    }
    // Scale-free advantage targets.
    const double centered = std::sqrt((rewards.array() - rewards.mean()).square().mean());
    if (centered > 1e-12) rewards /= centered;

    VectorXd values = value_.forward(r.states).row(0).transpose();
    VectorXd next_values = value_.forward(r.next_states).row(0).transpose();
    VectorXd adv(T), targets(T);
    double gae = 0.0;
    for (Eigen::Index t = T; t-- > 0;) {
      const bool terminal = r.dones[t];
      const double bootstrap = terminal ? 0.0 : next_values[t];
      const double delta = rewards[t] + config_.gamma * bootstrap - values[t];
      // A segment boundary that is not an episode end still bootstraps from V.
      const bool cut = terminal || t == T - 1;
      gae = delta + (cut ? 0.0 : config_.gamma * config_.gae_lambda * gae);
      adv[t] = gae;
    }
    targets = adv + values;
    if (!adv.allFinite()) {
      ++skipped_;
      stats.skipped = true;
      return stats;
    }
    const double adv_std = std::sqrt((adv.array() - adv.mean()).square().mean());
    VectorXd norm_adv = adv_std > 1e-8 ? VectorXd((adv.array() - adv.mean()) / adv_std) : adv;

    actor_step(r, norm_adv);
    for (int i = 0; i < config_.critic_iters; ++i) critic_step(r.states, targets);
    return stats;
  }

 private:
  void actor_step(const Rollout& r, const VectorXd& adv) {
    const Eigen::Index T = r.size();
    Mlp::Tape tape;
    MatrixXd mu = policy_.mean_net().forward(r.states, tape);
    VectorXd ls = policy_.clamped_log_std();
    VectorXd inv_var = (-2.0 * ls).array().exp();
    // Loss = -(1/T) sum_t adv_t log pi(a_t|s_t) - entropy_coef * entropy
    MatrixXd diff = r.raw_actions - mu;
    MatrixXd d_mu = diff.array().colwise() * inv_var.array();
    d_mu.array().rowwise() *= adv.transpose().array();
    d_mu *= -1.0 / static_cast<double>(T);
    VectorXd grad_mean;
    policy_.mean_net().backward(tape, d_mu, grad_mean);
    VectorXd grad_ls(ls.size());
    for (Eigen::Index i = 0; i < ls.size(); ++i) {
      const double z2 = (diff.row(i).array().square() * inv_var[i]).matrix().dot(adv) / static_cast<double>(T);
      const double mean_adv = adv.mean();
      double g = -(z2 - mean_adv) - config_.entropy_coef;
      const double raw = policy_.log_std()[i];
      if (raw < config_.log_std_min || raw > config_.log_std_max) g = 0.0;
      grad_ls[i] = g;
    }
    VectorXd grad(grad_mean.size() + grad_ls.size());
    grad << grad_mean, grad_ls;
    VectorXd flat = policy_.flat();
    actor_opt_.step(flat, grad);
    policy_.set_flat(flat);
  }

  void critic_step(const MatrixXd& states, const VectorXd& targets) {
    Mlp::Tape tape;
    VectorXd v = value_.forward(states, tape).row(0).transpose();
    MatrixXd d = ((v - targets) / static_cast<double>(v.size())).transpose();
    VectorXd grad;
    value_.backward(tape, d, grad);
    critic_opt_.step(value_.params(), grad);
  }

  EnvSpec spec_;
  PolicyConfig config_;
  Policy policy_;
  Mlp value_;
  Adam actor_opt_;
  Adam critic_opt_;
  std::mt19937_64 rng_;
  std::uint64_t episode_seed_;
  Vec state_;
  std::uint64_t skipped_ = 0;
};

struct Evaluation {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

/// Ground-truth episode return of the deterministic (mean-action) policy.
inline Evaluation evaluate_policy(const Env& prototype, const Policy& policy, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  auto env = prototype.clone();
  Evaluation ev;
  for (int e = 0; e < episodes; ++e) {
    Vec s = env->reset(seed * 31337u + static_cast<std::uint64_t>(e));
    double total = 0.0;
    while (!env->done()) {
      Transition tr = env->step(policy.mean_action(s));
      total += tr.env_reward;
      s = tr.next_state;
    }
    ev.returns.push_back(total);
  }
  double sum = 0.0;
  for (double r : ev.returns) sum += r;
  ev.mean = sum / episodes;
  double sq = 0.0;
  for (double r : ev.returns) sq += (r - ev.mean) * (r - ev.mean);
  ev.std = std::sqrt(sq / episodes);
  return ev;
}

struct CurvePoint {
  long step = 0;
  double mean_learned_return = 0.0;
};

struct TrainResult {
  Policy policy;
  std::vector<CurvePoint> curve;
};

/// Trains from scratch against `reward` for `steps` env steps.
inline TrainResult train_policy(const Env& prototype, const RewardFn& reward, long steps, const PolicyConfig& config,
                                std::uint64_t seed) {
  auto env = prototype.clone();
  PolicyTrainer trainer(env->spec(), config, seed);
  TrainResult out;
  long done = 0;
  while (done < steps) {
    const auto n = static_cast<std::size_t>(std::min<long>(static_cast<long>(config.rollout_steps), steps - done));
    Rollout r = trainer.collect(*env, n);
    done += static_cast<long>(n);
    UpdateStats s = trainer.update(r, reward);
    out.curve.push_back({done, s.mean_learned_return});
  }
  out.policy = trainer.policy();
  return out;
}

}  // namespace ratecraft
