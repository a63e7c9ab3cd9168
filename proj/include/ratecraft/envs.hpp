#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "segment.hpp"

namespace ratecraft {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  double action_low = -1.0;
  double action_high = 1.0;
  double reward_low = 0.0;
  double reward_high = 0.0;
  int episode_length = 0;
};

struct Transition {
  Vec state;
  Vec action;
  Vec next_state;
  double env_reward = 0.0;  // ground truth; teacher and evaluation only
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;

  Transition step(const Vec& action) {
    if (done_) throw std::logic_error(spec().name + ": step after episode end");
    if (static_cast<int>(action.size()) != spec().action_dim) throw std::invalid_argument("action dimension mismatch");
    Vec a = action;
    bool clamped = false;
    for (auto& v : a) {
      const double c = std::clamp(v, spec().action_low, spec().action_high);
      if (c != v || std::isnan(v)) clamped = true;
      v = std::isnan(v) ? 0.0 : c;
    }
    if (clamped) ++clamp_count_;
    Transition tr;
    tr.state = observation();
    tr.action = a;
    tr.env_reward = ground_truth_reward(tr.state, a);
    advance(a);
    ++t_;
    tr.next_state = observation();
    done_ = t_ >= spec().episode_length;
    tr.done = done_;
    return tr;
  }

  /// Reward of taking `action` in observation `state`; a pure function of the
  /// pair, so segments can be rescored without the simulator.
  virtual double ground_truth_reward(const Vec& state, const Vec& action) const = 0;

  /// Drawable primitives for one observation.
  virtual nlohmann::json render_frame(const Vec& state) const = 0;

  virtual std::unique_ptr<Env> clone() const = 0;

  int t() const { return t_; }
  bool done() const { return done_; }
  std::uint64_t clamp_count() const { return clamp_count_; }

 protected:
  virtual Vec observation() const = 0;
  virtual void advance(const Vec& action) = 0;

  void begin_episode() {
    t_ = 0;
    done_ = false;
  }

 private:
  int t_ = 0;
  bool done_ = true;
  std::uint64_t clamp_count_ = 0;
};

struct LineWalkerConfig {
  double dt = 0.1;
  double drag = 0.5;
  double v_max = 1.0;
  double position_scale = 50.0;
  int episode_length = 500;
};

/// 1-D cart pushed by a bounded thrust; reward is the post-step velocity
/// clipped to [-v_max, v_max]. Observation is (position / position_scale,
/// velocity).
class LineWalker final : public Env {
 public:
  explicit LineWalker(LineWalkerConfig config = {}) : config_(config) {
    spec_ = {"LineWalker", 2, 1, -1.0, 1.0, -config.v_max, config.v_max, config.episode_length};
  }

  const EnvSpec& spec() const override { return spec_; }
  const LineWalkerConfig& config() const { return config_; }

  Vec reset(std::uint64_t) override {
    x_ = 0.0;
    v_ = 0.0;
    begin_episode();
    return observation();
  }

  double ground_truth_reward(const Vec& state, const Vec& action) const override {
    return std::clamp(next_velocity(state[1], action[0]), -config_.v_max, config_.v_max);
  }

  nlohmann::json render_frame(const Vec& state) const override {
    return {{"x", state[0]}, {"v", state[1]}, {"heading", state[1] >= 0.0 ? 0.0 : std::numbers::pi}};
  }

  std::unique_ptr<Env> clone() const override { return std::make_unique<LineWalker>(*this); }

 protected:
  Vec observation() const override { return {x_ / config_.position_scale, v_}; }

  void advance(const Vec& action) override {
    v_ = next_velocity(v_, action[0]);
    x_ += v_ * config_.dt;
  }

 private:
  double next_velocity(double v, double thrust) const { return v + (thrust - config_.drag * v) * config_.dt; }

  LineWalkerConfig config_;
  EnvSpec spec_;
  double x_ = 0.0;
  double v_ = 0.0;
};

struct PointMazeConfig {
  double dt = 0.1;
  double speed = 1.0;
  double half_width = 1.0;
  int episode_length = 500;
};

/// Point mass in a square arena steered toward a per-episode goal. Reward is
/// the negative distance to the goal before moving.
class PointMaze2D final : public Env {
 public:
  explicit PointMaze2D(PointMazeConfig config = {}) : config_(config) {
    const double diameter = 2.0 * std::sqrt(2.0) * config.half_width;
    spec_ = {"PointMaze2D", 4, 2, -1.0, 1.0, -diameter, 0.0, config.episode_length};
  }

  const EnvSpec& spec() const override { return spec_; }

  Vec reset(std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-config_.half_width, config_.half_width);
    pos_ = {u(rng), u(rng)};
    goal_ = {u(rng), u(rng)};
    begin_episode();
    return observation();
  }

  void place(double x, double y, double gx, double gy) {
    pos_ = {x, y};
    goal_ = {gx, gy};
    begin_episode();
  }

  double ground_truth_reward(const Vec& state, const Vec&) const override {
    return -std::hypot(state[0] - state[2], state[1] - state[3]);
  }

  nlohmann::json render_frame(const Vec& state) const override {
    return {{"x", state[0]}, {"y", state[1]}, {"goal_x", state[2]}, {"goal_y", state[3]}};
  }

  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMaze2D>(*this); }

 protected:
  Vec observation() const override { return {pos_[0], pos_[1], goal_[0], goal_[1]}; }

  void advance(const Vec& action) override {
    for (int i = 0; i < 2; ++i)
      pos_[i] = std::clamp(pos_[i] + action[i] * config_.speed * config_.dt, -config_.half_width, config_.half_width);
  }

 private:
  PointMazeConfig config_;
  EnvSpec spec_;
  std::array<double, 2> pos_{};
  std::array<double, 2> goal_{};
};

/// One-step task with reward -(a - target)^2; the optimal action is known.
class TargetBandit final : public Env {
 public:
  explicit TargetBandit(double target = 0.3) : target_(target) {
    spec_ = {"TargetBandit", 1, 1, -1.0, 1.0, -4.0, 0.0, 1};
  }

  const EnvSpec& spec() const override { return spec_; }
  double target() const { return target_; }

  Vec reset(std::uint64_t) override {
    begin_episode();
    return observation();
  }

  double ground_truth_reward(const Vec&, const Vec& action) const override {
    return -(action[0] - target_) * (action[0] - target_);
  }

  nlohmann::json render_frame(const Vec& state) const override { return {{"x", state[0]}}; }

  std::unique_ptr<Env> clone() const override { return std::make_unique<TargetBandit>(*this); }

 protected:
  Vec observation() const override { return {0.0}; }
  void advance(const Vec&) override {}

 private:
  double target_;
  EnvSpec spec_;
};

inline std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "LineWalker") return std::make_unique<LineWalker>();
  if (name == "PointMaze2D") return std::make_unique<PointMaze2D>();
  if (name == "TargetBandit") return std::make_unique<TargetBandit>();
  throw std::invalid_argument("unknown environment '" + name + "'");
}

/// Maps an observation to an action; may draw from the rng.
using PolicyFn = std::function<Vec(const Vec& state, std::mt19937_64& rng)>;

inline PolicyFn uniform_random_policy(const EnvSpec& spec) {
  return [spec](const Vec&, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(spec.action_low, spec.action_high);
    Vec a(static_cast<std::size_t>(spec.action_dim));
    for (auto& v : a) v = u(rng);
    return a;
  };
}

struct CollectOptions {
  std::size_t count = 10;
  std::size_t length = 50;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  SegmentId first_id = 0;
};

inline double discounted_sum(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double g = 1.0;
  for (double r : rewards) {
    total += g * r;
    g *= gamma;
  }
  return total;
}

/// Cuts consecutive non-overlapping windows of `length` steps out of fresh
/// episodes until `count` segments exist.
inline std::vector<SegmentPtr> collect_segments(Env& env, const PolicyFn& policy, const CollectOptions& opt) {
  if (opt.length < 1 || static_cast<int>(opt.length) > env.spec().episode_length)
    throw std::invalid_argument("segment length must be within the episode length");
  std::vector<SegmentPtr> out;
  std::mt19937_64 rng(opt.seed);
  SegmentId next = opt.first_id;
  for (std::uint64_t episode = 0; out.size() < opt.count; ++episode) {
    Vec s = env.reset(opt.seed * 1000003u + episode);
    auto seg = std::make_shared<Segment>();
    std::vector<double> rewards;
    while (!env.done() && out.size() < opt.count) {
      Vec a = policy(s, rng);
      Transition tr = env.step(a);
      seg->states.push_back(tr.state);
      seg->actions.push_back(tr.action);
      rewards.push_back(tr.env_reward);
      s = tr.next_state;
      if (seg->length() == opt.length) {
        seg->id = next++;
        seg->gt_return = discounted_sum(rewards, opt.gamma);
        out.push_back(seg);
        seg = std::make_shared<Segment>();
        rewards.clear();
      }
    }
  }
  return out;
}

/// One JSON frame per step.
inline nlohmann::json render_trace(const Env& env, const Segment& segment) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < segment.length(); ++t) {
    auto f = env.render_frame(segment.states[t]);
    f["t"] = t;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace ratecraft
