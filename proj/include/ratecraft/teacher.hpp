#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "envs.hpp"
#include "segment.hpp"

namespace ratecraft {

/// Smallest and largest discounted return a segment of `length` steps can
/// have, from the env's per-step reward bounds.
inline std::pair<double, double> attainable_segment_return_range(const EnvSpec& spec, std::size_t length,
                                                                 double gamma) {
  if (!std::isfinite(spec.reward_low) || !std::isfinite(spec.reward_high))
    throw std::invalid_argument(spec.name + ": per-step reward is unbounded; configure explicit reward bounds");
  double weight = 0.0;
  double g = 1.0;
  for (std::size_t t = 0; t < length; ++t, g *= gamma) weight += g;
  return {spec.reward_low * weight, spec.reward_high * weight};
}

/// Optional label noise: flips to a neighbouring class with probability
/// 0.5 * exp(-distance_to_nearest_boundary / scale). Off unless scale > 0.
struct RatingNoise {
  double scale = 0.0;
};

class SyntheticRatingTeacher {
 public:
  SyntheticRatingTeacher(int n, double lo, double hi, RatingNoise noise = {}, std::uint64_t seed = 0)
      : noise_(noise), rng_(seed) {
    if (n < 1) throw std::invalid_argument("teacher needs at least one class");
    if (!(hi > lo)) throw std::invalid_argument("teacher return range must be non-empty");
    boundaries_.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) boundaries_[i] = lo + (hi - lo) * static_cast<double>(i) / n;
    boundaries_.back() = hi;
  }

  static SyntheticRatingTeacher for_env(int n, const EnvSpec& spec, std::size_t length, double gamma,
                                        RatingNoise noise = {}, std::uint64_t seed = 0) {
    auto [lo, hi] = attainable_segment_return_range(spec, length, gamma);
    return SyntheticRatingTeacher(n, lo, hi, noise, seed);
  }

  int num_classes() const { return static_cast<int>(boundaries_.size()) - 1; }
  const std::vector<double>& boundaries() const { return boundaries_; }

  /// Class i with gt in [b_i, b_{i+1}); the top interval is closed. Returns
  /// outside the range clamp to the end classes.
  int rate_return(double gt) const {
    const int n = num_classes();
    int cls = n - 1;
    for (int i = 0; i < n; ++i)
      if (gt < boundaries_[i + 1]) {
        cls = i;
        break;
      }
    return cls;
  }

  int rate(const Segment& segment) {
    if (!segment.gt_return) throw std::invalid_argument("segment has no ground-truth return; cannot rate synthetically");
    int cls = rate_return(*segment.gt_return);
    if (noise_.scale > 0.0) cls = perturb(*segment.gt_return, cls);
    return cls;
  }

 private:
  int perturb(double gt, int cls) {
    const int n = num_classes();
    const double below = gt - boundaries_[cls];
    const double above = boundaries_[cls + 1] - gt;
    const double d = std::min(below, above);
    std::bernoulli_distribution flip(0.5 * std::exp(-d / noise_.scale));
    if (!flip(rng_)) return cls;
    if (below <= above && cls > 0) return cls - 1;
    if (cls + 1 < n) return cls + 1;
    return cls;
  }

  std::vector<double> boundaries_;
  RatingNoise noise_;
  std::mt19937_64 rng_;
};

inline int rate(SyntheticRatingTeacher& teacher, const Segment& segment) { return teacher.rate(segment); }

class SyntheticPreferenceTeacher {
 public:
  explicit SyntheticPreferenceTeacher(std::uint64_t seed = 0) : rng_(seed) {}

  /// The side with strictly higher ground-truth return; exact ties are a
  /// seeded coin flip.
  Side prefer(const Segment& a, const Segment& b) {
    if (!a.gt_return || !b.gt_return)
      throw std::invalid_argument("segment has no ground-truth return; cannot compare synthetically");
    if (*a.gt_return > *b.gt_return) return Side::first;
    if (*b.gt_return > *a.gt_return) return Side::second;
    return std::bernoulli_distribution(0.5)(rng_) ? Side::first : Side::second;
  }

 private:
  std::mt19937_64 rng_;
};

inline Side prefer(SyntheticPreferenceTeacher& teacher, const Segment& a, const Segment& b) {
  return teacher.prefer(a, b);
}

}  // namespace ratecraft
