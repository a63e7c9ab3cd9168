#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ratecraft {

/// Min and max predicted segment return over the labeled set.
struct NormalizationContext {
  double r_min = 0.0;
  double r_max = 0.0;

  static constexpr double kDegenerateSpan = 1e-12;

  static NormalizationContext from_returns(std::span<const double> returns) {
    if (returns.empty()) throw std::invalid_argument("normalization needs at least one return");
    auto [lo, hi] = std::minmax_element(returns.begin(), returns.end());
    return {*lo, *hi};
  }

  bool degenerate() const { return r_max - r_min < kDegenerateSpan; }

  void validate() const {
    if (!std::isfinite(r_min) || !std::isfinite(r_max)) throw std::domain_error("normalization bounds must be finite");
    if (r_min > r_max) throw std::invalid_argument("normalization requires r_min <= r_max");
  }

  // Unclamped affine map used inside training, where the context is frozen
  // for a round and predictions may drift past the dataset extremes. A
  // degenerate context keeps unit slope around 0.5 so gradients stay alive.
  double affine(double raw) const { return degenerate() ? 0.5 + (raw - r_min) : (raw - r_min) / (r_max - r_min); }
  double slope() const { return degenerate() ? 1.0 : 1.0 / (r_max - r_min); }
};

inline double normalize_return(double raw, const NormalizationContext& ctx) {
  ctx.validate();
  if (!std::isfinite(raw)) throw std::domain_error("cannot normalize a non-finite return");
  if (ctx.degenerate()) return 0.5;
  return std::clamp((raw - ctx.r_min) / (ctx.r_max - ctx.r_min), 0.0, 1.0);
}

/// Thresholds 0 = b_0 <= b_1 <= ... <= b_n = 1 in normalized-return space.
class ClassBoundaries {
 public:
  ClassBoundaries() : values_{0.0, 1.0} {}

  explicit ClassBoundaries(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw std::invalid_argument("boundaries need at least two thresholds");
    if (values_.front() != 0.0 || values_.back() != 1.0)
      throw std::invalid_argument("boundaries must start at 0 and end at 1");
    for (std::size_t i = 1; i < values_.size(); ++i)
      if (!(values_[i] >= values_[i - 1])) throw std::invalid_argument("boundaries must be non-decreasing");
  }

  static ClassBoundaries uniform(int n) {
    if (n < 1) throw std::invalid_argument("need at least one class");
    std::vector<double> v(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) v[i] = static_cast<double>(i) / n;
    v.back() = 1.0;
    return ClassBoundaries(std::move(v));
  }

  int num_classes() const { return static_cast<int>(values_.size()) - 1; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  double midpoint(int cls) const { return 0.5 * (values_[cls] + values_[cls + 1]); }

  friend bool operator==(const ClassBoundaries&, const ClassBoundaries&) = default;

 private:
  std::vector<double> values_;
};

/// Boundaries that put k_j of the sorted normalized training returns in class
/// j: b_i is the midpoint between the k^cum_{i-1}-th and the next sorted
/// value. Empty classes collapse to zero width; leading empty classes sit at
/// 0 and trailing ones at 1.
inline ClassBoundaries fit_boundaries(std::span<const double> sorted_norm_returns,
                                      std::span<const std::size_t> class_counts) {
  const std::size_t n = class_counts.size();
  const std::size_t l = sorted_norm_returns.size();
  if (n < 1) throw std::invalid_argument("fit_boundaries needs at least one class");
  const std::size_t total = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  if (total != l)
    throw std::invalid_argument("class counts sum to " + std::to_string(total) + " but " + std::to_string(l) +
                                " returns were given");
  if (l < 1) throw std::invalid_argument("fit_boundaries needs a non-empty dataset");
  for (std::size_t i = 0; i < l; ++i) {
    const double r = sorted_norm_returns[i];
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("normalized returns must lie in [0, 1]");
    if (i > 0 && r < sorted_norm_returns[i - 1]) throw std::invalid_argument("normalized returns must be sorted");
  }
  std::vector<double> b(n + 1);
  b[0] = 0.0;
  b[n] = 1.0;
  std::size_t cum = 0;
  for (std::size_t i = 1; i < n; ++i) {
    cum += class_counts[i - 1];
    if (cum == 0)
      b[i] = 0.0;
    else if (cum == l)
      b[i] = 1.0;
    else
      b[i] = 0.5 * (sorted_norm_returns[cum - 1] + sorted_norm_returns[cum]);
  }
  return ClassBoundaries(std::move(b));
}

/// Positive label-noise sharpness k.
class NoiseSharpness {
 public:
  explicit NoiseSharpness(double k = 30.0) : k_(k) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("noise sharpness must be positive and finite");
  }
  double value() const { return k_; }

 private:
  double k_;
};

/// Per-class exponents -k (x - b_i)(x - b_{i+1}).
inline Eigen::VectorXd class_scores(double norm_return, const ClassBoundaries& b, NoiseSharpness k) {
  const int n = b.num_classes();
  Eigen::VectorXd e(n);
  for (int i = 0; i < n; ++i) e[i] = -k.value() * (norm_return - b[i]) * (norm_return - b[i + 1]);
  return e;
}

/// log Q(i) via a max-shifted log-sum-exp. The leading term is split off so
/// the dominant class keeps a strictly negative log probability.
inline Eigen::VectorXd class_log_probabilities(double norm_return, const ClassBoundaries& b, NoiseSharpness k) {
  if (!std::isfinite(norm_return)) throw std::domain_error("normalized return must be finite");
  Eigen::VectorXd e = class_scores(norm_return, b, k);
  Eigen::Index top;
  const double m = e.maxCoeff(&top);
  double rest = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    if (i != top) rest += std::exp(e[i] - m);
  return (e.array() - m) - std::log1p(rest);
}

using ClassDistribution = Eigen::VectorXd;

inline ClassDistribution class_probabilities(double norm_return, const ClassBoundaries& b, NoiseSharpness k) {
  if (!std::isfinite(norm_return)) throw std::domain_error("normalized return must be finite");
  Eigen::VectorXd e = class_scores(norm_return, b, k);
  Eigen::VectorXd p = (e.array() - e.maxCoeff()).exp();
  return p / p.sum();
}

/// Argmax of Q; ties go to the lower class.
inline int predict_class(double norm_return, const ClassBoundaries& b, NoiseSharpness k) {
  Eigen::VectorXd e = class_scores(norm_return, b, k);
  int best = 0;
  for (int i = 1; i < e.size(); ++i)
    if (e[i] > e[best]) best = i;
  return best;
}

struct RatedReturn {
  double norm_return;
  int observed_class;
};

/// Cross-entropy of one-hot observed classes against Q: sum of -log Q(c).
inline double rating_loss(std::span<const RatedReturn> batch, const ClassBoundaries& b, NoiseSharpness k) {
  double loss = 0.0;
  for (const auto& item : batch) {
    if (item.observed_class < 0 || item.observed_class >= b.num_classes())
      throw std::out_of_range("observed class outside boundaries");
    loss -= class_log_probabilities(item.norm_return, b, k)[item.observed_class];
  }
  return loss;
}

/// d(-log Q(c)) / d(norm_return).
inline double rating_loss_derivative(double norm_return, int observed_class, const ClassBoundaries& b,
                                     NoiseSharpness k) {
  const int n = b.num_classes();
  ClassDistribution q = class_probabilities(norm_return, b, k);
  double expected = 0.0;
  double observed = 0.0;
  for (int i = 0; i < n; ++i) {
    const double de = -k.value() * (2.0 * norm_return - b[i] - b[i + 1]);
    expected += q[i] * de;
    if (i == observed_class) observed = de;
  }
  return expected - observed;
}

}  // namespace ratecraft
