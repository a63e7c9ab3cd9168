#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "mlp.hpp"
#include "preference_model.hpp"
#include "rating_model.hpp"
#include "reward_net.hpp"
#include "segment.hpp"

namespace ratecraft {

/// Normalization context and class boundaries frozen for one reward-update
/// round.
struct RatingFrame {
  NormalizationContext ctx;
  ClassBoundaries boundaries;
};

inline RatingFrame fit_rating_frame(std::span<const double> returns, const RatedDataset& dataset) {
  if (returns.size() != dataset.size()) throw std::invalid_argument("one return per dataset entry required");
  RatingFrame frame;
  frame.ctx = NormalizationContext::from_returns(returns);
  std::vector<double> norm(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) norm[i] = normalize_return(returns[i], frame.ctx);
  std::sort(norm.begin(), norm.end());
  frame.boundaries = fit_boundaries(norm, dataset.class_counts());
  return frame;
}

inline RatingFrame fit_rating_frame(const RewardNet& net, const RatedDataset& dataset, double gamma) {
  std::vector<double> returns;
  returns.reserve(dataset.size());
  for (const auto& e : dataset.entries()) returns.push_back(segment_return(net, *e.segment, gamma));
  return fit_rating_frame(returns, dataset);
}

/// Rating cross-entropy as a function of raw segment returns, with the
/// frame held fixed.
inline ReturnLossFn rating_return_loss(std::vector<int> classes, RatingFrame frame, NoiseSharpness k) {
  return [classes = std::move(classes), frame = std::move(frame), k](const VectorXd& returns) {
    ReturnLoss out;
    out.d_returns = VectorXd::Zero(returns.size());
    out.terms.resize(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      const double x = frame.ctx.affine(returns[idx]);
      if (!std::isfinite(x)) {
        out.terms[i] = x;
        out.loss = x;
        continue;
      }
      out.terms[i] = -class_log_probabilities(x, frame.boundaries, k)[classes[i]];
      out.loss += out.terms[i];
      out.d_returns[idx] = rating_loss_derivative(x, classes[i], frame.boundaries, k) * frame.ctx.slope();
    }
    return out;
  };
}

inline double rating_loss_gradient(const RewardNet& net, std::span<const SegmentPtr> segments,
                                   std::vector<int> classes, const RatingFrame& frame, NoiseSharpness k, double gamma,
                                   VectorXd& grad) {
  return return_loss_gradient(net, segments, gamma, rating_return_loss(std::move(classes), frame, k), grad);
}

struct RewardTrainingConfig {
  AdamConfig adam{};
  int batch_size = 64;
  int epochs = 50;
  double gamma = 1.0;
  double noise_sharpness = 30.0;
};

/// Immutable view of a trained ensemble used to relabel rollouts: the mean
/// over members of scale_m * r_m(s, a).
class RewardSnapshot {
 public:
  RewardSnapshot() = default;
  RewardSnapshot(RewardEnsemble ensemble, std::vector<double> scales, std::uint64_t version)
      : ensemble_(std::move(ensemble)), scales_(std::move(scales)), version_(version) {}

  std::uint64_t version() const { return version_; }
  const RewardEnsemble& ensemble() const { return ensemble_; }
  const std::vector<double>& scales() const { return scales_; }

  VectorXd rewards(const MatrixXd& x) const {
    VectorXd r = VectorXd::Zero(x.cols());
    for (std::size_t i = 0; i < ensemble_.size(); ++i) r += scales_[i] * ensemble_[i].predict_columns(x);
    return r / static_cast<double>(ensemble_.size());
  }

 private:
  RewardEnsemble ensemble_;
  std::vector<double> scales_;
  std::uint64_t version_ = 0;
};

/// Ensemble of reward nets trained from rating or preference data. Each
/// member has its own optimizer state and shuffle stream.
class RewardLearner {
 public:
  RewardLearner(RewardEnsemble ensemble, RewardTrainingConfig config, std::uint64_t seed)
      : ensemble_(std::move(ensemble)), config_(config), frames_(ensemble_.size()) {
    AdamConfig adam = config_.adam;
    for (std::size_t i = 0; i < ensemble_.size(); ++i) {
      optimizers_.emplace_back(adam);
      rngs_.emplace_back(seed + 104729u * (i + 1));
    }
  }

  const RewardEnsemble& ensemble() const { return ensemble_; }
  const RewardTrainingConfig& config() const { return config_; }
  const std::vector<RatingFrame>& frames() const { return frames_; }
  std::uint64_t updates() const { return updates_; }

  /// Trains every member on the whole rated set for the configured epochs.
  /// Frames are refit before training and again afterwards. Returns the mean
  /// per-item loss of the last epoch, averaged over members.
  double train_rating(const RatedDataset& dataset) {
    if (dataset.empty()) return 0.0;
    const std::size_t length = dataset.segment_length();
    std::vector<int> classes;
    for (const auto& e : dataset.entries()) classes.push_back(e.label.class_index);
    double total = 0.0;
    for (std::size_t m = 0; m < ensemble_.size(); ++m) {
      RewardNet& net = ensemble_[m];
      const MatrixXd all = pack_entries(net, dataset);
      const RatingFrame frame = fit_rating_frame(returns_of(net, all, length), dataset);
      const NoiseSharpness k(config_.noise_sharpness);
      double last_epoch = 0.0;
      run_epochs(m, dataset.size(), [&](std::span<const std::size_t> batch, VectorXd& grad) {
        std::vector<int> cls;
        for (auto i : batch) cls.push_back(classes[i]);
        return return_loss_gradient(net, gather(all, batch, length), length, config_.gamma,
                                    rating_return_loss(std::move(cls), frame, k), grad);
      }, last_epoch);
      total += last_epoch / static_cast<double>(dataset.size());
      frames_[m] = fit_rating_frame(returns_of(net, all, length), dataset);
    }
    ++updates_;
    return total / static_cast<double>(ensemble_.size());
  }

  double train_preference(const PreferenceDataset& dataset) {
    if (dataset.empty()) return 0.0;
    const std::size_t length = dataset.segment_length();
    std::vector<SegmentPtr> segs;
    std::vector<Side> sides;
    for (const auto& e : dataset.entries()) {
      segs.push_back(e.first);
      segs.push_back(e.second);
      sides.push_back(e.label.preferred);
    }
    double total = 0.0;
    for (std::size_t m = 0; m < ensemble_.size(); ++m) {
      RewardNet& net = ensemble_[m];
      const MatrixXd all = pack_inputs(net, segs);
      double last_epoch = 0.0;
      run_epochs(m, dataset.size(), [&](std::span<const std::size_t> batch, VectorXd& grad) {
        std::vector<std::size_t> cols;
        std::vector<Side> s;
        for (auto i : batch) {
          cols.push_back(2 * i);
          cols.push_back(2 * i + 1);
          s.push_back(sides[i]);
        }
        return return_loss_gradient(net, gather(all, cols, length), length, config_.gamma,
                                    preference_return_loss(std::move(s)), grad);
      }, last_epoch);
      total += last_epoch / static_cast<double>(dataset.size());
    }
    ++updates_;
    return total / static_cast<double>(ensemble_.size());
  }

  /// Rating members are rescaled by their normalization slope so that every
  /// member contributes on the normalized-return scale.
  RewardSnapshot snapshot(bool rating_scale) const {
    std::vector<double> scales(ensemble_.size(), 1.0);
    if (rating_scale)
      for (std::size_t m = 0; m < ensemble_.size(); ++m)
        if (updates_ > 0) scales[m] = frames_[m].ctx.slope();
    return RewardSnapshot(ensemble_, std::move(scales), updates_);
  }

 private:
  template <class StepFn>
  void run_epochs(std::size_t member, std::size_t count, StepFn&& step, double& last_epoch_loss) {
    std::vector<std::size_t> order(count);
    VectorXd grad;
    const auto batch = static_cast<std::size_t>(std::max(1, config_.batch_size));
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rngs_[member]);
      double epoch_loss = 0.0;
      for (std::size_t start = 0; start < count; start += batch) {
        const std::size_t end = std::min(count, start + batch);
        epoch_loss += step(std::span<const std::size_t>(order.data() + start, end - start), grad);
        // Mean over the minibatch, as in the usual per-batch averaged loss.
        grad /= static_cast<double>(end - start);
        optimizers_[member].step(ensemble_[member].mlp().params(), grad);
      }
      last_epoch_loss = epoch_loss;
    }
  }

  static MatrixXd pack_entries(const RewardNet& net, const RatedDataset& dataset) {
    std::vector<SegmentPtr> segs;
    segs.reserve(dataset.size());
    for (const auto& e : dataset.entries()) segs.push_back(e.segment);
    return pack_inputs(net, segs);
  }

  std::vector<double> returns_of(const RewardNet& net, const MatrixXd& all, std::size_t length) const {
    VectorXd r = packed_returns(net, all, length, config_.gamma);
    return {r.data(), r.data() + r.size()};
  }

  static MatrixXd gather(const MatrixXd& all, std::span<const std::size_t> segments, std::size_t length) {
    const auto len = static_cast<Eigen::Index>(length);
    MatrixXd x(all.rows(), len * static_cast<Eigen::Index>(segments.size()));
    for (std::size_t i = 0; i < segments.size(); ++i)
      x.middleCols(static_cast<Eigen::Index>(i) * len, len) =
          all.middleCols(static_cast<Eigen::Index>(segments[i]) * len, len);
    return x;
  }

  RewardEnsemble ensemble_;
  RewardTrainingConfig config_;
  std::vector<Adam> optimizers_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<RatingFrame> frames_;
  std::uint64_t updates_ = 0;
};

}  // namespace ratecraft
