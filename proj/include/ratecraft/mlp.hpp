#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace ratecraft {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Fully connected network: tanh on hidden layers, linear output. All weights
// and biases live in one flat vector so optimizers, finite-difference checks
// and checkpoints see a single parameter array. Samples are columns.
class Mlp {
 public:
  struct Tape {
    std::vector<MatrixXd> activations;  // activations[0] is the input
  };

  Mlp() = default;

  Mlp(std::vector<int> sizes, std::uint64_t seed, double output_scale = 1.0) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ShapeError("mlp needs at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw ShapeError("mlp layer sizes must be positive");
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(count);
      count += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = VectorXd::Zero(static_cast<Eigen::Index>(count));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      // Glorot-uniform weights, zero biases.
      double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
      if (l + 2 == sizes_.size()) limit *= output_scale;
      std::uniform_real_distribution<double> u(-limit, limit);
      auto w = weight(l);
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  Eigen::Index num_params() const { return params_.size(); }

  const VectorXd& params() const { return params_; }
  VectorXd& params() { return params_; }

  Eigen::Map<MatrixXd> weight(std::size_t l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const MatrixXd> weight(std::size_t l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<VectorXd> bias(std::size_t l) {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }
  Eigen::Map<const VectorXd> bias(std::size_t l) const {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }

  // Zeroes the output layer so the network starts as the zero map.
  void zero_output_layer() {
    weight(num_layers() - 1).setZero();
    bias(num_layers() - 1).setZero();
  }

  MatrixXd forward(const MatrixXd& x) const {
    check_input(x);
    MatrixXd h = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      MatrixXd z = weight(l) * h;
      z.colwise() += bias(l);
      if (l + 1 < num_layers()) z = z.array().tanh().matrix();
      h = std::move(z);
    }
    return h;
  }

  MatrixXd forward(const MatrixXd& x, Tape& tape) const {
    check_input(x);
    tape.activations.clear();
    tape.activations.push_back(x);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      MatrixXd z = weight(l) * tape.activations.back();
      z.colwise() += bias(l);
      if (l + 1 < num_layers()) z = z.array().tanh().matrix();
      tape.activations.push_back(std::move(z));
    }
    return tape.activations.back();
  }

  /// Accumulates dLoss/dparams into `grad` given dLoss/doutput for every
  /// column of the taped batch. Returns dLoss/dinput.
  MatrixXd backward(const Tape& tape, const MatrixXd& grad_out, VectorXd& grad) const {
    if (grad.size() != params_.size()) grad = VectorXd::Zero(params_.size());
    if (tape.activations.size() != num_layers() + 1) throw std::logic_error("tape does not match network depth");
    if (grad_out.rows() != output_size() || grad_out.cols() != tape.activations.back().cols())
      throw ShapeError("output gradient shape mismatch");
    MatrixXd delta = grad_out;
    for (std::size_t l = num_layers(); l-- > 0;) {
      const MatrixXd& input = tape.activations[l];
      Eigen::Map<MatrixXd> gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      Eigen::Map<VectorXd> gb(grad.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]);
      gw.noalias() += delta * input.transpose();
      gb += delta.rowwise().sum();
      MatrixXd upstream = weight(l).transpose() * delta;
      if (l > 0) upstream.array() *= 1.0 - input.array().square();
      delta = std::move(upstream);
    }
    return delta;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) { return a.sizes_ == b.sizes_ && a.params_ == b.params_; }

 private:
  void check_input(const MatrixXd& x) const {
    if (x.rows() != input_size())
      throw ShapeError("input has " + std::to_string(x.rows()) + " features, network expects " +
                       std::to_string(input_size()));
  }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  VectorXd params_;
};

inline void check_gradient(const VectorXd& params, const VectorXd& grad) {
  if (grad.size() != params.size()) throw ShapeError("gradient size does not match parameter count");
  if (!grad.allFinite()) throw std::domain_error("non-finite gradient; step refused");
}

inline void sgd_step(VectorXd& params, const VectorXd& grad, double learning_rate) {
  check_gradient(params, grad);
  params -= learning_rate * grad;
}

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

  void step(VectorXd& params, const VectorXd& grad) {
    check_gradient(params, grad);
    if (m_.size() != params.size()) {
      m_ = VectorXd::Zero(params.size());
      v_ = VectorXd::Zero(params.size());
      t_ = 0;
    }
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
  }

 private:
  AdamConfig config_;
  VectorXd m_;
  VectorXd v_;
  long t_ = 0;
};

// Checkpoint: one JSON header line, then the parameters as little-endian
// IEEE-754 doubles.
inline void save_checkpoint(std::ostream& out, const Mlp& net, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json header = {{"format", "ratecraft-mlp"},
                           {"version", 1},
                           {"sizes", net.sizes()},
                           {"hidden_activation", "tanh"},
                           {"output_activation", "linear"},
                           {"count", net.num_params()},
                           {"dtype", "float64-le"},
                           {"extra", extra}};
  out << header.dump() << '\n';
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(net.params()[i]);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(bytes, 8);
  }
}

inline Mlp load_checkpoint(std::istream& in, nlohmann::json* extra = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header");
  auto header = nlohmann::json::parse(line);
  if (header.at("format") != "ratecraft-mlp") throw std::runtime_error("checkpoint: unknown format");
  Mlp net(header.at("sizes").get<std::vector<int>>(), 0);
  auto count = header.at("count").get<Eigen::Index>();
  if (count != net.num_params()) throw std::runtime_error("checkpoint: parameter count does not match sizes");
  for (Eigen::Index i = 0; i < count; ++i) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw std::runtime_error("checkpoint: truncated parameter block");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    net.params()[i] = std::bit_cast<double>(bits);
  }
  if (extra) *extra = header.value("extra", nlohmann::json::object());
  return net;
}

}  // namespace ratecraft
