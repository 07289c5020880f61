#pragma once

// Fully connected tanh network with hand-written backpropagation and an
// Adam optimizer over a flat parameter vector.

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "covert_rsma/numerics.hpp"

namespace covert_rsma {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// in -> hidden -> hidden -> out, tanh on hidden layers, identity output.
/// Parameters live in one flat vector laid out layer by layer as
/// [W (column-major out x in), b (out)].
class Mlp {
 public:
  struct Cache {
    MatrixXd input;                // in x n
    std::vector<MatrixXd> hidden;  // post-activation, one per hidden layer
  };

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out)
      : sizes_{in, hidden, hidden, out} {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      n += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
    params_ = VectorXd::Zero(static_cast<Eigen::Index>(n));
  }

  [[nodiscard]] std::size_t input_dim() const noexcept { return sizes_.front(); }
  [[nodiscard]] std::size_t output_dim() const noexcept { return sizes_.back(); }
  [[nodiscard]] const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  [[nodiscard]] std::size_t layers() const noexcept { return sizes_.size() - 1; }

  VectorXd& params() noexcept { return params_; }
  [[nodiscard]] const VectorXd& params() const noexcept { return params_; }

  /// Orthogonal initialization; `output_gain` scales the last layer.
  void initialize(Rng& rng, double hidden_gain, double output_gain) {
    for (std::size_t l = 0; l < layers(); ++l) {
      const auto rows = static_cast<Eigen::Index>(sizes_[l + 1]);
      const auto cols = static_cast<Eigen::Index>(sizes_[l]);
      // Orthonormal columns (or rows, for wide layers) from a thin QR.
      const Eigen::Index tall = std::max(rows, cols);
      const Eigen::Index thin = std::min(rows, cols);
      MatrixXd g(tall, thin);
      for (Eigen::Index i = 0; i < tall; ++i) {
        for (Eigen::Index j = 0; j < thin; ++j) g(i, j) = rng.normal();
      }
      Eigen::HouseholderQR<MatrixXd> qr(g);
      MatrixXd q = qr.householderQ() * MatrixXd::Identity(tall, thin);
      if (rows < cols) q.transposeInPlace();
      const double gain = (l + 1 == layers()) ? output_gain : hidden_gain;
      weight(l) = gain * q;
      bias(l).setZero();
    }
  }

  Eigen::Map<MatrixXd> weight(std::size_t l) {
    return {params_.data() + offset(l), rows(l), cols(l)};
  }
  Eigen::Map<const MatrixXd> weight(std::size_t l) const {
    return {params_.data() + offset(l), rows(l), cols(l)};
  }
  Eigen::Map<VectorXd> bias(std::size_t l) {
    return {params_.data() + offset(l) + rows(l) * cols(l), rows(l)};
  }
  Eigen::Map<const VectorXd> bias(std::size_t l) const {
    return {params_.data() + offset(l) + rows(l) * cols(l), rows(l)};
  }

  /// Column-batched forward pass: x is in x n, returns out x n.
  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) {
      throw DimensionError("mlp: input has " + std::to_string(x.rows()) +
                           " rows, expected " + std::to_string(input_dim()));
    }
    MatrixXd a = x;
    if (cache) {
      cache->input = x;
      cache->hidden.clear();
    }
    for (std::size_t l = 0; l < layers(); ++l) {
      MatrixXd z = weight(l) * a;
      z.colwise() += bias(l);
      if (l + 1 < layers()) {
        a = z.array().tanh().matrix();
        if (cache) cache->hidden.push_back(a);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  VectorXd forward(std::span<const double> x) const {
    const Eigen::Map<const VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward(MatrixXd(v)).col(0);
  }

  /// Gradient of sum_j <d_out(:, j), f(x_j)> with respect to the flat
  /// parameters, given the cache of the forward pass that produced f(x).
  VectorXd backward(const Cache& cache, const MatrixXd& d_out) const {
    VectorXd grad = VectorXd::Zero(params_.size());
    MatrixXd delta = d_out;
    for (std::size_t l = layers(); l-- > 0;) {
      const MatrixXd& a_in = l == 0 ? cache.input : cache.hidden[l - 1];
      Eigen::Map<MatrixXd> gw(
          grad.data() + offset(l), rows(l), cols(l));
      Eigen::Map<VectorXd> gb(grad.data() + offset(l) + rows(l) * cols(l), rows(l));
      gw.noalias() = delta * a_in.transpose();
      gb = delta.rowwise().sum();
      if (l > 0) {
        MatrixXd back = weight(l).transpose() * delta;
        // tanh' = 1 - tanh^2
        delta = back.array() * (1.0 - a_in.array().square());
      }
    }
    return grad;
  }

 private:
  [[nodiscard]] Eigen::Index rows(std::size_t l) const {
    return static_cast<Eigen::Index>(sizes_[l + 1]);
  }
  [[nodiscard]] Eigen::Index cols(std::size_t l) const {
    return static_cast<Eigen::Index>(sizes_[l]);
  }
  [[nodiscard]] Eigen::Index offset(std::size_t l) const {
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < l; ++i) o += rows(i) * cols(i) + rows(i);
    return o;
  }

  std::vector<std::size_t> sizes_;
  VectorXd params_;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)), beta1_(beta1), beta2_(beta2),
        eps_(eps) {}

  /// Moves `params` along +grad (ascent) scaled by the adaptive step.
  void ascend(Eigen::Ref<VectorXd> params, const VectorXd& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() += lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }
  void descend(Eigen::Ref<VectorXd> params, const VectorXd& grad, double lr) {
    ascend(params, -grad, lr);
  }

  VectorXd& first_moment() noexcept { return m_; }
  VectorXd& second_moment() noexcept { return v_; }
  long& steps() noexcept { return t_; }
  [[nodiscard]] const VectorXd& first_moment() const noexcept { return m_; }
  [[nodiscard]] const VectorXd& second_moment() const noexcept { return v_; }
  [[nodiscard]] long steps() const noexcept { return t_; }

 private:
  VectorXd m_;
  VectorXd v_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace covert_rsma
