#pragma once

/** Perceptual classifiers and their optimizers. */

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctsketch/errors.hpp"

namespace ctsketch {

struct PerceptualModel {
  enum class Kind { linear_softmax, mlp };

  Kind kind = Kind::linear_softmax;
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  std::size_t hidden = 0;
  std::vector<double> theta;

  /// logits = W x + b; theta = [W (classes x input), b].
  static PerceptualModel linear(std::size_t input_dim, std::size_t class_count) {
    if (input_dim == 0 || class_count == 0) throw ArgumentError("linear model: dimensions must be positive");
    PerceptualModel m;
    m.kind = Kind::linear_softmax;
    m.input_dim = input_dim;
    m.class_count = class_count;
    m.theta.assign(class_count * (input_dim + 1), 0.0);
    return m;
  }

  /// logits = W2 tanh(W1 x + b1) + b2; theta = [W1, b1, W2, b2].
  static PerceptualModel mlp(std::size_t input_dim, std::size_t hidden, std::size_t class_count) {
    if (input_dim == 0 || hidden == 0 || class_count == 0) throw ArgumentError("mlp: dimensions must be positive");
    PerceptualModel m;
    m.kind = Kind::mlp;
    m.input_dim = input_dim;
    m.hidden = hidden;
    m.class_count = class_count;
    m.theta.assign(hidden * (input_dim + 1) + class_count * (hidden + 1), 0.0);
    return m;
  }

  /// Gaussian initialization with the given scale.
  void randomize(std::uint64_t seed, double scale = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (double& w : theta) w = n(rng);
  }

  std::size_t parameter_count() const noexcept { return theta.size(); }
};

inline std::string to_string(PerceptualModel::Kind k) {
  return k == PerceptualModel::Kind::linear_softmax ? "linear" : "mlp";
}

namespace detail {

inline void softmax_inplace(std::vector<double>& z) {
  double top = z[0];
  for (double x : z) top = std::max(top, x);
  double s = 0.0;
  for (double& x : z) {
    x = std::exp(x - top);
    s += x;
  }
  for (double& x : z) x /= s;
}

// out[i] = b[i] + sum_k W[i, k] x[k]
inline void affine(const double* w, const double* b, std::span<const double> x, std::size_t rows, double* out) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < rows; ++i) {
    double s = b[i];
    const double* wi = w + i * n;
    for (std::size_t k = 0; k < n; ++k) s += wi[k] * x[k];
    out[i] = s;
  }
}

}  // namespace detail

/// Class distribution for one feature vector.
inline std::vector<double> apply_model(const PerceptualModel& m, std::span<const double> x) {
  if (x.size() != m.input_dim) {
    throw ArgumentError("apply_model: feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                        std::to_string(m.input_dim));
  }
  std::vector<double> z(m.class_count);
  const double* t = m.theta.data();
  if (m.kind == PerceptualModel::Kind::linear_softmax) {
    detail::affine(t, t + m.class_count * m.input_dim, x, m.class_count, z.data());
  } else {
    std::vector<double> h(m.hidden);
    detail::affine(t, t + m.hidden * m.input_dim, x, m.hidden, h.data());
    for (double& v : h) v = std::tanh(v);
    const double* w2 = t + m.hidden * (m.input_dim + 1);
    detail::affine(w2, w2 + m.class_count * m.hidden, h, m.class_count, z.data());
  }
  detail::softmax_inplace(z);
  return z;
}

/// Accumulate dL/dtheta into grad given p = apply_model(m, x) and dL/dp.
inline void model_backward(const PerceptualModel& m, std::span<const double> x, std::span<const double> p,
                           std::span<const double> grad_p, std::vector<double>& grad) {
  double mean = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) mean += grad_p[c] * p[c];
  std::vector<double> dz(m.class_count);
  bool any = false;
  for (std::size_t c = 0; c < p.size(); ++c) {
    dz[c] = p[c] * (grad_p[c] - mean);
    any = any || dz[c] != 0.0;
  }
  if (!any) return;
  const std::size_t n = m.input_dim;
  if (m.kind == PerceptualModel::Kind::linear_softmax) {
    double* gw = grad.data();
    double* gb = gw + m.class_count * n;
    for (std::size_t c = 0; c < m.class_count; ++c) {
      for (std::size_t k = 0; k < n; ++k) gw[c * n + k] += dz[c] * x[k];
      gb[c] += dz[c];
    }
    return;
  }
  const std::size_t hdim = m.hidden;
  const double* t = m.theta.data();
  std::vector<double> h(hdim);
  detail::affine(t, t + hdim * n, x, hdim, h.data());
  for (double& v : h) v = std::tanh(v);
  const double* w2 = t + hdim * (n + 1);
  double* gw1 = grad.data();
  double* gb1 = gw1 + hdim * n;
  double* gw2 = gb1 + hdim;
  double* gb2 = gw2 + m.class_count * hdim;
  std::vector<double> dh(hdim, 0.0);
  for (std::size_t c = 0; c < m.class_count; ++c) {
    for (std::size_t j = 0; j < hdim; ++j) {
      gw2[c * hdim + j] += dz[c] * h[j];
      dh[j] += dz[c] * w2[c * hdim + j];
    }
    gb2[c] += dz[c];
  }
  for (std::size_t j = 0; j < hdim; ++j) {
    const double da = dh[j] * (1.0 - h[j] * h[j]);
    for (std::size_t k = 0; k < n; ++k) gw1[j * n + k] += da * x[k];
    gb1[j] += da;
  }
}

struct OptimizerConfig {
  enum class Kind { sgd, adam } kind = Kind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerConfig sgd(double lr) { return {Kind::sgd, lr}; }
  static OptimizerConfig adam(double lr = 1e-3) { return {Kind::adam, lr}; }
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("optimizer: learning rate must be >= 0");
  }

  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    if (cfg_.kind == OptimizerConfig::Kind::sgd) {
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg_.lr * grad[i];
      return;
    }
    if (m_.empty()) {
      m_.assign(theta.size(), 0.0);
      v_.assign(theta.size(), 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      theta[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace ctsketch
