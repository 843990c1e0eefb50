#pragma once

// Test-only reference computations. Nothing here calls into the library's
// SVD or contraction code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace ctsketch::oracle {

/// Eigenvalues of a symmetric n x n matrix by cyclic Jacobi rotations,
/// sorted non-increasing.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n) {
  auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (at(p, q) == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p);
          const double akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k);
          const double aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = at(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

/// Singular values of an m x n row-major matrix via the eigenvalues of the
/// smaller Gram matrix.
inline std::vector<double> singular_values_via_gram(const std::vector<double>& m, std::size_t rows,
                                                    std::size_t cols) {
  const bool use_rows = rows <= cols;
  const std::size_t n = use_rows ? rows : cols;
  std::vector<double> g(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      if (use_rows) {
        for (std::size_t k = 0; k < cols; ++k) s += m[i * cols + k] * m[j * cols + k];
      } else {
        for (std::size_t k = 0; k < rows; ++k) s += m[k * cols + i] * m[k * cols + j];
      }
      g[i * n + j] = s;
    }
  }
  auto ev = symmetric_eigenvalues(std::move(g), n);
  for (double& v : ev) v = std::sqrt(std::max(v, 0.0));
  return ev;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

/// Random probability vector with every entry strictly positive.
inline std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  auto v = random_vector(n, rng, 0.05, 1.0);
  double s = 0.0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
  return v;
}

/// Central-difference gradient of f at x.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

/// RBF weights exp(-|v - j| / (2 sigma^2)) (or squared distance), L1-normalized,
/// computed in long double without shifting.
inline std::vector<double> rbf(double v, double sigma, std::size_t support, bool squared = false) {
  std::vector<long double> w(support);
  long double z = 0;
  for (std::size_t j = 0; j < support; ++j) {
    const long double d = static_cast<long double>(v) - static_cast<long double>(j);
    w[j] = std::exp(-(squared ? d * d : std::fabs(d)) / (2.0L * sigma * sigma));
    z += w[j];
  }
  std::vector<double> out(support);
  for (std::size_t j = 0; j < support; ++j) out[j] = static_cast<double>(w[j] / z);
  return out;
}

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

inline std::vector<double> one_hot(std::size_t n, std::size_t i) {
  std::vector<double> v(n, 0.0);
  v[i] = 1.0;
  return v;
}

}  // namespace ctsketch::oracle
