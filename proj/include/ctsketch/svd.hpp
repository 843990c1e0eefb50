#pragma once

/** Truncated singular value decomposition.
 *
 *  Matrices whose smaller dimension is at most `jacobi_limit` go through a
 *  Householder LQ reduction followed by one-sided (Hestenes) Jacobi on the
 *  square triangular factor. Larger matrices with a small requested rank use
 *  randomized subspace iteration; the residual is then measured directly so
 *  `discarded_norm` stays exact on both paths. */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/tensor.hpp"

namespace ctsketch {

struct SvdResult {
  DenseTensor left;                     // m x k, orthonormal columns
  std::vector<double> singular_values;  // k values, non-increasing
  DenseTensor right_t;                  // k x n, orthonormal rows
  double discarded_norm = 0.0;          // Frobenius norm of the truncated part

  std::size_t rank() const noexcept { return singular_values.size(); }
};

struct SvdOptions {
  double tol = 1e-12;  // relative to the largest singular value
  /// Keep exactly min(max_rank, min(rows, cols)) triplets, zero singular
  /// values included, and ignore tol.
  bool fixed_rank = false;
  std::uint64_t seed = 0;
  std::size_t jacobi_limit = 512;
  std::size_t oversampling = 8;
  std::size_t power_iterations = 2;
};

namespace detail {

/// Plain row-major scratch matrix for the kernels below.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), a(std::move(v)) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }
};

inline Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  constexpr std::size_t kBlock = 64;
  for (std::size_t i0 = 0; i0 < m.rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < m.cols; j0 += kBlock) {
      const std::size_t i1 = std::min(m.rows, i0 + kBlock);
      const std::size_t j1 = std::min(m.cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) t(j, i) = m(i, j);
      }
    }
  }
  return t;
}

/// a (m x k) * b (k x n)
inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* bp = b.row(p);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += s * bp[j];
    }
  }
  return c;
}

/// a (m x k) * b^T where b is (n x k)
inline Mat matmul_bt(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

inline double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

/// In-place Householder LQ of a wide matrix (rows <= cols). Reflector i is
/// stored in row i, columns i+1.., with an implicit leading 1.
struct LqFactorization {
  Mat work;
  std::vector<double> tau;

  explicit LqFactorization(Mat m) : work(std::move(m)), tau(work.rows, 0.0) {
    const std::size_t r = work.rows;
    const std::size_t n = work.cols;
    for (std::size_t i = 0; i < r; ++i) {
      double* ri = work.row(i);
      const double x0 = ri[i];
      double tail = 0.0;
      for (std::size_t c = i + 1; c < n; ++c) tail += ri[c] * ri[c];
      if (tail == 0.0) {
        tau[i] = 0.0;
        continue;
      }
      const double beta = -std::copysign(std::sqrt(x0 * x0 + tail), x0);
      tau[i] = (beta - x0) / beta;
      const double scale = 1.0 / (x0 - beta);
      for (std::size_t c = i + 1; c < n; ++c) ri[c] *= scale;
      ri[i] = beta;
      for (std::size_t j = i + 1; j < r; ++j) {
        double* rj = work.row(j);
        double w = rj[i] + dot(rj + i + 1, ri + i + 1, n - i - 1);
        w *= tau[i];
        rj[i] -= w;
        for (std::size_t c = i + 1; c < n; ++c) rj[c] -= w * ri[c];
      }
    }
  }

  Mat lower() const {
    Mat l(work.rows, work.rows);
    for (std::size_t i = 0; i < work.rows; ++i) {
      for (std::size_t j = 0; j <= i; ++j) l(i, j) = work(i, j);
    }
    return l;
  }

  /// m (k x rows) -> [m 0] * Q_full, i.e. k rows in the original column space.
  Mat apply_q(const Mat& m) const {
    const std::size_t n = work.cols;
    Mat out(m.rows, n);
    for (std::size_t i = 0; i < m.rows; ++i) std::copy_n(m.row(i), m.cols, out.row(i));
    for (std::size_t ii = work.rows; ii-- > 0;) {
      if (tau[ii] == 0.0) continue;
      const double* v = work.row(ii);
      for (std::size_t k = 0; k < out.rows; ++k) {
        double* ok = out.row(k);
        double w = ok[ii] + dot(ok + ii + 1, v + ii + 1, n - ii - 1);
        w *= tau[ii];
        ok[ii] -= w;
        for (std::size_t c = ii + 1; c < n; ++c) ok[c] -= w * v[c];
      }
    }
    return out;
  }
};

/// Orthonormal basis (as rows) of the row space of a wide matrix.
inline Mat orthonormal_rows(Mat m) {
  const std::size_t r = m.rows;
  LqFactorization lq(std::move(m));
  Mat eye(r, r);
  for (std::size_t i = 0; i < r; ++i) eye(i, i) = 1.0;
  return lq.apply_q(eye);
}

/// One-sided Jacobi on the rows of a square matrix L: L = u * diag(s) * wt,
/// singular values sorted non-increasing.
struct JacobiSvd {
  Mat u;
  std::vector<double> s;
  Mat wt;

  explicit JacobiSvd(const Mat& l) {
    const std::size_t r = l.rows;
    const std::size_t n = l.cols;
    Mat rows = l;
    Mat p(r, r);
    for (std::size_t i = 0; i < r; ++i) p(i, i) = 1.0;
    constexpr double kEps = 1e-15;
    constexpr int kMaxSweeps = 80;
    std::vector<double> sq(r);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      bool rotated = false;
      double total = 0.0;
      for (std::size_t i = 0; i < r; ++i) {
        sq[i] = dot(rows.row(i), rows.row(i), n);
        total += sq[i];
      }
      // Rows this far below the matrix norm are numerically zero.
      const double negligible = total * 1e-32;
      for (std::size_t i = 0; i + 1 < r; ++i) {
        for (std::size_t j = i + 1; j < r; ++j) {
          double* ri = rows.row(i);
          double* rj = rows.row(j);
          const double alpha = sq[i];
          const double beta = sq[j];
          if (alpha <= negligible || beta <= negligible) continue;
          const double gamma = dot(ri, rj, n);
          if (std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
          rotated = true;
          const double zeta = (beta - alpha) / (2.0 * gamma);
          const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
          const double c = 1.0 / std::sqrt(1.0 + t * t);
          const double sn = c * t;
          sq[i] = alpha - t * gamma;
          sq[j] = beta + t * gamma;
          for (std::size_t k = 0; k < n; ++k) {
            const double x = ri[k];
            const double y = rj[k];
            ri[k] = c * x - sn * y;
            rj[k] = sn * x + c * y;
          }
          double* pi = p.row(i);
          double* pj = p.row(j);
          for (std::size_t k = 0; k < r; ++k) {
            const double x = pi[k];
            const double y = pj[k];
            pi[k] = c * x - sn * y;
            pj[k] = sn * x + c * y;
          }
        }
      }
      if (!rotated) break;
    }
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) norms[i] = std::sqrt(dot(rows.row(i), rows.row(i), n));
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    u = Mat(r, r);
    wt = Mat(r, n);
    s.resize(r);
    for (std::size_t k = 0; k < r; ++k) {
      const std::size_t i = order[k];
      s[k] = norms[i];
      // rows = P * L, so L = P^T * rows and column k of u is row i of P.
      for (std::size_t q = 0; q < r; ++q) u(q, k) = p(i, q);
      if (norms[i] > 0.0) {
        for (std::size_t q = 0; q < n; ++q) wt(k, q) = rows(i, q) / norms[i];
      }
    }
  }
};

struct SvdParts {
  Mat left;   // m x k
  std::vector<double> s;
  Mat right_t;  // k x n
  double discarded = 0.0;
};

inline std::size_t choose_rank(std::span<const double> s, std::size_t max_rank, double tol, bool fixed) {
  if (fixed) return std::min(max_rank, s.size());
  if (s.empty() || s[0] == 0.0) return 0;
  std::size_t k = 0;
  while (k < s.size() && k < max_rank && s[k] > tol * s[0]) ++k;
  return std::max<std::size_t>(k, 1);
}

/// Modified Gram-Schmidt on the rows of w; rows that vanish (numerically zero
/// singular directions) are replaced by completions from unit vectors.
inline void orthonormalize_rows(Mat& w) {
  std::size_t next_unit = 0;
  for (std::size_t i = 0; i < w.rows; ++i) {
    double* wi = w.row(i);
    for (int attempt = 0;; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < i; ++j) {
          const double c = dot(wi, w.row(j), w.cols);
          for (std::size_t q = 0; q < w.cols; ++q) wi[q] -= c * w(j, q);
        }
      }
      const double norm = std::sqrt(dot(wi, wi, w.cols));
      if (norm > 0.5 || (attempt == 0 && norm > 1e-8)) {
        for (std::size_t q = 0; q < w.cols; ++q) wi[q] /= norm;
        break;
      }
      if (next_unit >= w.cols) throw InternalError("orthonormalize_rows: cannot complete the basis");
      std::fill_n(wi, w.cols, 0.0);
      wi[next_unit++] = 1.0;
    }
  }
}

/// Deterministic path for rows <= cols.
inline SvdParts svd_wide(Mat a, std::size_t max_rank, double tol, bool fixed = false) {
  const std::size_t r = a.rows;
  LqFactorization lq(std::move(a));
  JacobiSvd jac(lq.lower());
  const std::size_t k = choose_rank(jac.s, max_rank, tol, fixed);
  SvdParts out;
  if (k == 0) return out;
  out.left = Mat(r, k);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.left(i, j) = jac.u(i, j);
  }
  out.s.assign(jac.s.begin(), jac.s.begin() + static_cast<std::ptrdiff_t>(k));
  Mat wk(k, r);
  for (std::size_t i = 0; i < k; ++i) std::copy_n(jac.wt.row(i), r, wk.row(i));
  if (fixed) orthonormalize_rows(wk);
  out.right_t = lq.apply_q(wk);
  double tail = 0.0;
  for (std::size_t i = k; i < jac.s.size(); ++i) tail += jac.s[i] * jac.s[i];
  out.discarded = std::sqrt(tail);
  return out;
}

inline SvdParts svd_deterministic(const Mat& a, std::size_t max_rank, double tol, bool fixed = false) {
  if (a.rows <= a.cols) return svd_wide(a, max_rank, tol, fixed);
  SvdParts t = svd_wide(transpose(a), max_rank, tol, fixed);
  SvdParts out;
  out.s = std::move(t.s);
  out.discarded = t.discarded;
  if (out.s.empty()) return out;
  out.left = transpose(t.right_t);
  out.right_t = transpose(t.left);
  return out;
}

inline double residual_norm(const Mat& a, const SvdParts& p) {
  const std::size_t k = p.s.size();
  double total = 0.0;
  std::vector<double> rowbuf(a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::copy_n(a.row(i), a.cols, rowbuf.begin());
    for (std::size_t q = 0; q < k; ++q) {
      const double w = p.left(i, q) * p.s[q];
      if (w == 0.0) continue;
      const double* vr = p.right_t.row(q);
      for (std::size_t j = 0; j < a.cols; ++j) rowbuf[j] -= w * vr[j];
    }
    total += dot(rowbuf.data(), rowbuf.data(), a.cols);
  }
  return std::sqrt(total);
}

inline SvdParts svd_randomized(const Mat& a, std::size_t max_rank, const SvdOptions& opt) {
  const std::size_t m = a.rows;
  const std::size_t n = a.cols;
  const std::size_t l = std::min(max_rank + opt.oversampling, std::min(m, n));
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat omega(l, n);  // stored transposed: rows are the test vectors
  for (double& v : omega.a) v = gauss(rng);

  Mat qt = orthonormal_rows(transpose(matmul_bt(a, omega)));  // l x m
  for (std::size_t it = 0; it < opt.power_iterations; ++it) {
    Mat zt = orthonormal_rows(matmul(qt, a));                  // l x n
    qt = orthonormal_rows(transpose(matmul_bt(a, zt)));        // l x m
  }
  Mat b = matmul(qt, a);  // l x n
  SvdParts small = svd_wide(std::move(b), max_rank, opt.tol, opt.fixed_rank);
  SvdParts out;
  if (small.s.empty()) return out;
  // left = qt^T * small.left
  out.left = Mat(m, small.s.size());
  for (std::size_t p = 0; p < l; ++p) {
    const double* qp = qt.row(p);
    for (std::size_t j = 0; j < small.s.size(); ++j) {
      const double w = small.left(p, j);
      if (w == 0.0) continue;
      for (std::size_t i = 0; i < m; ++i) out.left(i, j) += qp[i] * w;
    }
  }
  out.s = std::move(small.s);
  out.right_t = std::move(small.right_t);
  out.discarded = residual_norm(a, out);
  return out;
}

}  // namespace detail

/// Truncated SVD keeping k = min(max_rank, #{sigma_i > tol * sigma_max}) terms
/// (at least one). tol = 0 keeps every nonzero singular value.
inline SvdResult truncated_svd(const DenseTensor& m, std::size_t max_rank, const SvdOptions& opt = {}) {
  if (m.rank() != 2) throw ArgumentError("truncated_svd: expected a matrix, got rank " + std::to_string(m.rank()));
  if (max_rank < 1) throw ArgumentError("truncated_svd: max_rank must be >= 1");
  if (!all_finite(m.data())) throw NumericError("truncated_svd: non-finite entries");
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  detail::Mat a(rows, cols, std::vector<double>(m.data().begin(), m.data().end()));
  const std::size_t min_dim = std::min(rows, cols);
  const bool randomized = min_dim > opt.jacobi_limit && max_rank + opt.oversampling < min_dim;
  detail::SvdParts parts = randomized ? detail::svd_randomized(a, max_rank, opt)
                                      : detail::svd_deterministic(a, max_rank, opt.tol, opt.fixed_rank);
  if (parts.s.empty()) {
    // Zero matrix: a single zero triplet keeps downstream ranks >= 1.
    std::vector<double> l(rows, 0.0), r(cols, 0.0);
    l[0] = 1.0;
    r[0] = 1.0;
    return SvdResult{DenseTensor({rows, 1}, std::move(l)), {0.0}, DenseTensor({1, cols}, std::move(r)), 0.0};
  }
  const std::size_t k = parts.s.size();
  return SvdResult{DenseTensor({rows, k}, std::move(parts.left.a)), std::move(parts.s),
                   DenseTensor({k, cols}, std::move(parts.right_t.a)), parts.discarded};
}

inline SvdResult truncated_svd(const DenseTensor& m, std::size_t max_rank, double tol, std::uint64_t seed = 0) {
  SvdOptions opt;
  opt.tol = tol;
  opt.seed = seed;
  return truncated_svd(m, max_rank, opt);
}

}  // namespace ctsketch
