#pragma once

/** Tensor-train sketches of summary tensors.
 *
 *  A sketch of a d-way tensor holds d cores of shape (r_{j-1}, n_j, r_j) with
 *  r_0 = r_d = 1, built by a left-to-right sweep of truncated SVDs. Each sweep
 *  step records the Frobenius norm of the singular values it drops; the root
 *  sum of squares of those bounds the reconstruction error. */

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/svd.hpp"
#include "ctsketch/tensor.hpp"

namespace ctsketch {

struct SketchConfig {
  std::optional<std::size_t> rank;  // empty means FULL
  std::uint64_t seed = 0;

  static SketchConfig full(std::uint64_t seed = 0) { return SketchConfig{std::nullopt, seed}; }
  static SketchConfig with_rank(std::size_t r, std::uint64_t seed = 0) {
    if (r < 1) throw ArgumentError("SketchConfig: rank must be >= 1");
    return SketchConfig{r, seed};
  }
  bool is_full() const noexcept { return !rank.has_value(); }
  std::string to_string() const { return rank ? std::to_string(*rank) : std::string("full"); }
};

class TTSketch {
 public:
  TTSketch(std::vector<DenseTensor> cores, std::vector<double> truncation_errors)
      : cores_(std::move(cores)), errors_(std::move(truncation_errors)) {
    if (cores_.empty()) throw ArgumentError("TTSketch: no cores");
    if (errors_.size() != cores_.size() - 1) {
      throw ArgumentError("TTSketch: need " + std::to_string(cores_.size() - 1) + " truncation errors");
    }
    ranks_.push_back(1);
    for (std::size_t j = 0; j < cores_.size(); ++j) {
      const auto& c = cores_[j];
      if (c.rank() != 3) throw ArgumentError("TTSketch: core " + std::to_string(j) + " is not 3-way");
      if (c.dim(0) != ranks_.back()) {
        throw ArgumentError("TTSketch: rank chain broken at core " + std::to_string(j));
      }
      ranks_.push_back(c.dim(2));
      source_dims_.push_back(c.dim(1));
    }
    if (ranks_.back() != 1) throw ArgumentError("TTSketch: trailing rank must be 1");
    for (double e : errors_) {
      if (!(e >= 0.0)) throw ArgumentError("TTSketch: truncation errors must be nonnegative");
    }
  }

  std::size_t order() const noexcept { return cores_.size(); }
  const std::vector<DenseTensor>& cores() const noexcept { return cores_; }
  const DenseTensor& core(std::size_t j) const { return cores_.at(j); }
  const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }
  const std::vector<double>& truncation_errors() const noexcept { return errors_; }
  const Shape& source_dims() const noexcept { return source_dims_; }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& c : cores_) n += c.size();
    return n;
  }

 private:
  std::vector<DenseTensor> cores_;
  std::vector<double> errors_;
  std::vector<std::size_t> ranks_;
  Shape source_dims_;
};

namespace detail {

inline std::size_t bond_limit(const SketchConfig& cfg, std::size_t rows, std::size_t cols) {
  const std::size_t full = std::min(rows, cols);
  return cfg.is_full() ? full : std::min(*cfg.rank, full);
}

inline SvdOptions sweep_options(const SketchConfig& cfg) {
  SvdOptions opt;
  opt.tol = 0.0;
  opt.fixed_rank = !cfg.is_full();
  opt.seed = cfg.seed;
  return opt;
}

inline void check_core_budget(std::size_t rows, std::size_t k) {
  if (rows > element_budget() / std::max<std::size_t>(k, 1)) {
    throw ResourceError("tt sketch: core of " + std::to_string(rows) + "x" + std::to_string(k) +
                        " exceeds the element budget");
  }
}

/// diag(s) * right_t, as a fresh row-major buffer.
inline std::vector<double> scale_rows(const SvdResult& svd) {
  const std::size_t k = svd.rank();
  const std::size_t cols = svd.right_t.dim(1);
  std::vector<double> out(svd.right_t.data().begin(), svd.right_t.data().end());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] *= svd.singular_values[i];
  }
  return out;
}

}  // namespace detail

/// TT-SVD: sequential left-to-right sweep of truncated SVDs.
inline TTSketch tt_svd(const DenseTensor& phi, const SketchConfig& cfg) {
  if (!all_finite(phi.data())) throw NumericError("tt_svd: non-finite entries");
  const Shape& dims = phi.dims();
  const std::size_t d = dims.size();
  std::vector<DenseTensor> cores;
  std::vector<double> errors;
  if (d == 1) {
    cores.emplace_back(Shape{1, dims[0], 1}, std::vector<double>(phi.data().begin(), phi.data().end()));
    return TTSketch(std::move(cores), {});
  }
  const auto opt = detail::sweep_options(cfg);
  std::vector<double> rest(phi.data().begin(), phi.data().end());
  std::size_t r = 1;
  for (std::size_t j = 0; j + 1 < d; ++j) {
    const std::size_t rows = r * dims[j];
    const std::size_t cols = rest.size() / rows;
    const std::size_t limit = detail::bond_limit(cfg, rows, cols);
    detail::check_core_budget(rows, limit);
    DenseTensor unfolding({rows, cols}, std::move(rest));
    SvdResult svd = truncated_svd(unfolding, limit, opt);
    const std::size_t k = svd.rank();
    rest = detail::scale_rows(svd);
    errors.push_back(svd.discarded_norm);
    cores.emplace_back(Shape{r, dims[j], k}, std::move(svd.left).take_data());
    r = k;
  }
  cores.emplace_back(Shape{r, dims[d - 1], 1}, std::move(rest));
  return TTSketch(std::move(cores), std::move(errors));
}

/// Re-sketch a tensor that is already in TT form (possibly with redundant
/// ranks) without forming it densely: right-to-left orthogonalization, then
/// the same truncating left-to-right sweep as tt_svd.
inline TTSketch tt_round(const TTSketch& exact, const SketchConfig& cfg) {
  const std::size_t d = exact.order();
  const Shape dims = exact.source_dims();
  std::vector<std::vector<double>> g;
  std::vector<std::size_t> r = exact.ranks();
  for (const auto& c : exact.cores()) g.emplace_back(c.data().begin(), c.data().end());
  if (d == 1) return exact;

  SvdOptions exact_opt;
  exact_opt.tol = 0.0;
  for (std::size_t j = d - 1; j >= 1; --j) {
    const std::size_t rows = r[j];
    const std::size_t cols = dims[j] * r[j + 1];
    SvdResult svd = truncated_svd(DenseTensor({rows, cols}, std::move(g[j])), std::min(rows, cols), exact_opt);
    const std::size_t k = svd.rank();
    g[j] = std::move(svd.right_t).take_data();
    // G_{j-1} <- G_{j-1} * (left * diag(s)), viewed as (r_{j-2} n_{j-1}) x r_{j-1}.
    const std::size_t prev_rows = r[j - 1] * dims[j - 1];
    std::vector<double> next(prev_rows * k, 0.0);
    const auto left = svd.left.data();
    for (std::size_t a = 0; a < prev_rows; ++a) {
      for (std::size_t b = 0; b < rows; ++b) {
        const double x = g[j - 1][a * rows + b];
        if (x == 0.0) continue;
        for (std::size_t c = 0; c < k; ++c) next[a * k + c] += x * left[b * k + c] * svd.singular_values[c];
      }
    }
    g[j - 1] = std::move(next);
    r[j] = k;
  }

  const auto opt = detail::sweep_options(cfg);
  std::vector<DenseTensor> cores;
  std::vector<double> errors;
  for (std::size_t j = 0; j + 1 < d; ++j) {
    const std::size_t rows = r[j] * dims[j];
    const std::size_t cols = r[j + 1];
    const std::size_t limit = detail::bond_limit(cfg, rows, cols);
    SvdResult svd = truncated_svd(DenseTensor({rows, cols}, std::move(g[j])), limit, opt);
    const std::size_t k = svd.rank();
    errors.push_back(svd.discarded_norm);
    const std::vector<double> sv = detail::scale_rows(svd);  // k x r_{j+1}
    const std::size_t next_cols = dims[j + 1] * r[j + 2];
    std::vector<double> next(k * next_cols, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < cols; ++b) {
        const double x = sv[a * cols + b];
        if (x == 0.0) continue;
        const double* src = g[j + 1].data() + b * next_cols;
        double* dst = next.data() + a * next_cols;
        for (std::size_t c = 0; c < next_cols; ++c) dst[c] += x * src[c];
      }
    }
    g[j + 1] = std::move(next);
    cores.emplace_back(Shape{r[j], dims[j], k}, std::move(svd.left).take_data());
    r[j + 1] = k;
  }
  cores.emplace_back(Shape{r[d - 1], dims[d - 1], 1}, std::move(g[d - 1]));
  return TTSketch(std::move(cores), std::move(errors));
}

/// Dense reconstruction. Verification only; inference never calls this.
inline DenseTensor reconstruct(const TTSketch& s, std::size_t budget = element_budget()) {
  const std::size_t total = checked_product(s.source_dims());
  if (total > budget) {
    throw ResourceError("reconstruct: " + shape_string(s.source_dims()) + " exceeds the element budget of " +
                        std::to_string(budget));
  }
  const auto& r = s.ranks();
  std::vector<double> acc(s.core(0).data().begin(), s.core(0).data().end());  // n_1 x r_1
  std::size_t rows = s.source_dims()[0];
  for (std::size_t j = 1; j < s.order(); ++j) {
    const auto core = s.core(j).data();
    const std::size_t n = s.source_dims()[j];
    const std::size_t rin = r[j];
    const std::size_t rout = r[j + 1];
    const std::size_t width = n * rout;
    std::vector<double> next(rows * width, 0.0);
    for (std::size_t p = 0; p < rows; ++p) {
      double* dst = next.data() + p * width;
      for (std::size_t a = 0; a < rin; ++a) {
        const double x = acc[p * rin + a];
        if (x == 0.0) continue;
        const double* src = core.data() + a * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] += x * src[c];
      }
    }
    acc = std::move(next);
    rows *= n;
  }
  return DenseTensor(s.source_dims(), std::move(acc));
}

/// sqrt(sum_k eps_k^2): the bound on ||phi - reconstruct(s)||_F.
inline double reconstruction_error_bound(const TTSketch& s) {
  double t = 0.0;
  for (double e : s.truncation_errors()) t += e * e;
  return std::sqrt(t);
}

}  // namespace ctsketch
