#pragma once

/** Dense row-major multiway arrays and the handful of reshaping helpers the
 *  sketching code needs. */

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctsketch/errors.hpp"

namespace ctsketch {

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kDefaultElementBudget = std::size_t{1} << 27;

/// Maximum number of dense elements any enumeration or reconstruction may
/// allocate. CTS_ELEMENT_BUDGET overrides the default of 2^27.
inline std::size_t element_budget() {
  if (const char* env = std::getenv("CTS_ELEMENT_BUDGET"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != nullptr && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultElementBudget;
}

/// Product of extents; saturates at SIZE_MAX instead of wrapping.
inline std::size_t checked_product(std::span<const std::size_t> dims) {
  std::size_t p = 1;
  for (std::size_t d : dims) {
    if (d != 0 && p > std::numeric_limits<std::size_t>::max() / d) {
      return std::numeric_limits<std::size_t>::max();
    }
    p *= d;
  }
  return p;
}

/// Same as checked_product but as a double, for reporting sizes far past 2^64.
inline double product_as_double(std::span<const std::size_t> dims) {
  double p = 1.0;
  for (std::size_t d : dims) p *= static_cast<double>(d);
  return p;
}

/// Element count for messages: exact below 1e15, scientific above.
inline std::string count_string(double n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, n < 1e15 ? "%.0f" : "%.3g", n);
  return buf;
}

inline std::string shape_string(std::span<const std::size_t> dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i != 0) s += "x";
    s += std::to_string(dims[i]);
  }
  return s;
}

class DenseTensor {
 public:
  DenseTensor() : dims_{1}, data_(1, 0.0) {}

  DenseTensor(Shape dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (dims_.empty()) throw ArgumentError("DenseTensor: dims must be non-empty");
    for (std::size_t d : dims_) {
      if (d == 0) throw ArgumentError("DenseTensor: zero-sized axis in " + shape_string(dims_));
    }
    if (checked_product(dims_) != data_.size()) {
      throw ArgumentError("DenseTensor: " + std::to_string(data_.size()) +
                          " values do not fill shape " + shape_string(dims_));
    }
  }

  static DenseTensor zeros(Shape dims) {
    const std::size_t n = checked_product(dims);
    if (n == std::numeric_limits<std::size_t>::max()) {
      throw ResourceError("DenseTensor: shape " + shape_string(dims) + " overflows");
    }
    return DenseTensor(std::move(dims), std::vector<double>(n, 0.0));
  }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }

  std::span<const double> data() const noexcept { return data_; }
  std::vector<double> take_data() && { return std::move(data_); }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != dims_.size()) throw ArgumentError("DenseTensor: index rank mismatch");
    std::size_t off = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (index[i] >= dims_[i]) throw ArgumentError("DenseTensor: index out of range");
      off = off * dims_[i] + index[i];
    }
    return off;
  }

  double at(std::span<const std::size_t> index) const { return data_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  bool operator==(const DenseTensor&) const = default;

 private:
  Shape dims_;
  std::vector<double> data_;
};

/// Matricize: rows index the axes before split_axis, columns the rest.
/// Row-major storage makes this a pure relabelling of the same buffer.
inline DenseTensor unfold(const DenseTensor& t, std::size_t split_axis) {
  if (split_axis < 1 || split_axis >= t.rank()) {
    throw ArgumentError("unfold: split_axis " + std::to_string(split_axis) + " out of range for rank " +
                        std::to_string(t.rank()));
  }
  const auto& d = t.dims();
  const std::size_t rows = checked_product(std::span(d).first(split_axis));
  const std::size_t cols = checked_product(std::span(d).subspan(split_axis));
  return DenseTensor({rows, cols}, std::vector<double>(t.data().begin(), t.data().end()));
}

/// Inverse of unfold (and of any reshape).
inline DenseTensor refold(const DenseTensor& m, Shape dims) {
  if (checked_product(dims) != m.size()) {
    throw ArgumentError("refold: shape " + shape_string(dims) + " does not match " + std::to_string(m.size()) +
                        " elements");
  }
  return DenseTensor(std::move(dims), std::vector<double>(m.data().begin(), m.data().end()));
}

inline double frobenius_norm(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

inline double frobenius_norm(const DenseTensor& t) { return frobenius_norm(t.data()); }

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Row-major multi-index increment; returns false after the last index.
inline bool next_index(std::vector<std::size_t>& index, std::span<const std::size_t> dims) {
  for (std::size_t i = index.size(); i-- > 0;) {
    if (++index[i] < dims[i]) return true;
    index[i] = 0;
  }
  return false;
}

}  // namespace ctsketch
