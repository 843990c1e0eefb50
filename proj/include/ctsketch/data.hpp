#pragma once

/** Synthetic perceptual data and task definitions.
 *
 *  Symbols are rendered as class-conditional Gaussian feature vectors with
 *  unit variance around well separated class means. */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/graph.hpp"

namespace ctsketch {

class SyntheticSymbols {
 public:
  static constexpr std::size_t kDefaultDim = 16;
  static constexpr double kMinSeparation = 4.0;
  /// Mixed into the seed so class means never share a stream with model
  /// initialization or data sampling under the same seed value.
  static constexpr std::uint64_t kSeedSalt = 0x9e3779b97f4a7c15ULL;

  SyntheticSymbols(std::size_t class_count, std::uint64_t seed, std::size_t dim = kDefaultDim,
                   double spread = 2.0)
      : dim_(dim), means_(class_count) {
    if (class_count == 0 || dim == 0) throw ArgumentError("SyntheticSymbols: sizes must be positive");
    std::mt19937_64 rng(seed ^ kSeedSalt);
    std::normal_distribution<double> n(0.0, spread);
    for (std::size_t c = 0; c < class_count; ++c) {
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw ArgumentError("SyntheticSymbols: cannot place class means; increase spread");
        std::vector<double> m(dim);
        for (double& x : m) x = n(rng);
        bool far = true;
        for (std::size_t o = 0; o < c && far; ++o) far = distance(m, means_[o]) >= kMinSeparation;
        if (far) {
          means_[c] = std::move(m);
          break;
        }
      }
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t class_count() const noexcept { return means_.size(); }
  const std::vector<double>& mean(std::size_t c) const { return means_.at(c); }

  std::vector<double> sample(std::size_t c, std::mt19937_64& rng) const {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(means_.at(c));
    for (double& v : x) v += n(rng);
    return x;
  }

  static double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }

 private:
  std::size_t dim_;
  std::vector<std::vector<double>> means_;
};

struct TrainingExample {
  std::vector<std::vector<double>> inputs;  // one feature vector per leaf
  Label label;
  std::vector<std::size_t> symbols;  // ground-truth leaf symbols
};

using Dataset = std::vector<TrainingExample>;

/// A graph plus a sampler of ground-truth leaf symbols.
struct Task {
  std::string name;
  ProgramGraph graph;
  std::size_t class_count = 10;
  std::function<std::vector<std::size_t>(std::mt19937_64&)> draw_symbols;
};

namespace detail {

inline std::vector<std::size_t> uniform_symbols(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> u(0, classes - 1);
  std::vector<std::size_t> out(n);
  for (auto& s : out) s = u(rng);
  return out;
}

/// Random valid 4x4 board: shuffle symbols, rows within bands, bands, and
/// optionally transpose a fixed solution.
inline std::vector<std::size_t> random_valid_board4(std::mt19937_64& rng) {
  std::vector<std::size_t> base{0, 1, 2, 3, 2, 3, 0, 1, 1, 0, 3, 2, 3, 2, 1, 0};
  std::vector<std::size_t> sym{0, 1, 2, 3};
  std::shuffle(sym.begin(), sym.end(), rng);
  std::vector<std::size_t> rows{0, 1, 2, 3};
  if (rng() & 1) std::swap(rows[0], rows[1]);
  if (rng() & 1) std::swap(rows[2], rows[3]);
  if (rng() & 1) {
    std::swap(rows[0], rows[2]);
    std::swap(rows[1], rows[3]);
  }
  std::vector<std::size_t> cols{0, 1, 2, 3};
  if (rng() & 1) std::swap(cols[0], cols[1]);
  if (rng() & 1) std::swap(cols[2], cols[3]);
  if (rng() & 1) {
    std::swap(cols[0], cols[2]);
    std::swap(cols[1], cols[3]);
  }
  const bool transpose = rng() & 1;
  std::vector<std::size_t> out(16);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t rr = transpose ? cols[c] : rows[r];
      const std::size_t cc = transpose ? rows[r] : cols[c];
      out[r * 4 + c] = sym[base[rr * 4 + cc]];
    }
  }
  return out;
}

}  // namespace detail

inline Task sum_task(std::size_t n, OutputKind intermediate = OutputKind::value) {
  Task t{"sum_" + std::to_string(n), builtin_sum_tree(n, intermediate), 10, {}};
  t.draw_symbols = [n](std::mt19937_64& rng) { return detail::uniform_symbols(n, 10, rng); };
  return t;
}

inline Task add_task(std::size_t n, OutputKind intermediate = OutputKind::value) {
  Task t{"add_" + std::to_string(n), builtin_carry_add(n, intermediate), 10, {}};
  t.draw_symbols = [n](std::mt19937_64& rng) { return detail::uniform_symbols(2 * n, 10, rng); };
  return t;
}

/// Formulas alternate digits and operators; every drawn formula is valid
/// except that a division by zero evaluates to 0 like any invalid formula.
inline Task hwf_task(std::size_t length) {
  Task t{"hwf_" + std::to_string(length), builtin_hwf(length), kHwfSymbols, {}};
  t.draw_symbols = [length](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> digit(0, 9), op(10, 13);
    std::vector<std::size_t> s(length);
    for (std::size_t i = 0; i < length; ++i) s[i] = i % 2 == 0 ? digit(rng) : op(rng);
    return s;
  };
  return t;
}

/// Half valid boards, half boards with one cell overwritten by a clashing value.
inline Task visudo_task(std::size_t n) {
  if (n != 4) throw ArgumentError("visudo_task: only 4x4 boards have a data generator");
  Task t{"visudo_4", builtin_visudo(4), 4, {}};
  t.draw_symbols = [](std::mt19937_64& rng) {
    auto b = detail::random_valid_board4(rng);
    if (rng() & 1) {
      const std::size_t cell = std::uniform_int_distribution<std::size_t>(0, 15)(rng);
      b[cell] = (b[cell] + 1 + std::uniform_int_distribution<std::size_t>(0, 2)(rng)) % 4;
    }
    return b;
  };
  return t;
}

inline Task task_by_name(const std::string& name, OutputKind intermediate = OutputKind::value) {
  auto suffix = [&](const std::string& prefix) -> std::size_t {
    try {
      return static_cast<std::size_t>(std::stoul(name.substr(prefix.size())));
    } catch (const std::exception&) {
      throw ConfigError("unknown task '" + name + "'");
    }
  };
  if (name.rfind("sum_", 0) == 0) return sum_task(suffix("sum_"), intermediate);
  if (name.rfind("add_", 0) == 0) return add_task(suffix("add_"), intermediate);
  if (name.rfind("hwf_", 0) == 0) return hwf_task(suffix("hwf_"));
  if (name.rfind("visudo_", 0) == 0) return visudo_task(suffix("visudo_"));
  throw ConfigError("unknown task '" + name + "'");
}

/// Render `count` examples: symbols from the task, features from `symbols`,
/// labels from the exact program.
inline Dataset make_dataset(const Task& task, const SyntheticSymbols& symbols, std::size_t count, std::uint64_t seed) {
  if (symbols.class_count() != task.class_count) throw ConfigError("make_dataset: symbol generator has wrong class count");
  std::mt19937_64 rng(seed);
  Dataset out;
  out.reserve(count);
  while (out.size() < count) {
    auto s = task.draw_symbols(rng);
    const auto label = evaluate(task.graph, s);
    if (!label) continue;
    TrainingExample ex;
    for (std::size_t x : s) ex.inputs.push_back(symbols.sample(x, rng));
    ex.label = *label;
    ex.symbols = std::move(s);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Single-symbol supervised data, for baseline checks of the generator.
inline std::vector<std::pair<std::vector<double>, std::size_t>> make_symbol_data(const SyntheticSymbols& symbols,
                                                                                  std::size_t count,
                                                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> c(0, symbols.class_count() - 1);
  std::vector<std::pair<std::vector<double>, std::size_t>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = c(rng);
    out.emplace_back(symbols.sample(k, rng), k);
  }
  return out;
}

}  // namespace ctsketch
