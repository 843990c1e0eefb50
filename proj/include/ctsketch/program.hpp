#pragma once

/** Sub-programs and their summary tensors.
 *
 *  A SubProgram is a total function over a finite input grid. VALUE programs
 *  return a real per input tuple and summarize to a tensor of the grid's
 *  shape; ONEHOT programs return a (possibly empty, possibly multi-element)
 *  set of output indices and summarize to an indicator tensor with one extra
 *  trailing axis over the output set. */

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsketch/errors.hpp"
#include "ctsketch/sketch.hpp"
#include "ctsketch/tensor.hpp"

namespace ctsketch {

enum class OutputKind { value, onehot };

inline std::string to_string(OutputKind k) { return k == OutputKind::value ? "value" : "onehot"; }

inline OutputKind parse_output_kind(const std::string& s) {
  if (s == "value") return OutputKind::value;
  if (s == "onehot") return OutputKind::onehot;
  throw ConfigError("unknown output_kind '" + s + "'");
}

using Symbols = std::span<const std::size_t>;
using ValueFn = std::function<double(Symbols)>;
using OutputSetFn = std::function<void(Symbols, std::vector<std::size_t>&)>;

struct SubProgram {
  std::string name;
  std::vector<std::size_t> input_domains;
  OutputKind kind = OutputKind::value;
  /// |Y| for ONEHOT programs; for VALUE programs with integer outputs, the
  /// number of output symbols 0..output_count-1 (0 when unbounded).
  std::size_t output_count = 0;
  ValueFn value;         // set when kind == value
  OutputSetFn outputs;   // set when kind == onehot
  /// Optional exact tensor-train form, used when the dense summary does not
  /// fit the element budget.
  std::function<TTSketch()> structured;
  /// Type tag and parameters; round-trips through task configs.
  nlohmann::json descriptor;

  std::size_t arity() const noexcept { return input_domains.size(); }

  Shape summary_shape() const {
    Shape s(input_domains.begin(), input_domains.end());
    if (kind == OutputKind::onehot) s.push_back(output_count);
    return s;
  }

  double summary_entries() const { return product_as_double(summary_shape()); }
};

struct SummaryMode {
  enum class Kind { enumerate, sample } kind = Kind::enumerate;
  std::size_t count = 0;
  std::uint64_t seed = 0;

  static SummaryMode enumerate() { return {}; }
  static SummaryMode sample(std::size_t count, std::uint64_t seed) { return {Kind::sample, count, seed}; }
};

namespace detail {

inline void check_symbols(const SubProgram& sp, Symbols r) {
  if (r.size() != sp.arity()) throw ArgumentError(sp.name + ": expected " + std::to_string(sp.arity()) + " inputs");
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] >= sp.input_domains[i]) throw ArgumentError(sp.name + ": input symbol out of range");
  }
}

inline void fill_cell(const SubProgram& sp, Symbols r, std::size_t offset, std::vector<double>& data,
                      std::vector<std::size_t>& scratch) {
  if (sp.kind == OutputKind::value) {
    data[offset] = sp.value(r);
    return;
  }
  scratch.clear();
  sp.outputs(r, scratch);
  for (std::size_t y : scratch) {
    if (y >= sp.output_count) throw ArgumentError(sp.name + ": output index " + std::to_string(y) + " out of range");
    data[offset * sp.output_count + y] = 1.0;
  }
}

}  // namespace detail

/// Dense summary: phi[r] = c(r) for VALUE programs, the output indicator for
/// ONEHOT programs. SAMPLE mode visits `count` uniformly drawn tuples and
/// leaves everything else at zero.
inline DenseTensor build_summary(const SubProgram& sp, const SummaryMode& mode = SummaryMode::enumerate(),
                                 std::size_t budget = element_budget()) {
  const Shape shape = sp.summary_shape();
  const double entries = product_as_double(shape);
  if (entries > static_cast<double>(budget)) {
    throw ResourceError(sp.name + ": summary " + shape_string(shape) + " needs " + count_string(entries) +
                        " entries, over the element budget of " + std::to_string(budget) +
                        "; decompose the program into smaller sub-programs or sketch it from a structured form");
  }
  std::vector<double> data(checked_product(shape), 0.0);
  std::vector<std::size_t> scratch;
  const auto& dom = sp.input_domains;
  std::vector<std::size_t> r(dom.size(), 0);
  if (mode.kind == SummaryMode::Kind::enumerate) {
    std::size_t offset = 0;
    do {
      detail::fill_cell(sp, r, offset++, data, scratch);
    } while (next_index(r, dom));
  } else {
    std::mt19937_64 rng(mode.seed);
    for (std::size_t s = 0; s < mode.count; ++s) {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < dom.size(); ++i) {
        r[i] = std::uniform_int_distribution<std::size_t>(0, dom[i] - 1)(rng);
        offset = offset * dom[i] + r[i];
      }
      detail::fill_cell(sp, r, offset, data, scratch);
    }
  }
  return DenseTensor(shape, std::move(data));
}

/// Sketch a sub-program: dense TT-SVD when the summary fits the budget,
/// otherwise rounding of its structured form.
inline TTSketch sketch_program(const SubProgram& sp, const SketchConfig& cfg,
                               const SummaryMode& mode = SummaryMode::enumerate(),
                               std::size_t budget = element_budget()) {
  if (sp.summary_entries() <= static_cast<double>(budget) || !sp.structured) {
    return tt_svd(build_summary(sp, mode, budget), cfg);
  }
  return tt_round(sp.structured(), cfg);
}

// ---------------------------------------------------------------------------
// Builtin sub-programs

/// n-ary sum of symbol indices.
inline SubProgram sum_program(std::vector<std::size_t> domains, OutputKind kind = OutputKind::value) {
  SubProgram sp;
  std::size_t top = 0;
  for (std::size_t d : domains) top += d - 1;
  sp.name = "sum";
  for (std::size_t d : domains) sp.name += "_" + std::to_string(d);
  sp.input_domains = domains;
  sp.kind = kind;
  sp.output_count = top + 1;
  auto total = [](Symbols r) {
    std::size_t s = 0;
    for (std::size_t x : r) s += x;
    return s;
  };
  if (kind == OutputKind::value) {
    sp.value = [total](Symbols r) { return static_cast<double>(total(r)); };
  } else {
    sp.outputs = [total](Symbols r, std::vector<std::size_t>& out) { out.push_back(total(r)); };
  }
  sp.descriptor = {{"type", "sum"}, {"domains", domains}, {"output_kind", to_string(kind)}};
  return sp;
}

/// Carry step of multi-digit addition: (place sum 0..18, previous carry sum
/// 0..19) -> place sum + [previous >= 10], a 19 x 20 summary.
inline SubProgram carry_add_program(OutputKind kind = OutputKind::value) {
  SubProgram sp;
  sp.name = "carry_add";
  sp.input_domains = {19, 20};
  sp.kind = kind;
  sp.output_count = 20;
  auto f = [](Symbols r) { return r[0] + (r[1] >= 10 ? 1u : 0u); };
  if (kind == OutputKind::value) {
    sp.value = [f](Symbols r) { return static_cast<double>(f(r)); };
  } else {
    sp.outputs = [f](Symbols r, std::vector<std::size_t>& out) { out.push_back(f(r)); };
  }
  sp.descriptor = {{"type", "carry_add"}, {"output_kind", to_string(kind)}};
  return sp;
}

/// phi[i, j] = (i == j) over an N-symbol alphabet.
inline SubProgram equality_program(std::size_t n, OutputKind kind = OutputKind::onehot) {
  SubProgram sp;
  sp.name = "eq_" + std::to_string(n);
  sp.input_domains = {n, n};
  sp.kind = kind;
  sp.output_count = 2;
  if (kind == OutputKind::value) {
    sp.value = [](Symbols r) { return r[0] == r[1] ? 1.0 : 0.0; };
  } else {
    sp.outputs = [](Symbols r, std::vector<std::size_t>& out) { out.push_back(r[0] == r[1] ? 1 : 0); };
  }
  sp.descriptor = {{"type", "equality"}, {"n", n}, {"output_kind", to_string(kind)}};
  return sp;
}

namespace detail {

inline SubProgram boolean_program(const std::string& type, std::size_t arity,
                                  std::function<bool(Symbols)> f) {
  SubProgram sp;
  sp.name = type;
  sp.input_domains.assign(arity, 2);
  sp.kind = OutputKind::onehot;
  sp.output_count = 2;
  sp.outputs = [f = std::move(f)](Symbols r, std::vector<std::size_t>& out) { out.push_back(f(r) ? 1 : 0); };
  sp.descriptor = {{"type", type}};
  return sp;
}

}  // namespace detail

inline SubProgram or_program() {
  return detail::boolean_program("or", 2, [](Symbols r) { return r[0] == 1 || r[1] == 1; });
}
inline SubProgram nor_program() {
  return detail::boolean_program("nor", 2, [](Symbols r) { return r[0] == 0 && r[1] == 0; });
}
inline SubProgram not_program() {
  return detail::boolean_program("not", 1, [](Symbols r) { return r[0] == 0; });
}

/// Sudoku cell constraint: eight neighbours in a row, column, or block
/// (0 = unfilled, 1..9 = value) -> every value v in 1..9 consistent with them,
/// reported as output index v - 1. Duplicate filled neighbours give no output.
inline SubProgram sudoku_cell_program() {
  SubProgram sp;
  sp.name = "sudoku_cell";
  sp.input_domains.assign(8, 10);
  sp.kind = OutputKind::onehot;
  sp.output_count = 9;
  sp.outputs = [](Symbols r, std::vector<std::size_t>& out) {
    unsigned used = 0;
    for (std::size_t x : r) {
      if (x == 0) continue;
      const unsigned bit = 1u << (x - 1);
      if (used & bit) return;
      used |= bit;
    }
    for (std::size_t v = 0; v < 9; ++v) {
      if (!(used & (1u << v))) out.push_back(v);
    }
  };
  // Exact TT form: the bond state after j inputs is the set of values used so far.
  sp.structured = [] {
    std::vector<std::vector<unsigned>> states(9);
    for (std::size_t j = 0; j <= 8; ++j) {
      for (unsigned m = 0; m < 512; ++m) {
        if (static_cast<std::size_t>(std::popcount(m)) <= j) states[j].push_back(m);
      }
    }
    std::vector<DenseTensor> cores;
    for (std::size_t j = 0; j < 8; ++j) {
      std::array<std::size_t, 512> next_index{};
      for (std::size_t k = 0; k < states[j + 1].size(); ++k) next_index[states[j + 1][k]] = k;
      const std::size_t rin = states[j].size();
      const std::size_t rout = states[j + 1].size();
      std::vector<double> g(rin * 10 * rout, 0.0);
      for (std::size_t a = 0; a < rin; ++a) {
        const unsigned m = states[j][a];
        g[(a * 10 + 0) * rout + next_index[m]] = 1.0;
        for (std::size_t x = 1; x <= 9; ++x) {
          const unsigned bit = 1u << (x - 1);
          if (m & bit) continue;
          g[(a * 10 + x) * rout + next_index[m | bit]] = 1.0;
        }
      }
      cores.emplace_back(Shape{rin, 10, rout}, std::move(g));
    }
    const std::size_t rin = states[8].size();
    std::vector<double> g(rin * 9, 0.0);
    for (std::size_t a = 0; a < rin; ++a) {
      for (std::size_t v = 0; v < 9; ++v) {
        if (!(states[8][a] & (1u << v))) g[a * 9 + v] = 1.0;
      }
    }
    cores.emplace_back(Shape{rin, 9, 1}, std::move(g));
    return TTSketch(std::move(cores), std::vector<double>(8, 0.0));
  };
  sp.descriptor = {{"type", "sudoku_cell"}};
  return sp;
}

/// Handwritten-formula symbols: 0-9 digits, then + - * /.
inline constexpr std::size_t kHwfSymbols = 14;
inline constexpr std::size_t kHwfPlus = 10, kHwfMinus = 11, kHwfTimes = 12, kHwfDivide = 13;

/// Evaluate a digit/operator alternation with the usual precedence.
/// Invalid formulas (wrong alternation, division by zero) evaluate to 0.
inline double evaluate_formula(Symbols r) {
  if (r.empty() || r.size() % 2 == 0) return 0.0;
  constexpr std::size_t kMax = 16;
  if (r.size() > 2 * kMax - 1) return 0.0;
  std::array<double, kMax> terms{};
  std::array<std::size_t, kMax> ops{};
  std::size_t nterms = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const bool digit_slot = i % 2 == 0;
    if (digit_slot != (r[i] < 10)) return 0.0;
    if (r[i] >= kHwfSymbols) return 0.0;
  }
  // Fold * and / into the running term, keep + and - for the second pass.
  double cur = static_cast<double>(r[0]);
  for (std::size_t i = 1; i < r.size(); i += 2) {
    const std::size_t op = r[i];
    const double rhs = static_cast<double>(r[i + 1]);
    if (op == kHwfTimes) {
      cur *= rhs;
    } else if (op == kHwfDivide) {
      if (rhs == 0.0) return 0.0;
      cur /= rhs;
    } else {
      terms[nterms] = cur;
      ops[nterms] = op;
      ++nterms;
      cur = rhs;
    }
  }
  double result = nterms == 0 ? cur : terms[0];
  for (std::size_t k = 0; k < nterms; ++k) {
    const double rhs = k + 1 < nterms ? terms[k + 1] : cur;
    result = ops[k] == kHwfPlus ? result + rhs : result - rhs;
  }
  return result;
}

inline SubProgram hwf_program(std::size_t length) {
  if (length == 0 || length % 2 == 0 || length > 7) {
    throw ArgumentError("hwf_program: length must be 1, 3, 5, or 7");
  }
  SubProgram sp;
  sp.name = "hwf_" + std::to_string(length);
  sp.input_domains.assign(length, kHwfSymbols);
  sp.kind = OutputKind::value;
  sp.value = [](Symbols r) { return evaluate_formula(r); };
  sp.descriptor = {{"type", "hwf"}, {"length", length}};
  return sp;
}

/// Lookup-table program for black-box functions. Tuples missing from the table
/// raise ArgumentError when evaluated.
struct TableEntries {
  std::map<std::vector<std::size_t>, double> values;
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> sets;
};

inline SubProgram table_program(std::string name, std::vector<std::size_t> domains, OutputKind kind,
                                std::size_t output_count, TableEntries entries) {
  SubProgram sp;
  sp.name = std::move(name);
  sp.input_domains = std::move(domains);
  sp.kind = kind;
  sp.output_count = output_count;
  nlohmann::json rows = nlohmann::json::array();
  if (kind == OutputKind::value) {
    for (const auto& [k, v] : entries.values) rows.push_back({{"inputs", k}, {"value", v}});
    sp.value = [name = sp.name, t = std::move(entries.values)](Symbols r) {
      auto it = t.find(std::vector<std::size_t>(r.begin(), r.end()));
      if (it == t.end()) throw ArgumentError(name + ": table has no entry for input tuple");
      return it->second;
    };
  } else {
    for (const auto& [k, v] : entries.sets) rows.push_back({{"inputs", k}, {"outputs", v}});
    sp.outputs = [name = sp.name, t = std::move(entries.sets)](Symbols r, std::vector<std::size_t>& out) {
      auto it = t.find(std::vector<std::size_t>(r.begin(), r.end()));
      if (it == t.end()) throw ArgumentError(name + ": table has no entry for input tuple");
      out.insert(out.end(), it->second.begin(), it->second.end());
    };
  }
  sp.descriptor = {{"type", "table"},
                   {"name", sp.name},
                   {"domains", sp.input_domains},
                   {"output_kind", to_string(kind)},
                   {"output_count", output_count},
                   {"entries", rows}};
  return sp;
}

/// Evaluate a sub-program on one tuple: the singleton value for VALUE
/// programs, the output set for ONEHOT programs.
inline std::vector<std::size_t> evaluate_outputs(const SubProgram& sp, Symbols r) {
  detail::check_symbols(sp, r);
  std::vector<std::size_t> out;
  sp.outputs(r, out);
  return out;
}

inline double evaluate_value(const SubProgram& sp, Symbols r) {
  detail::check_symbols(sp, r);
  return sp.value(r);
}

}  // namespace ctsketch
