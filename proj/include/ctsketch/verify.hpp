#pragma once

/** Reference computations for checking sketches and inference.
 *
 *  Everything here enumerates input tuples with plain loops and shares no
 *  contraction code with inference.hpp. */

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/graph.hpp"
#include "ctsketch/inference.hpp"
#include "ctsketch/learn.hpp"
#include "ctsketch/sketch.hpp"

namespace ctsketch {

inline constexpr std::size_t kWmcBudget = 10'000'000;

struct WmcResult {
  RootKind kind = RootKind::scalar;
  double expectation = 0.0;          // scalar roots; integer value for digit roots
  Distribution distribution;         // distribution roots, normalized
  std::vector<Distribution> places;  // digit roots: per-place symbol marginals, normalized
  std::map<std::vector<std::size_t>, double> tuples;  // digit roots: probability of each digit tuple
  double mass = 0.0;                 // total weight of consistent outcomes
  std::size_t tuples_visited = 0;
};

namespace detail {

/// Branching evaluation that also exposes every node's symbol.
inline void enumerate_assignments(
    const ProgramGraph& g, const std::vector<std::size_t>& leaves,
    const std::function<void(const std::vector<std::size_t>&, double)>& emit) {
  const auto order = g.order();
  const RootKind kind = g.root_kind();
  std::vector<std::size_t> symbol(g.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> args(g.nodes.size());
  std::function<void(std::size_t)> step = [&](std::size_t pos) {
    if (pos == order.size()) {
      emit(symbol, 0.0);
      return;
    }
    const std::size_t id = order[pos];
    const Node& n = g.nodes[id];
    const SubProgram& sp = g.programs[n.program];
    auto& a = args[id];
    a.resize(n.inputs.size());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const Wire& w = n.inputs[k];
      a[k] = w.kind == Wire::Kind::leaf ? leaves[w.index] : symbol[w.index];
    }
    if (sp.kind == OutputKind::value) {
      const double v = sp.value(a);
      if (id == g.root && kind == RootKind::scalar) {
        emit(symbol, v);
        return;
      }
      const double r = std::round(v);
      if (std::abs(v - r) > 1e-9 || r < 0 || r >= static_cast<double>(n.support)) return;
      symbol[id] = static_cast<std::size_t>(r);
      step(pos + 1);
      return;
    }
    std::vector<std::size_t> outs;
    sp.outputs(a, outs);
    for (std::size_t y : outs) {
      symbol[id] = y;
      step(pos + 1);
    }
  };
  step(0);
}

inline std::vector<std::vector<std::size_t>> supports(const std::vector<Distribution>& leaves) {
  std::vector<std::vector<std::size_t>> s(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t x = 0; x < leaves[i].size(); ++x) {
      if (leaves[i][x] != 0.0) s[i].push_back(x);
    }
  }
  return s;
}

inline void normalize_or_uniform(Distribution& p) {
  double s = 0.0;
  for (double x : p) s += x;
  if (s > 0.0) {
    for (double& x : p) x /= s;
  } else {
    for (double& x : p) x = 1.0 / static_cast<double>(p.size());
  }
}

}  // namespace detail

/// Exact weighted model count over the joint leaf assignment, visiting only
/// tuples where every leaf has nonzero probability.
inline WmcResult wmc_exact(const ProgramGraph& g, const std::vector<Distribution>& leaves,
                           std::size_t budget = kWmcBudget) {
  if (leaves.size() != g.leaf_count()) throw ArgumentError("wmc_exact: wrong number of leaf distributions");
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].size() != g.leaf_domains[i]) throw ArgumentError("wmc_exact: leaf distribution size mismatch");
  }
  const auto sup = detail::supports(leaves);
  double grid = 1.0;
  for (const auto& s : sup) grid *= static_cast<double>(s.size());
  if (grid > static_cast<double>(budget)) {
    throw ResourceError("wmc_exact: " + count_string(grid) + " input tuples exceed the enumeration budget of " +
                        std::to_string(budget));
  }
  WmcResult res;
  res.kind = g.root_kind();
  if (res.kind == RootKind::distribution) res.distribution.assign(g.nodes[g.root].support, 0.0);
  if (res.kind == RootKind::digits) {
    for (std::size_t p : g.places) res.places.emplace_back(g.nodes[p].support, 0.0);
  }
  if (grid == 0.0) return res;
  std::vector<std::size_t> pos(leaves.size(), 0), r(leaves.size());
  std::vector<std::size_t> extent(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) extent[i] = sup[i].size();
  do {
    double w = 1.0;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      r[i] = sup[i][pos[i]];
      w *= leaves[i][r[i]];
    }
    ++res.tuples_visited;
    detail::enumerate_assignments(g, r, [&](const std::vector<std::size_t>& sym, double v) {
      res.mass += w;
      switch (res.kind) {
        case RootKind::scalar:
          res.expectation += w * v;
          break;
        case RootKind::distribution:
          res.distribution[sym[g.root]] += w;
          break;
        case RootKind::digits: {
          std::vector<std::size_t> digits{sym[g.root] >= 10 ? 1u : 0u};
          for (std::size_t k = g.places.size(); k-- > 0;) digits.push_back(sym[g.places[k]] % 10);
          double value = 0.0;
          for (std::size_t d : digits) value = value * 10.0 + static_cast<double>(d);
          res.expectation += w * value;
          res.tuples[digits] += w;
          for (std::size_t k = 0; k < g.places.size(); ++k) res.places[k][sym[g.places[k]]] += w;
          break;
        }
      }
    });
  } while (next_index(pos, extent));
  if (res.kind == RootKind::distribution) detail::normalize_or_uniform(res.distribution);
  for (auto& p : res.places) detail::normalize_or_uniform(p);
  return res;
}

/// Exact count for a single sub-program.
inline WmcResult wmc_exact(const SubProgram& sp, const std::vector<Distribution>& inputs,
                           std::size_t budget = kWmcBudget) {
  return wmc_exact(single_node_graph(sp), inputs, budget);
}

namespace detail {

// Kernel weights computed directly, shifted by the nearest symbol's exponent.
inline Distribution reference_rbf(double v, double sigma, std::size_t support, bool squared) {
  if (!std::isfinite(v)) throw NumericError("reference_rbf: non-finite value");
  const double nearest = std::clamp(std::round(v), 0.0, static_cast<double>(support - 1));
  auto expo = [&](double j) {
    const double d = v - j;
    return -(squared ? d * d : std::abs(d)) / (2.0 * sigma * sigma);
  };
  const double shift = expo(nearest);
  Distribution p(support);
  for (std::size_t j = 0; j < support; ++j) p[j] = std::exp(expo(static_cast<double>(j)) - shift);
  normalize_or_uniform(p);
  return p;
}

}  // namespace detail

/// Node-by-node reference for the layered forward pass: each node's output is
/// computed exactly from its input distributions by enumeration, VALUE nodes
/// are converted with the RBF kernel, then passed on as independent inputs.
/// Matches a FULL-rank forward exactly, including on graphs that share leaves.
inline RootOutput wmc_layered(const ProgramGraph& g, const std::vector<Distribution>& leaves, double sigma,
                              bool squared = false, std::size_t budget = kWmcBudget) {
  if (leaves.size() != g.leaf_count()) throw ArgumentError("wmc_layered: wrong number of leaf distributions");
  std::vector<Distribution> out(g.nodes.size());
  std::vector<double> value(g.nodes.size(), 0.0);
  for (std::size_t id : g.order()) {
    const Node& n = g.nodes[id];
    const SubProgram& sp = g.programs[n.program];
    std::vector<const Distribution*> in;
    for (const Wire& w : n.inputs) in.push_back(w.kind == Wire::Kind::leaf ? &leaves[w.index] : &out[w.index]);
    std::vector<std::vector<std::size_t>> sup(in.size());
    double grid = 1.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      for (std::size_t x = 0; x < in[k]->size(); ++x) {
        if ((*in[k])[x] != 0.0) sup[k].push_back(x);
      }
      grid *= static_cast<double>(sup[k].size());
    }
    if (grid > static_cast<double>(budget)) throw ResourceError("wmc_layered: node input grid exceeds the budget");
    std::vector<std::size_t> pos(in.size(), 0), extent(in.size()), r(in.size());
    for (std::size_t k = 0; k < in.size(); ++k) extent[k] = sup[k].size();
    Distribution q(sp.kind == OutputKind::onehot ? sp.output_count : 0, 0.0);
    double v = 0.0;
    std::vector<std::size_t> outs;
    if (grid > 0.0) {
      do {
        double w = 1.0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          r[k] = sup[k][pos[k]];
          w *= (*in[k])[r[k]];
        }
        if (sp.kind == OutputKind::value) {
          v += w * sp.value(r);
        } else {
          outs.clear();
          sp.outputs(r, outs);
          for (std::size_t y : outs) q[y] += w;
        }
      } while (next_index(pos, extent));
    }
    if (sp.kind == OutputKind::value) {
      value[id] = v;
      if (g.converts_to_distribution(id)) out[id] = detail::reference_rbf(v, sigma, n.support, squared);
    } else {
      detail::normalize_or_uniform(q);
      out[id] = std::move(q);
    }
  }
  RootOutput res;
  res.kind = g.root_kind();
  switch (res.kind) {
    case RootKind::scalar:
      res.value = value[g.root];
      break;
    case RootKind::distribution:
      res.dist = out[g.root];
      break;
    case RootKind::digits:
      for (std::size_t p : g.places) res.places.push_back(out[p]);
      break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Bound checks

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string detail;
};

inline double frobenius_distance(const DenseTensor& a, const DenseTensor& b) {
  if (a.dims() != b.dims()) throw ArgumentError("frobenius_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double max_abs_difference(const DenseTensor& a, const DenseTensor& b) {
  if (a.dims() != b.dims()) throw ArgumentError("max_abs_difference: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// Reconstruction error against the root-sum-square of truncation errors.
inline CheckResult check_reconstruction_bound(const DenseTensor& phi, const TTSketch& s, double slack = 1e-8) {
  CheckResult c;
  c.name = "reconstruction_bound";
  c.measured = frobenius_distance(phi, reconstruct(s));
  double sq = 0.0;
  for (double e : s.truncation_errors()) sq += e * e;
  c.bound = std::sqrt(sq) + slack;
  c.pass = c.measured <= c.bound;
  return c;
}

struct OneHotBoundCheck {
  CheckResult distribution;  // ||phi_oh p - T_oh p|| against sqrt(2) ||p|| floor(4 ||phi - T||^2)^(1/2)
  CheckResult cell_count;    // #{|phi - T| >= 0.5} against floor(4 ||phi - T||^2)
};

/// One-hot output error of an integer-valued summary phi (outputs in
/// 0..output_count-1) against its sketch, for a weight tensor p over the
/// input grid. The sketch's one-hot form rounds each reconstructed entry;
/// values outside the output range give an all-zero row.
inline OneHotBoundCheck check_onehot_bound(const DenseTensor& phi, const TTSketch& s, const DenseTensor& p,
                                   std::size_t output_count, double slack = 1e-8) {
  if (p.dims() != phi.dims()) throw ArgumentError("check_onehot_bound: weight tensor shape mismatch");
  const DenseTensor t = reconstruct(s);
  if (t.dims() != phi.dims()) throw ArgumentError("check_onehot_bound: sketch shape mismatch");
  std::vector<double> diff(output_count, 0.0);
  double sq = 0.0;
  std::size_t far = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double a = phi.data()[i];
    const double b = t.data()[i];
    const double w = p.data()[i];
    sq += (a - b) * (a - b);
    if (std::abs(a - b) >= 0.5) ++far;
    const double ra = std::round(a);
    if (ra < 0 || ra >= static_cast<double>(output_count) || ra != a) {
      throw ArgumentError("check_onehot_bound: summary entries must be integers in the output range");
    }
    diff[static_cast<std::size_t>(ra)] += w;
    const double rb = std::round(b);
    if (rb >= 0 && rb < static_cast<double>(output_count)) diff[static_cast<std::size_t>(rb)] -= w;
  }
  double lhs = 0.0;
  for (double d : diff) lhs += d * d;
  lhs = std::sqrt(lhs);
  const double cells = std::floor(4.0 * sq);
  OneHotBoundCheck out;
  out.distribution.name = "onehot_output_bound";
  out.distribution.measured = lhs;
  out.distribution.bound = std::sqrt(2.0) * frobenius_norm(p) * std::sqrt(cells) + slack;
  out.distribution.pass = lhs <= out.distribution.bound;
  out.cell_count.name = "onehot_cell_count";
  out.cell_count.measured = static_cast<double>(far);
  out.cell_count.bound = cells;
  out.cell_count.pass = static_cast<double>(far) <= cells;
  return out;
}

/// Analytic leaf gradients of a loss against central differences.
inline CheckResult grad_check(const ProgramGraph& g, const std::vector<TTSketch>& sketches,
                              const std::vector<Distribution>& leaves, const Label& label, LossKind kind,
                              double h = 1e-6, double tolerance = 1e-4, const InferenceConfig& inf = {}) {
  auto [out, tape] = forward(g, sketches, leaves, inf);
  RootGrad up;
  loss(out, label, kind, &up);
  const auto grads = backward(g, sketches, tape, up);
  double num = 0.0, den = 0.0;
  auto probe = leaves;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t x = 0; x < leaves[i].size(); ++x) {
      const double x0 = probe[i][x];
      probe[i][x] = x0 + h;
      const double fp = loss(forward(g, sketches, probe, inf).first, label, kind);
      probe[i][x] = x0 - h;
      const double fm = loss(forward(g, sketches, probe, inf).first, label, kind);
      probe[i][x] = x0;
      const double fd = (fp - fm) / (2.0 * h);
      num += (grads[i][x] - fd) * (grads[i][x] - fd);
      den += fd * fd;
    }
  }
  CheckResult c;
  c.name = "gradient";
  c.measured = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
  c.bound = tolerance;
  c.pass = c.measured <= c.bound;
  return c;
}

}  // namespace ctsketch
