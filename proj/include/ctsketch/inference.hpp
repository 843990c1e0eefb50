#pragma once

/** Layered inference through sketched summaries and its reverse pass.
 *
 *  Every contraction is multilinear in the input distributions, so the
 *  gradient with respect to one input is the same chain with that input's
 *  slot left open. */

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/graph.hpp"
#include "ctsketch/sketch.hpp"

namespace ctsketch {

using Distribution = std::vector<double>;

struct RBFConfig {
  double sigma = 0.5;
  std::size_t support = 0;
  /// Use (v - j)^2 in the exponent instead of |v - j|.
  bool squared = false;
};

namespace detail {

inline void check_rbf(double v, const RBFConfig& cfg) {
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) throw ArgumentError("rbf: sigma must be positive");
  if (cfg.support == 0) throw ArgumentError("rbf: support must be positive");
  if (!std::isfinite(v)) throw NumericError("rbf: non-finite value " + std::to_string(v));
}

inline double rbf_exponent(double v, double j, const RBFConfig& cfg) {
  const double d = v - j;
  return -(cfg.squared ? d * d : std::abs(d)) / (2.0 * cfg.sigma * cfg.sigma);
}

// d exponent / dv
inline double rbf_exponent_slope(double v, double j, const RBFConfig& cfg) {
  const double d = v - j;
  const double scale = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  if (cfg.squared) return -2.0 * d * scale;
  return d > 0 ? -scale : (d < 0 ? scale : 0.0);
}

}  // namespace detail

/// Distribution over 0..support-1 proportional to the RBF weight of each
/// symbol around v.
inline Distribution rbf_normalize(double v, const RBFConfig& cfg) {
  detail::check_rbf(v, cfg);
  Distribution p(cfg.support);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cfg.support; ++j) {
    p[j] = detail::rbf_exponent(v, static_cast<double>(j), cfg);
    top = std::max(top, p[j]);
  }
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - top);
    z += x;
  }
  for (double& x : p) x /= z;
  return p;
}

/// dL/dv given p = rbf_normalize(v) and dL/dp.
inline double rbf_backward(double v, const RBFConfig& cfg, const Distribution& p, std::span<const double> grad_p) {
  double mean_slope = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) mean_slope += p[j] * detail::rbf_exponent_slope(v, static_cast<double>(j), cfg);
  double g = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    g += grad_p[j] * p[j] * (detail::rbf_exponent_slope(v, static_cast<double>(j), cfg) - mean_slope);
  }
  return g;
}

namespace detail {

using InputRefs = std::vector<const Distribution*>;

inline void check_inputs(const TTSketch& s, const InputRefs& in, std::size_t expected) {
  if (in.size() != expected) {
    throw ArgumentError("contract: expected " + std::to_string(expected) + " input distributions, got " +
                        std::to_string(in.size()));
  }
  for (std::size_t j = 0; j < in.size(); ++j) {
    if (in[j]->size() != s.source_dims()[j]) {
      throw ArgumentError("contract: input " + std::to_string(j) + " has " + std::to_string(in[j]->size()) +
                          " entries, sketch axis has " + std::to_string(s.source_dims()[j]));
    }
  }
}

/// Left partial products w_0 = [1], w_j = w_{j-1} . (core_j contracted with p_j).
inline std::vector<std::vector<double>> left_partials(const TTSketch& s, const InputRefs& in) {
  std::vector<std::vector<double>> w;
  w.reserve(in.size() + 1);
  w.push_back({1.0});
  for (std::size_t j = 0; j < in.size(); ++j) {
    const auto& core = s.core(j);
    const std::size_t rin = core.dim(0), n = core.dim(1), rout = core.dim(2);
    const auto g = core.data();
    const auto& p = *in[j];
    const auto& prev = w.back();
    std::vector<double> next(rout, 0.0);
    for (std::size_t a = 0; a < rin; ++a) {
      if (prev[a] == 0.0) continue;
      for (std::size_t x = 0; x < n; ++x) {
        const double c = prev[a] * p[x];
        if (c == 0.0) continue;
        const double* row = g.data() + (a * n + x) * rout;
        for (std::size_t b = 0; b < rout; ++b) next[b] += c * row[b];
      }
    }
    w.push_back(std::move(next));
  }
  return w;
}

/// Given the cotangent of the last partial (size r_d), accumulate the
/// gradient with respect to each input into grads[j].
inline void right_sweep(const TTSketch& s, const InputRefs& in, const std::vector<std::vector<double>>& w,
                        std::vector<double> u, std::vector<std::vector<double>>& grads) {
  for (std::size_t j = in.size(); j-- > 0;) {
    const auto& core = s.core(j);
    const std::size_t rin = core.dim(0), n = core.dim(1), rout = core.dim(2);
    const auto g = core.data();
    const auto& p = *in[j];
    std::vector<double> prev(rin, 0.0);
    auto& gj = grads[j];
    for (std::size_t a = 0; a < rin; ++a) {
      for (std::size_t x = 0; x < n; ++x) {
        const double* row = g.data() + (a * n + x) * rout;
        double t = 0.0;
        for (std::size_t b = 0; b < rout; ++b) t += row[b] * u[b];
        gj[x] += w[j][a] * t;
        prev[a] += p[x] * t;
      }
    }
    u = std::move(prev);
  }
}

inline InputRefs refs(const std::vector<Distribution>& inputs) {
  InputRefs r;
  for (const auto& p : inputs) r.push_back(&p);
  return r;
}

/// Output-axis contraction of the last core: q[y] = sum_a w[a] G[a, y, 0].
inline std::vector<double> output_axis(const TTSketch& s, const std::vector<double>& w) {
  const auto& core = s.core(s.order() - 1);
  const std::size_t rin = core.dim(0), n = core.dim(1);
  const auto g = core.data();
  std::vector<double> q(n, 0.0);
  for (std::size_t a = 0; a < rin; ++a) {
    for (std::size_t y = 0; y < n; ++y) q[y] += w[a] * g[a * n + y];
  }
  return q;
}

/// Clamp at zero and L1-normalize; an all-zero vector becomes uniform.
inline Distribution clamp_normalize(const std::vector<double>& q, double& norm, bool& uniform) {
  Distribution p(q.size());
  norm = 0.0;
  for (std::size_t y = 0; y < q.size(); ++y) {
    p[y] = std::max(q[y], 0.0);
    norm += p[y];
  }
  uniform = !(norm > 0.0);
  if (uniform) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
  } else {
    for (double& x : p) x /= norm;
  }
  return p;
}

}  // namespace detail

/// Expected program value under independent input distributions, contracted
/// core by core.
inline double contract_value(const TTSketch& s, const std::vector<Distribution>& inputs) {
  const auto in = detail::refs(inputs);
  detail::check_inputs(s, in, s.order());
  return detail::left_partials(s, in).back()[0];
}

/// Output distribution of a one-hot summary sketch: input axes first, output
/// axis last, then clamp and normalize. `uniform_fallback` reports whether
/// the contraction vanished.
inline Distribution contract_onehot(const TTSketch& s, const std::vector<Distribution>& inputs,
                                    bool* uniform_fallback = nullptr) {
  const auto in = detail::refs(inputs);
  if (s.order() < 2) throw ArgumentError("contract_onehot: sketch has no output axis");
  detail::check_inputs(s, in, s.order() - 1);
  const auto q = detail::output_axis(s, detail::left_partials(s, in).back());
  double norm = 0.0;
  bool uniform = false;
  auto p = detail::clamp_normalize(q, norm, uniform);
  if (uniform_fallback) *uniform_fallback = uniform;
  return p;
}

// ---------------------------------------------------------------------------
// Graph forward / backward

struct InferenceConfig {
  std::optional<double> sigma;  // defaults to the graph's sigma
  bool squared = false;
};

struct RootOutput {
  RootKind kind = RootKind::scalar;
  double value = 0.0;                // scalar roots
  Distribution dist;                 // distribution roots
  std::vector<Distribution> places;  // digit roots, least significant first
};

using RootGrad = RootOutput;

struct NodeRecord {
  std::size_t node = 0;
  std::vector<std::vector<double>> partials;  // w_0..w_d over the input axes
  std::vector<double> pre;                    // one-hot output before normalization
  double value = 0.0;                         // VALUE contraction result
  double norm = 0.0;                          // sum of the clamped one-hot output
  bool uniform = false;                       // one-hot output vanished
  Distribution output;                        // distribution handed to consumers
};

struct TraceTape {
  std::vector<Distribution> leaves;
  std::vector<NodeRecord> records;  // execution order
  double sigma = 0.5;
  bool squared = false;
};

namespace detail {

inline void check_sketches(const ProgramGraph& g, const std::vector<TTSketch>& sketches) {
  if (sketches.size() != g.programs.size()) {
    throw ConfigError("forward: " + std::to_string(sketches.size()) + " sketches for " +
                      std::to_string(g.programs.size()) + " sub-programs");
  }
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    if (sketches[i].source_dims() != g.programs[i].summary_shape()) {
      throw ConfigError("forward: sketch for " + g.programs[i].name + " has dims " +
                        shape_string(sketches[i].source_dims()) + ", expected " +
                        shape_string(g.programs[i].summary_shape()));
    }
  }
}

inline const Distribution& wire_dist(const TraceTape& tape, const std::vector<std::size_t>& record_of, const Wire& w) {
  return w.kind == Wire::Kind::leaf ? tape.leaves[w.index] : tape.records[record_of[w.index]].output;
}

inline std::vector<std::size_t> record_index(const ProgramGraph& g, const TraceTape& tape) {
  std::vector<std::size_t> idx(g.nodes.size(), g.nodes.size());
  for (std::size_t r = 0; r < tape.records.size(); ++r) idx.at(tape.records[r].node) = r;
  return idx;
}

}  // namespace detail

inline std::pair<RootOutput, TraceTape> forward(const ProgramGraph& g, const std::vector<TTSketch>& sketches,
                                                std::vector<Distribution> leaves, const InferenceConfig& cfg = {}) {
  detail::check_sketches(g, sketches);
  if (leaves.size() != g.leaf_count()) {
    throw ConfigError("forward: " + std::to_string(leaves.size()) + " leaf distributions for " +
                      std::to_string(g.leaf_count()) + " leaves");
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].size() != g.leaf_domains[i]) throw ConfigError("forward: leaf " + std::to_string(i) + " has wrong size");
  }
  TraceTape tape;
  tape.leaves = std::move(leaves);
  tape.sigma = cfg.sigma.value_or(g.sigma);
  tape.squared = cfg.squared;
  std::vector<std::size_t> record_of(g.nodes.size(), g.nodes.size());
  for (std::size_t id : g.order()) {
    const Node& n = g.nodes[id];
    const SubProgram& sp = g.programs[n.program];
    const TTSketch& s = sketches[n.program];
    detail::InputRefs in;
    for (const Wire& w : n.inputs) {
      if (w.kind == Wire::Kind::node && record_of[w.index] == g.nodes.size()) {
        throw ConfigError("forward: node " + std::to_string(id) + " reads a node that has not run");
      }
      in.push_back(&detail::wire_dist(tape, record_of, w));
    }
    NodeRecord rec;
    rec.node = id;
    if (sp.kind == OutputKind::value) {
      detail::check_inputs(s, in, s.order());
      rec.partials = detail::left_partials(s, in);
      rec.value = rec.partials.back()[0];
      if (g.converts_to_distribution(id)) {
        rec.output = rbf_normalize(rec.value, {tape.sigma, n.support, tape.squared});
      }
    } else {
      detail::check_inputs(s, in, s.order() - 1);
      rec.partials = detail::left_partials(s, in);
      rec.pre = detail::output_axis(s, rec.partials.back());
      rec.output = detail::clamp_normalize(rec.pre, rec.norm, rec.uniform);
    }
    record_of[id] = tape.records.size();
    tape.records.push_back(std::move(rec));
  }
  RootOutput out;
  out.kind = g.root_kind();
  const NodeRecord& root = tape.records[record_of[g.root]];
  switch (out.kind) {
    case RootKind::scalar:
      out.value = root.value;
      break;
    case RootKind::distribution:
      out.dist = root.output;
      break;
    case RootKind::digits:
      for (std::size_t p : g.places) out.places.push_back(tape.records[record_of[p]].output);
      break;
  }
  return {std::move(out), std::move(tape)};
}

/// Gradients of the loss with respect to every leaf distribution.
inline std::vector<Distribution> backward(const ProgramGraph& g, const std::vector<TTSketch>& sketches,
                                          const TraceTape& tape, const RootGrad& upstream) {
  if (tape.records.size() != g.nodes.size() || tape.leaves.size() != g.leaf_count()) {
    throw InternalError("backward: tape does not belong to this graph");
  }
  const auto record_of = detail::record_index(g, tape);
  for (std::size_t i : record_of) {
    if (i == g.nodes.size()) throw InternalError("backward: tape is missing a node");
  }
  std::vector<Distribution> leaf_grad(g.leaf_count());
  for (std::size_t i = 0; i < leaf_grad.size(); ++i) leaf_grad[i].assign(g.leaf_domains[i], 0.0);
  std::vector<Distribution> out_grad(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) out_grad[i].assign(tape.records[record_of[i]].output.size(), 0.0);
  double root_value_grad = 0.0;
  auto add_into = [](Distribution& dst, const Distribution& src) {
    if (src.size() != dst.size()) throw InternalError("backward: upstream gradient has the wrong size");
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
  };
  switch (g.root_kind()) {
    case RootKind::scalar:
      root_value_grad = upstream.value;
      break;
    case RootKind::distribution:
      add_into(out_grad[g.root], upstream.dist);
      break;
    case RootKind::digits:
      if (upstream.places.size() != g.places.size()) throw InternalError("backward: wrong number of place gradients");
      for (std::size_t k = 0; k < g.places.size(); ++k) add_into(out_grad[g.places[k]], upstream.places[k]);
      break;
  }

  for (std::size_t r = tape.records.size(); r-- > 0;) {
    const NodeRecord& rec = tape.records[r];
    const Node& n = g.nodes[rec.node];
    const SubProgram& sp = g.programs[n.program];
    const TTSketch& s = sketches.at(n.program);
    const Distribution& dout = out_grad[rec.node];
    std::vector<double> cot;
    bool any = false;
    if (sp.kind == OutputKind::value) {
      double dv = rec.node == g.root && !g.converts_to_distribution(rec.node) ? root_value_grad : 0.0;
      if (g.converts_to_distribution(rec.node)) {
        dv = rbf_backward(rec.value, {tape.sigma, n.support, tape.squared}, rec.output, dout);
      }
      cot = {dv};
      any = dv != 0.0;
    } else {
      if (rec.uniform) continue;
      double mean = 0.0;
      for (std::size_t y = 0; y < dout.size(); ++y) mean += dout[y] * rec.output[y];
      const auto& last = s.core(s.order() - 1);
      const std::size_t rin = last.dim(0), ny = last.dim(1);
      const auto gl = last.data();
      cot.assign(rin, 0.0);
      for (std::size_t y = 0; y < ny; ++y) {
        if (!(rec.pre[y] > 0.0)) continue;
        const double dq = (dout[y] - mean) / rec.norm;
        if (dq == 0.0) continue;
        any = true;
        for (std::size_t a = 0; a < rin; ++a) cot[a] += gl[a * ny + y] * dq;
      }
    }
    if (!any) continue;
    detail::InputRefs in;
    std::vector<std::vector<double>> grads;
    for (const Wire& w : n.inputs) {
      in.push_back(&detail::wire_dist(tape, record_of, w));
      grads.emplace_back(in.back()->size(), 0.0);
    }
    detail::right_sweep(s, in, rec.partials, std::move(cot), grads);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const Wire& w = n.inputs[k];
      Distribution& dst = w.kind == Wire::Kind::leaf ? leaf_grad[w.index] : out_grad[w.index];
      for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += grads[k][x];
    }
  }
  return leaf_grad;
}

/// Per-cell value beliefs for a 9x9 board from 3 x 81 instances of the cell
/// constraint sketch. Board distributions have 10 entries (0 = unfilled);
/// beliefs cover values 1..9 as indices 0..8.
struct SudokuCellBeliefs {
  std::vector<std::array<Distribution, 3>> groups;  // row, column, block
  std::vector<Distribution> merged;                 // normalized product of the three
};

inline SudokuCellBeliefs sudoku_cell_beliefs(const TTSketch& cell, const std::vector<Distribution>& board) {
  if (board.size() != 81) throw ArgumentError("sudoku_cell_beliefs: expected 81 cell distributions");
  SudokuCellBeliefs out;
  out.groups.resize(81);
  out.merged.resize(81);
  std::vector<Distribution> in(8);
  for (std::size_t i = 0; i < 81; ++i) {
    const auto groups = sudoku_cell_groups(i);
    std::vector<double> prod(9, 1.0);
    for (std::size_t g = 0; g < 3; ++g) {
      for (std::size_t k = 0; k < 8; ++k) in[k] = board[groups[g][k]];
      out.groups[i][g] = contract_onehot(cell, in);
      for (std::size_t v = 0; v < 9; ++v) prod[v] *= out.groups[i][g][v];
    }
    double norm = 0.0;
    bool uniform = false;
    out.merged[i] = detail::clamp_normalize(prod, norm, uniform);
  }
  return out;
}

/// Index of the first maximum.
inline std::size_t argmax(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace ctsketch
