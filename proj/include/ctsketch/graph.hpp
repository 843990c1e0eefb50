#pragma once

/** Layered program graphs over a shared sub-program catalog. */

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/program.hpp"

namespace ctsketch {

struct Wire {
  enum class Kind { leaf, node } kind = Kind::leaf;
  std::size_t index = 0;

  static Wire leaf(std::size_t i) { return {Kind::leaf, i}; }
  static Wire node(std::size_t i) { return {Kind::node, i}; }
  bool operator==(const Wire&) const = default;
};

struct Node {
  std::size_t program = 0;
  std::vector<Wire> inputs;
  std::size_t layer = 0;
  /// Number of output symbols seen by consumers; derived from the program's
  /// output set for ONEHOT nodes.
  std::size_t support = 0;
};

enum class GraphFault {
  empty_graph,
  bad_program,
  bad_layer,
  leaf_out_of_range,
  leaf_outside_first_layer,
  forward_wire,
  arity_mismatch,
  domain_mismatch,
  bad_root,
  unreachable_node,
  bad_places,
};

class GraphError : public ConfigError {
 public:
  GraphError(GraphFault fault, const std::string& what) : ConfigError(what), fault_(fault) {}
  GraphFault fault() const noexcept { return fault_; }

 private:
  GraphFault fault_;
};

enum class RootKind { scalar, distribution, digits };

/// A symbolic root result: real for scalar roots, class index for
/// distribution roots, most-significant-first digits for digit roots.
using Label = std::variant<double, std::size_t, std::vector<std::size_t>>;

class ProgramGraph {
 public:
  std::vector<SubProgram> programs;
  std::vector<std::size_t> leaf_domains;
  std::vector<Node> nodes;
  std::size_t root = 0;
  /// Place nodes of a digit-tuple root, least significant first; the last
  /// place is the root and its value >= 10 gives the leading carry digit.
  std::vector<std::size_t> places;
  double sigma = 0.5;
  std::string name;

  std::size_t add_program(SubProgram sp) {
    programs.push_back(std::move(sp));
    return programs.size() - 1;
  }

  std::size_t add_node(std::size_t layer, std::size_t program, std::vector<Wire> inputs, std::size_t support = 0) {
    if (program < programs.size() && programs[program].kind == OutputKind::onehot && support == 0) {
      support = programs[program].output_count;
    }
    nodes.push_back({program, std::move(inputs), layer, support});
    return nodes.size() - 1;
  }

  std::size_t leaf_count() const noexcept { return leaf_domains.size(); }
  std::size_t layer_count() const {
    std::size_t m = 0;
    for (const auto& n : nodes) m = std::max(m, n.layer + 1);
    return m;
  }
  const SubProgram& program_of(std::size_t node) const { return programs.at(nodes.at(node).program); }

  RootKind root_kind() const {
    if (!places.empty()) return RootKind::digits;
    return program_of(root).kind == OutputKind::onehot ? RootKind::distribution : RootKind::scalar;
  }

  /// VALUE nodes whose output feeds a distribution (a consumer or a place)
  /// pass through the RBF conversion.
  bool converts_to_distribution(std::size_t node) const {
    if (program_of(node).kind == OutputKind::onehot) return false;
    return node != root || root_kind() == RootKind::digits;
  }

  std::size_t wire_support(const Wire& w) const {
    return w.kind == Wire::Kind::leaf ? leaf_domains.at(w.index) : nodes.at(w.index).support;
  }

  /// Nodes grouped by layer, in insertion order within a layer.
  std::vector<std::vector<std::size_t>> layers() const {
    std::vector<std::vector<std::size_t>> out(layer_count());
    for (std::size_t i = 0; i < nodes.size(); ++i) out[nodes[i].layer].push_back(i);
    return out;
  }

  /// Execution order: by layer, then by node id.
  std::vector<std::size_t> order() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers()) out.insert(out.end(), l.begin(), l.end());
    return out;
  }

  void validate() const;
};

inline void ProgramGraph::validate() const {
  auto fail = [](GraphFault f, const std::string& msg) { throw GraphError(f, msg); };
  if (nodes.empty()) fail(GraphFault::empty_graph, "graph has no nodes");
  const auto by_layer = layers();
  for (std::size_t l = 0; l < by_layer.size(); ++l) {
    if (by_layer[l].empty()) fail(GraphFault::bad_layer, "layer " + std::to_string(l + 1) + " has no nodes");
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    const std::string where = "node " + std::to_string(i);
    if (n.program >= programs.size()) fail(GraphFault::bad_program, where + ": unknown sub-program");
    const SubProgram& sp = programs[n.program];
    if (n.inputs.size() != sp.arity()) {
      fail(GraphFault::arity_mismatch, where + ": " + sp.name + " takes " + std::to_string(sp.arity()) +
                                           " inputs, got " + std::to_string(n.inputs.size()));
    }
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const Wire& w = n.inputs[k];
      if (w.kind == Wire::Kind::leaf) {
        if (w.index >= leaf_domains.size()) fail(GraphFault::leaf_out_of_range, where + ": leaf wire out of range");
        if (n.layer != 0) fail(GraphFault::leaf_outside_first_layer, where + ": leaf wire outside layer 1");
      } else {
        if (w.index >= nodes.size() || nodes[w.index].layer >= n.layer) {
          fail(GraphFault::forward_wire, where + ": wire to node " + std::to_string(w.index) +
                                             " does not come from an earlier layer");
        }
      }
      if (wire_support(w) != sp.input_domains[k]) {
        fail(GraphFault::domain_mismatch, where + ": input " + std::to_string(k) + " carries " +
                                              std::to_string(wire_support(w)) + " symbols, " + sp.name +
                                              " expects " + std::to_string(sp.input_domains[k]));
      }
    }
  }
  if (root >= nodes.size()) fail(GraphFault::bad_root, "root node out of range");
  for (const auto& n : nodes) {
    for (const auto& w : n.inputs) {
      if (w.kind == Wire::Kind::node && w.index == root) fail(GraphFault::bad_root, "root node feeds another node");
    }
  }
  std::vector<char> reached(nodes.size(), 0);
  std::vector<std::size_t> stack{root};
  reached[root] = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (const auto& w : nodes[i].inputs) {
      if (w.kind == Wire::Kind::node && !reached[w.index]) {
        reached[w.index] = 1;
        stack.push_back(w.index);
      }
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!reached[i]) fail(GraphFault::unreachable_node, "node " + std::to_string(i) + " is not reachable from the root");
  }
  if (!places.empty()) {
    if (places.back() != root) fail(GraphFault::bad_places, "last place must be the root");
    for (std::size_t p : places) {
      if (p >= nodes.size() || nodes[p].support == 0) fail(GraphFault::bad_places, "place node without a symbol range");
    }
  }
}

// ---------------------------------------------------------------------------
// Symbolic evaluation

namespace detail {

inline std::vector<std::size_t> digits_of(const ProgramGraph& g, const std::vector<std::size_t>& symbol) {
  std::vector<std::size_t> out;
  out.push_back(symbol[g.root] >= 10 ? 1 : 0);
  for (std::size_t k = g.places.size(); k-- > 0;) out.push_back(symbol[g.places[k]] % 10);
  return out;
}

}  // namespace detail

/// Run the exact program on concrete leaf symbols. ONEHOT sub-programs may
/// return several outputs (or none), so every consistent branch is reported.
/// VALUE outputs feeding other nodes must be integral symbols in range.
inline void enumerate_outcomes(const ProgramGraph& g, const std::vector<std::size_t>& leaves,
                               const std::function<void(const Label&)>& emit) {
  if (leaves.size() != g.leaf_count()) throw ArgumentError("enumerate_outcomes: wrong number of leaf symbols");
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i] >= g.leaf_domains[i]) throw ArgumentError("enumerate_outcomes: leaf symbol out of range");
  }
  const auto order = g.order();
  const RootKind kind = g.root_kind();
  std::vector<std::size_t> symbol(g.nodes.size(), 0);
  std::vector<std::size_t> args;
  std::function<void(std::size_t)> step = [&](std::size_t pos) {
    if (pos == order.size()) {
      if (kind == RootKind::distribution) emit(Label{symbol[g.root]});
      else emit(Label{detail::digits_of(g, symbol)});
      return;
    }
    const std::size_t id = order[pos];
    const Node& n = g.nodes[id];
    const SubProgram& sp = g.programs[n.program];
    args.resize(n.inputs.size());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const Wire& w = n.inputs[k];
      args[k] = w.kind == Wire::Kind::leaf ? leaves[w.index] : symbol[w.index];
    }
    if (sp.kind == OutputKind::value) {
      const double v = sp.value(args);
      if (id == g.root && kind == RootKind::scalar) {
        emit(Label{v});
        return;
      }
      const double r = std::round(v);
      if (std::abs(v - r) > 1e-9 || r < 0 || r >= static_cast<double>(n.support)) return;
      symbol[id] = static_cast<std::size_t>(r);
      step(pos + 1);
      return;
    }
    std::vector<std::size_t> outs;
    sp.outputs(args, outs);
    for (std::size_t y : outs) {
      symbol[id] = y;
      step(pos + 1);
    }
  };
  step(0);
}

/// The unique outcome of the program on concrete leaves, or nothing when the
/// leaves are inconsistent or ambiguous.
inline std::optional<Label> evaluate(const ProgramGraph& g, const std::vector<std::size_t>& leaves) {
  std::optional<Label> out;
  std::size_t count = 0;
  enumerate_outcomes(g, leaves, [&](const Label& l) {
    if (count++ == 0) out = l;
  });
  if (count != 1) return std::nullopt;
  return out;
}

inline std::string label_string(const Label& l) {
  if (const auto* d = std::get_if<double>(&l)) {
    const double r = std::round(*d);
    return r == *d ? std::to_string(static_cast<long long>(r)) : std::to_string(*d);
  }
  if (const auto* c = std::get_if<std::size_t>(&l)) return std::to_string(*c);
  std::string s;
  for (std::size_t d : std::get<std::vector<std::size_t>>(l)) s += std::to_string(d);
  return s;
}

// ---------------------------------------------------------------------------
// Builtin graphs

/// Tree of sums with arity a_i at layer i; n = product of arities digits.
inline ProgramGraph builtin_sum_split(const std::vector<std::size_t>& arities,
                                      OutputKind intermediate = OutputKind::value,
                                      OutputKind root_kind = OutputKind::value) {
  if (arities.empty()) throw ArgumentError("builtin_sum_split: need at least one layer");
  std::size_t n = 1;
  for (std::size_t a : arities) {
    if (a < 2) throw ArgumentError("builtin_sum_split: every arity must be at least 2");
    n *= a;
  }
  ProgramGraph g;
  g.name = "sum_" + std::to_string(n);
  g.leaf_domains.assign(n, 10);
  std::vector<Wire> current;
  for (std::size_t i = 0; i < n; ++i) current.push_back(Wire::leaf(i));
  std::size_t domain = 10;
  for (std::size_t l = 0; l < arities.size(); ++l) {
    const bool last = l + 1 == arities.size();
    const std::size_t a = arities[l];
    const std::size_t prog = g.add_program(sum_program(std::vector<std::size_t>(a, domain),
                                                       last ? root_kind : intermediate));
    const std::size_t support = g.programs[prog].output_count;
    std::vector<Wire> next;
    for (std::size_t k = 0; k < current.size(); k += a) {
      std::vector<Wire> in(current.begin() + static_cast<std::ptrdiff_t>(k),
                           current.begin() + static_cast<std::ptrdiff_t>(k + a));
      next.push_back(Wire::node(g.add_node(l, prog, std::move(in), last && root_kind == OutputKind::value ? 0 : support)));
    }
    current = std::move(next);
    domain = support;
  }
  g.root = current.front().index;
  return g;
}

/// Binary sum tree over n = 2^k digits.
inline ProgramGraph builtin_sum_tree(std::size_t n, OutputKind intermediate = OutputKind::value,
                                     OutputKind root_kind = OutputKind::value) {
  if (n < 2 || (n & (n - 1)) != 0) throw ArgumentError("builtin_sum_tree: n must be a power of two >= 2");
  return builtin_sum_split(std::vector<std::size_t>(static_cast<std::size_t>(std::countr_zero(n)), 2), intermediate,
                           root_kind);
}

/// Monolithic single-node sum over n digits.
inline ProgramGraph builtin_sum_flat(std::size_t n, OutputKind kind = OutputKind::value) {
  if (n < 2) throw ArgumentError("builtin_sum_flat: n must be at least 2");
  return builtin_sum_split({n}, kind, kind);
}

/// n-digit addition. Leaves 2k and 2k+1 are digit k (least significant
/// first) of the two operands.
inline ProgramGraph builtin_carry_add(std::size_t n_digits, OutputKind intermediate = OutputKind::value) {
  if (n_digits == 0) throw ArgumentError("builtin_carry_add: need at least one digit");
  ProgramGraph g;
  g.name = "add_" + std::to_string(n_digits);
  g.leaf_domains.assign(2 * n_digits, 10);
  const bool chain = n_digits > 1;
  const std::size_t place_prog = g.add_program(sum_program({10, 10}, intermediate));
  std::vector<std::size_t> sums;
  for (std::size_t k = 0; k < n_digits; ++k) {
    // The lowest place sum also enters a carry node as its 20-symbol carry input.
    const std::size_t support = k == 0 && chain ? 20 : 19;
    sums.push_back(g.add_node(0, place_prog, {Wire::leaf(2 * k), Wire::leaf(2 * k + 1)}, support));
  }
  if (!chain) {
    g.nodes[sums[0]].support = 19;
    g.root = sums[0];
    g.places = {sums[0]};
    return g;
  }
  if (intermediate == OutputKind::onehot) {
    // The 20-symbol view of the lowest place needs its own output set.
    SubProgram low = sum_program({10, 10}, OutputKind::onehot);
    low.name = "sum_10_10_wide";
    low.output_count = 20;
    low.descriptor["output_count"] = 20;
    g.nodes[sums[0]].program = g.add_program(std::move(low));
    g.nodes[sums[0]].support = 20;
    for (std::size_t k = 1; k < n_digits; ++k) g.nodes[sums[k]].support = 19;
  }
  const std::size_t carry = g.add_program(carry_add_program(intermediate));
  g.places.push_back(sums[0]);
  std::size_t prev = sums[0];
  for (std::size_t k = 1; k < n_digits; ++k) {
    prev = g.add_node(k, carry, {Wire::node(sums[k]), Wire::node(prev)}, 20);
    g.places.push_back(prev);
  }
  g.root = prev;
  return g;
}

/// Cell pairs sharing a row, column, or block on an N x N board (N = 4 or 9).
inline std::vector<std::pair<std::size_t, std::size_t>> sudoku_pairs(std::size_t n) {
  if (n != 4 && n != 9) throw ArgumentError("sudoku_pairs: N must be 4 or 9");
  const std::size_t b = n == 4 ? 2 : 3;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n * n; ++i) {
    for (std::size_t j = i + 1; j < n * n; ++j) {
      const std::size_t ri = i / n, ci = i % n, rj = j / n, cj = j % n;
      if (ri == rj || ci == cj || (ri / b == rj / b && ci / b == cj / b)) out.emplace_back(i, j);
    }
  }
  return out;
}

/// The eight other cells sharing cell's row, column, and block on a 9x9
/// board, in that group order.
inline std::array<std::array<std::size_t, 8>, 3> sudoku_cell_groups(std::size_t cell) {
  if (cell >= 81) throw ArgumentError("sudoku_cell_groups: cell index out of range");
  const std::size_t r = cell / 9, c = cell % 9, br = r / 3 * 3, bc = c / 3 * 3;
  std::array<std::array<std::size_t, 8>, 3> out{};
  std::size_t k[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 9; ++i) {
    if (i != c) out[0][k[0]++] = r * 9 + i;
    if (i != r) out[1][k[1]++] = i * 9 + c;
    const std::size_t b = (br + i / 3) * 9 + bc + i % 3;
    if (b != cell) out[2][k[2]++] = b;
  }
  return out;
}

/// Board validity: equality checks over all constrained pairs, reduced by a
/// balanced OR tree and negated at the root. Root output 1 means valid.
inline ProgramGraph builtin_visudo(std::size_t n) {
  ProgramGraph g;
  g.name = "visudo_" + std::to_string(n);
  const auto pairs = sudoku_pairs(n);
  g.leaf_domains.assign(n * n, n);
  const std::size_t eq = g.add_program(equality_program(n));
  const std::size_t orp = g.add_program(or_program());
  const std::size_t nor = g.add_program(nor_program());
  const std::size_t notp = g.add_program(not_program());
  std::vector<std::size_t> pending;
  for (auto [a, b] : pairs) pending.push_back(g.add_node(0, eq, {Wire::leaf(a), Wire::leaf(b)}));
  std::size_t layer = 1;
  while (pending.size() > 2) {
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k + 1 < pending.size(); k += 2) {
      next.push_back(g.add_node(layer, orp, {Wire::node(pending[k]), Wire::node(pending[k + 1])}));
    }
    if (pending.size() % 2 == 1) next.push_back(pending.back());
    pending = std::move(next);
    ++layer;
  }
  if (pending.size() == 2) {
    g.root = g.add_node(layer, nor, {Wire::node(pending[0]), Wire::node(pending[1])});
  } else {
    g.root = g.add_node(layer, notp, {Wire::node(pending[0])});
  }
  return g;
}

/// One sketch per sub-program of the catalog, in catalog order.
inline std::vector<TTSketch> sketch_graph(const ProgramGraph& g, const std::vector<SketchConfig>& per_program) {
  if (per_program.size() != g.programs.size()) throw ArgumentError("sketch_graph: one config per sub-program expected");
  std::vector<TTSketch> out;
  for (std::size_t i = 0; i < g.programs.size(); ++i) out.push_back(sketch_program(g.programs[i], per_program[i]));
  return out;
}

inline std::vector<TTSketch> sketch_graph(const ProgramGraph& g, const SketchConfig& cfg) {
  return sketch_graph(g, std::vector<SketchConfig>(g.programs.size(), cfg));
}

/// Single-node graph around one sub-program, one leaf per input.
inline ProgramGraph single_node_graph(SubProgram sp) {
  ProgramGraph g;
  g.name = sp.name;
  g.leaf_domains = sp.input_domains;
  std::vector<Wire> in;
  for (std::size_t i = 0; i < sp.arity(); ++i) in.push_back(Wire::leaf(i));
  const std::size_t p = g.add_program(std::move(sp));
  g.root = g.add_node(0, p, std::move(in));
  return g;
}

inline ProgramGraph builtin_hwf(std::size_t length) { return single_node_graph(hwf_program(length)); }
inline ProgramGraph builtin_sudoku_cell_graph() { return single_node_graph(sudoku_cell_program()); }

}  // namespace ctsketch
