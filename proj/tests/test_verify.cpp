#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctsketch/verify.hpp"
#include "oracles.hpp"

using namespace ctsketch;
using oracle::one_hot;

namespace {

std::vector<Distribution> random_leaves(const std::vector<std::size_t>& domains, std::mt19937_64& rng) {
  std::vector<Distribution> out;
  for (std::size_t d : domains) out.push_back(oracle::random_distribution(d, rng));
  return out;
}

// Random ONEHOT table program: each tuple maps to a random subset of outputs.
SubProgram random_table(std::vector<std::size_t> domains, std::size_t outputs, std::mt19937_64& rng) {
  TableEntries e;
  std::vector<std::size_t> r(domains.size(), 0);
  do {
    std::vector<std::size_t> set;
    for (std::size_t y = 0; y < outputs; ++y) {
      if (rng() % 3 == 0) set.push_back(y);
    }
    e.sets[r] = set;
  } while (next_index(r, domains));
  return table_program("random", std::move(domains), OutputKind::onehot, outputs, std::move(e));
}

}  // namespace

TEST(WmcExact, OneHotInputsGivePointMass) {
  const auto sp = sum_program({10, 10}, OutputKind::onehot);
  const auto r = wmc_exact(sp, {one_hot(10, 3), one_hot(10, 8)});
  ASSERT_EQ(r.distribution.size(), 19u);
  EXPECT_EQ(r.distribution[11], 1.0);
  EXPECT_EQ(r.tuples_visited, 1u);
  const auto v = wmc_exact(sum_program({10, 10}), {one_hot(10, 3), one_hot(10, 8)});
  EXPECT_EQ(v.expectation, 11.0);
}

TEST(WmcExact, UniformTwoDigitSum) {
  const auto r = wmc_exact(sum_program({10, 10}, OutputKind::onehot), {Distribution(10, 0.1), Distribution(10, 0.1)});
  EXPECT_NEAR(r.distribution[0], 0.01, 1e-15);
  EXPECT_NEAR(r.distribution[9], 0.10, 1e-15);
  EXPECT_EQ(r.tuples_visited, 100u);
}

TEST(WmcExact, MatchesIndicatorTensorForm) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t d = 1 + rng() % 3;
    std::vector<std::size_t> dom(d);
    for (auto& x : dom) x = 2 + rng() % 4;
    const std::size_t outputs = 2 + rng() % 4;
    const auto sp = random_table(dom, outputs, rng);
    const auto p = random_leaves(dom, rng);
    // phi^OH contracted with the outer product of the inputs, then normalized.
    const auto phi = build_summary(sp);
    std::vector<double> q(outputs, 0.0);
    std::vector<std::size_t> idx(d + 1, 0);
    auto full = dom;
    full.push_back(outputs);
    do {
      double w = phi.at(idx);
      for (std::size_t i = 0; i < d; ++i) w *= p[i][idx[i]];
      q[idx[d]] += w;
    } while (next_index(idx, full));
    double s = 0.0;
    for (double x : q) s += x;
    const auto r = wmc_exact(sp, p);
    for (std::size_t y = 0; y < outputs; ++y) {
      EXPECT_NEAR(r.distribution[y], s > 0 ? q[y] / s : 1.0 / static_cast<double>(outputs), 1e-12);
    }
  }
}

TEST(WmcExact, SkipsZeroProbabilitySymbols) {
  const auto g = builtin_sum_tree(4);
  std::vector<Distribution> leaves(4, one_hot(10, 2));
  leaves[0] = Distribution{0, 0.5, 0.5, 0, 0, 0, 0, 0, 0, 0};
  const auto r = wmc_exact(g, leaves);
  EXPECT_EQ(r.tuples_visited, 2u);
  EXPECT_NEAR(r.expectation, 7.5, 1e-12);
}

TEST(WmcExact, BudgetExceeded) {
  const auto g = builtin_sum_tree(8);
  const std::vector<Distribution> leaves(8, Distribution(10, 0.1));
  EXPECT_THROW(wmc_exact(g, leaves), ResourceError);
  EXPECT_THROW(wmc_exact(g, {leaves.begin(), leaves.begin() + 3}), ArgumentError);
}

TEST(WmcExact, DecompositionSoundness) {
  std::mt19937_64 rng(22);
  // sum_4: tree against a flat four-input sum.
  {
    const auto tree = builtin_sum_tree(4, OutputKind::onehot, OutputKind::onehot);
    const auto flat = single_node_graph(sum_program({10, 10, 10, 10}, OutputKind::onehot));
    for (int t = 0; t < 20; ++t) {
      const auto p = random_leaves(tree.leaf_domains, rng);
      const auto a = wmc_exact(tree, p);
      const auto b = wmc_exact(flat, p);
      EXPECT_LE(oracle::total_variation(a.distribution, b.distribution), 1e-9);
    }
  }
  // add_2: carry chain against a monolithic two-number adder.
  {
    const auto chain = builtin_carry_add(2);
    TableEntries e;
    std::vector<std::size_t> r(4, 0);
    const std::vector<std::size_t> dom(4, 10);
    do {
      e.sets[r] = {r[0] + r[1] + 10 * (r[2] + r[3])};
    } while (next_index(r, dom));
    const auto mono = single_node_graph(table_program("add_2", dom, OutputKind::onehot, 199, std::move(e)));
    for (int t = 0; t < 10; ++t) {
      const auto p = random_leaves(chain.leaf_domains, rng);
      const auto a = wmc_exact(chain, p);
      const auto b = wmc_exact(mono, p);
      std::vector<double> from_digits(199, 0.0);
      for (const auto& [digits, w] : a.tuples) from_digits[digits[0] * 100 + digits[1] * 10 + digits[2]] += w;
      EXPECT_LE(oracle::total_variation(from_digits, b.distribution), 1e-9);
      double e_mono = 0.0;
      for (std::size_t y = 0; y < 199; ++y) e_mono += b.distribution[y] * static_cast<double>(y);
      EXPECT_NEAR(a.expectation, e_mono, 1e-9);
    }
  }
  // visudo_4: comparison graph against a direct validity check. Leaves are
  // restricted to two symbols per cell to keep the joint grid at 2^16.
  {
    const auto g = builtin_visudo(4);
    const auto pairs = sudoku_pairs(4);
    auto valid = [&](const std::vector<std::size_t>& b) {
      for (const auto& [i, j] : pairs) {
        if (b[i] == b[j]) return false;
      }
      return true;
    };
    const std::vector<std::size_t> solution{0, 1, 2, 3, 2, 3, 0, 1, 1, 0, 3, 2, 3, 2, 1, 0};
    for (int t = 0; t < 5; ++t) {
      std::vector<Distribution> p(16, Distribution(4, 0.0));
      for (std::size_t c = 0; c < 16; ++c) {
        const double w = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        p[c][solution[c]] = w;
        p[c][(solution[c] + 1 + rng() % 3) % 4] = 1.0 - w;
      }
      const auto a = wmc_exact(g, p);
      double pv = 0.0;
      std::vector<std::size_t> pos(16, 0), b(16);
      const std::vector<std::size_t> two(16, 2);
      do {
        double w = 1.0;
        for (std::size_t c = 0; c < 16; ++c) {
          std::size_t seen = 0;
          for (std::size_t x = 0; x < 4; ++x) {
            if (p[c][x] == 0.0) continue;
            if (seen++ == pos[c]) b[c] = x;
          }
          w *= p[c][b[c]];
        }
        if (valid(b)) pv += w;
      } while (next_index(pos, two));
      EXPECT_NEAR(a.distribution[1], pv, 1e-9);
      EXPECT_NEAR(a.distribution[0], 1.0 - pv, 1e-9);
    }
  }
}

TEST(WmcLayered, MatchesFullRankForward) {
  std::mt19937_64 rng(23);
  for (const auto& g : {builtin_sum_tree(4), builtin_carry_add(2), builtin_hwf(3), builtin_visudo(4)}) {
    const auto s = sketch_graph(g, SketchConfig::full());
    for (int t = 0; t < 5; ++t) {
      const auto p = random_leaves(g.leaf_domains, rng);
      const auto a = forward(g, s, p).first;
      const auto b = wmc_layered(g, p, 0.5);
      EXPECT_NEAR(a.value, b.value, 1e-9);
      EXPECT_LE(oracle::total_variation(a.dist, b.dist), 1e-9);
      ASSERT_EQ(a.places.size(), b.places.size());
      for (std::size_t k = 0; k < a.places.size(); ++k) EXPECT_LE(oracle::total_variation(a.places[k], b.places[k]), 1e-9);
    }
  }
}

TEST(Checks, ReconstructionBound) {
  std::mt19937_64 rng(24);
  for (int t = 0; t < 20; ++t) {
    const Shape dims{2 + rng() % 4, 2 + rng() % 4, 2 + rng() % 4};
    DenseTensor phi(dims, oracle::random_vector(checked_product(dims), rng));
    const auto s = tt_svd(phi, SketchConfig::with_rank(1 + rng() % 3));
    const auto c = check_reconstruction_bound(phi, s);
    EXPECT_TRUE(c.pass) << c.measured << " > " << c.bound;
  }
}

TEST(Checks, OneHotOutputBound) {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 30; ++t) {
    const Shape dims{2 + rng() % 4, 2 + rng() % 4, 2 + rng() % 3};
    const std::size_t outputs = 3 + rng() % 6;
    std::vector<double> v(checked_product(dims));
    for (double& x : v) x = static_cast<double>(rng() % outputs);
    DenseTensor phi(dims, v);
    DenseTensor p(dims, oracle::random_vector(v.size(), rng, 0.0, 1.0));
    const auto s = tt_svd(phi, SketchConfig::with_rank(1 + rng() % 3));
    const auto c = check_onehot_bound(phi, s, p, outputs);
    EXPECT_TRUE(c.distribution.pass) << c.distribution.measured << " > " << c.distribution.bound;
    EXPECT_TRUE(c.cell_count.pass) << c.cell_count.measured << " > " << c.cell_count.bound;
  }
}

TEST(Checks, OneHotBoundRejectsNonIntegerSummary) {
  DenseTensor phi({2, 2}, {0.0, 1.5, 1.0, 0.0});
  const auto s = tt_svd(phi, SketchConfig::full());
  EXPECT_THROW(check_onehot_bound(phi, s, phi, 3), ArgumentError);
}

TEST(Checks, GradientCheck) {
  std::mt19937_64 rng(26);
  const auto g = builtin_sum_tree(4);
  const auto s = sketch_graph(g, SketchConfig::with_rank(2));
  const auto c = grad_check(g, s, random_leaves(g.leaf_domains, rng), Label{13.0}, LossKind::l1);
  EXPECT_TRUE(c.pass) << c.measured;
}
