#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ctsketch/learn.hpp"
#include "oracles.hpp"

using namespace ctsketch;

namespace {

struct Fixture {
  Task task;
  SyntheticSymbols symbols;
  std::vector<TTSketch> sketches;
};

Fixture make_fixture(const std::string& name, std::size_t rank, std::uint64_t seed = 0) {
  Task t = task_by_name(name);
  SyntheticSymbols sym(t.class_count, seed);
  auto sk = sketch_graph(t.graph, SketchConfig::with_rank(rank));
  return {std::move(t), std::move(sym), std::move(sk)};
}

}  // namespace

TEST(Model, ZeroWeightsGiveUniform) {
  const auto m = PerceptualModel::linear(16, 10);
  const std::vector<double> x(16, 0.7);
  for (double p : apply_model(m, x)) EXPECT_NEAR(p, 0.1, 1e-15);
  const auto h = PerceptualModel::mlp(16, 8, 10);
  for (double p : apply_model(h, x)) EXPECT_NEAR(p, 0.1, 1e-15);
}

TEST(Model, SoftmaxRatio) {
  auto m = PerceptualModel::linear(3, 10);
  // bias of class 0 = 1, everything else 0
  m.theta[10 * 3] = 1.0;
  const auto p = apply_model(m, std::vector<double>{0.3, -1.0, 2.0});
  EXPECT_NEAR(p[0] / p[1], std::exp(1.0), 1e-12);
  for (double v : p) EXPECT_GT(v, 0.0);
}

TEST(Model, DimensionMismatch) {
  const auto m = PerceptualModel::linear(4, 3);
  EXPECT_THROW(apply_model(m, std::vector<double>(5, 0.0)), ArgumentError);
  EXPECT_THROW(PerceptualModel::linear(0, 3), ArgumentError);
  EXPECT_THROW(Optimizer(OptimizerConfig::adam(-1.0)), ConfigError);
}

TEST(Model, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (auto m : {PerceptualModel::linear(5, 4), PerceptualModel::mlp(5, 6, 4)}) {
    m.randomize(7, 0.5);
    const auto x = oracle::random_vector(5, rng);
    const auto w = oracle::random_vector(4, rng);
    auto f = [&](const std::vector<double>& th) {
      PerceptualModel c = m;
      c.theta = th;
      const auto p = apply_model(c, x);
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += w[i] * p[i];
      return s;
    };
    std::vector<double> g(m.theta.size(), 0.0);
    model_backward(m, x, apply_model(m, x), w, g);
    EXPECT_LT(oracle::relative_l2(g, oracle::central_difference(f, m.theta, 1e-6)), 1e-6);
  }
}

TEST(Model, SupervisedBaselineAtLeast99Percent) {
  const SyntheticSymbols sym(10, 0);
  const auto train = make_symbol_data(sym, 3000, 1);
  const auto test = make_symbol_data(sym, 2000, 2);
  auto m = train_supervised(PerceptualModel::linear(sym.dim(), 10), train, 10, 32, OptimizerConfig::adam(1e-2), 3);
  EXPECT_GE(symbol_accuracy(m, test), 0.99);
}

TEST(Loss, Examples) {
  RootOutput scalar;
  scalar.kind = RootKind::scalar;
  scalar.value = 7.0;
  EXPECT_EQ(loss(scalar, Label{7.0}, LossKind::l1), 0.0);
  EXPECT_EQ(loss(scalar, Label{4.5}, LossKind::l1), 2.5);
  EXPECT_THROW(loss(scalar, Label{7.0}, LossKind::cross_entropy), ArgumentError);
  EXPECT_THROW(loss(scalar, Label{std::size_t{7}}, LossKind::l1), ArgumentError);

  RootOutput dist;
  dist.kind = RootKind::distribution;
  dist.dist.assign(10, 0.1);
  EXPECT_NEAR(loss(dist, Label{std::size_t{3}}, LossKind::cross_entropy), 2.302585, 1e-6);
  dist.dist.assign(10, 0.0);
  dist.dist[0] = 1.0;
  EXPECT_NEAR(loss(dist, Label{std::size_t{3}}, LossKind::cross_entropy), -std::log(1e-12), 1e-9);
  EXPECT_THROW(loss(dist, Label{std::size_t{10}}, LossKind::cross_entropy), ArgumentError);
  EXPECT_EQ(parse_loss("ce"), LossKind::cross_entropy);
  EXPECT_THROW(parse_loss("mse"), ConfigError);
}

TEST(Loss, DigitTuple) {
  // Two places; the most significant is certainly 12, the low place 5.
  RootOutput out;
  out.kind = RootKind::digits;
  out.places = {oracle::one_hot(20, 5), oracle::one_hot(19, 12)};
  const Label y = std::vector<std::size_t>{1, 2, 5};
  EXPECT_EQ(loss(out, y, LossKind::l1), 0.0);
  EXPECT_NEAR(loss(out, y, LossKind::cross_entropy), 0.0, 1e-15);
  const Label wrong = std::vector<std::size_t>{0, 2, 4};
  EXPECT_EQ(loss(out, wrong, LossKind::l1), 2.0);
  EXPECT_THROW(loss(out, Label{std::vector<std::size_t>{1, 2}}, LossKind::l1), ArgumentError);
}

TEST(Loss, BatchMeanIsMeanOfSingles) {
  auto fx = make_fixture("sum_4", 2);
  const auto data = make_dataset(fx.task, fx.symbols, 3, 5);
  auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
  m.randomize(1, 0.3);
  std::vector<double> g;
  const std::vector<std::size_t> all{0, 1, 2};
  const double batch = batch_gradient(fx.task.graph, fx.sketches, m, data, all, LossKind::l1, {}, g);
  double singles = 0.0;
  for (const auto& ex : data) singles += example_loss(fx.task.graph, fx.sketches, m, ex, LossKind::l1, {}, nullptr);
  EXPECT_NEAR(batch, singles / 3.0, 1e-12);
  EXPECT_NEAR(mean_loss(fx.task.graph, fx.sketches, m, data, LossKind::l1), batch, 1e-12);
}

TEST(Train, ThetaGradientMatchesFiniteDifferences) {
  auto fx = make_fixture("sum_2", 2);
  const auto data = make_dataset(fx.task, fx.symbols, 4, 9);
  const std::vector<std::size_t> batch{0, 1, 2, 3};
  for (std::uint64_t draw = 0; draw < 10; ++draw) {
    auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
    m.randomize(100 + draw, 0.2);
    std::vector<double> g;
    batch_gradient(fx.task.graph, fx.sketches, m, data, batch, LossKind::l1, {}, g);
    auto f = [&](const std::vector<double>& th) {
      PerceptualModel c = m;
      c.theta = th;
      return mean_loss(fx.task.graph, fx.sketches, c, data, LossKind::l1);
    };
    EXPECT_LT(oracle::relative_l2(g, oracle::central_difference(f, m.theta, 1e-6)), 1e-4) << "draw " << draw;
  }
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
  auto fx = make_fixture("sum_4", 2);
  const auto data = make_dataset(fx.task, fx.symbols, 32, 1);
  auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
  m.randomize(4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.optimizer = OptimizerConfig::adam(0.0);
  EXPECT_EQ(train(fx.task.graph, fx.sketches, m, data, data, cfg).model.theta, m.theta);
  cfg.optimizer = OptimizerConfig::sgd(0.0);
  EXPECT_EQ(train(fx.task.graph, fx.sketches, m, data, data, cfg).model.theta, m.theta);
}

TEST(Train, ZeroEpochsGiveHeaderOnlyCsv) {
  auto fx = make_fixture("sum_4", 2);
  const auto data = make_dataset(fx.task, fx.symbols, 8, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
  const auto r = train(fx.task.graph, fx.sketches, m, data, data, cfg);
  EXPECT_EQ(r.model.theta, m.theta);
  std::ostringstream os;
  write_metrics_csv(os, r.history);
  EXPECT_EQ(os.str(), "epoch,wall_seconds,train_loss,task_acc,symbol_acc\n");
}

TEST(Train, DeterministicForFixedSeed) {
  auto fx = make_fixture("sum_4", 2);
  const auto data = make_dataset(fx.task, fx.symbols, 64, 1);
  auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
  m.randomize(4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 11;
  const auto a = train(fx.task.graph, fx.sketches, m, data, data, cfg);
  const auto b = train(fx.task.graph, fx.sketches, m, data, data, cfg);
  EXPECT_EQ(a.model.theta, b.model.theta);
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history[1].train_loss, b.history[1].train_loss);
}

TEST(Train, SumFourLearnsAndLossDrops) {
  auto fx = make_fixture("sum_4", 2);
  const auto train_data = make_dataset(fx.task, fx.symbols, 1000, 1);
  const auto test_data = make_dataset(fx.task, fx.symbols, 300, 2);
  auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
  m.randomize(0);
  const double initial = mean_loss(fx.task.graph, fx.sketches, m, train_data, LossKind::l1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.optimizer = OptimizerConfig::adam(1e-2);
  const auto r = train(fx.task.graph, fx.sketches, m, train_data, test_data, cfg);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_LT(mean_loss(fx.task.graph, fx.sketches, r.model, train_data, LossKind::l1), initial);
  EXPECT_GE(r.history.back().task_acc, 0.9);
  for (const auto& e : r.history) EXPECT_GE(e.symbol_acc, e.task_acc);
}

TEST(Evaluate, PerfectModelAndUniformModel) {
  auto fx = make_fixture("sum_4", 2);
  const auto data = make_dataset(fx.task, fx.symbols, 200, 3);
  // Nearest-mean classifier as a linear model: logits = 2 mu.x - |mu|^2.
  auto m = PerceptualModel::linear(fx.symbols.dim(), 10);
  const std::size_t d = fx.symbols.dim();
  for (std::size_t c = 0; c < 10; ++c) {
    const auto& mu = fx.symbols.mean(c);
    double n2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      m.theta[c * d + k] = 2.0 * mu[k];
      n2 += mu[k] * mu[k];
    }
    m.theta[10 * d + c] = -n2;
  }
  Dataset clean = data;
  for (auto& ex : clean) {
    for (std::size_t i = 0; i < ex.inputs.size(); ++i) ex.inputs[i] = fx.symbols.mean(ex.symbols[i]);
  }
  const auto perfect = evaluate_argmax(fx.task.graph, m, clean);
  EXPECT_EQ(perfect.task, 1.0);
  EXPECT_EQ(perfect.symbol, 1.0);

  // A uniform model always predicts symbol 0, so the sum is 0.
  const auto uniform = evaluate_argmax(fx.task.graph, PerceptualModel::linear(d, 10), data);
  std::size_t zero = 0;
  for (const auto& ex : data) zero += std::get<double>(ex.label) == 0.0;
  EXPECT_EQ(uniform.task, static_cast<double>(zero) / static_cast<double>(data.size()));
}

TEST(Evaluate, DigitLabels) {
  auto fx = make_fixture("add_2", 3);
  const auto data = make_dataset(fx.task, fx.symbols, 50, 4);
  for (const auto& ex : data) {
    const auto& digits = std::get<std::vector<std::size_t>>(ex.label);
    ASSERT_EQ(digits.size(), 3u);
    const std::size_t a = ex.symbols[0] + 10 * ex.symbols[2];
    const std::size_t b = ex.symbols[1] + 10 * ex.symbols[3];
    EXPECT_EQ(digits[0] * 100 + digits[1] * 10 + digits[2], a + b);
  }
}
