#pragma once

/** Weakly supervised training of a perceptual model through sketched
 *  programs, and test-time argmax evaluation. */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctsketch/data.hpp"
#include "ctsketch/inference.hpp"
#include "ctsketch/model.hpp"

namespace ctsketch {

enum class LossKind { l1, cross_entropy };

inline LossKind parse_loss(const std::string& s) {
  if (s == "l1") return LossKind::l1;
  if (s == "ce" || s == "cross_entropy") return LossKind::cross_entropy;
  throw ConfigError("unknown loss '" + s + "' (expected l1 or ce)");
}

inline std::string to_string(LossKind k) { return k == LossKind::l1 ? "l1" : "ce"; }

inline constexpr double kProbFloor = 1e-12;

namespace detail {

inline double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// -log max(p, floor) and its derivative
inline double neg_log(double p, double& dp) {
  if (p < kProbFloor) {
    dp = 0.0;
    return -std::log(kProbFloor);
  }
  dp = -1.0 / p;
  return -std::log(p);
}

}  // namespace detail

/// Loss of one root output against its label; fills `grad` when given.
/// Digit roots: L1 sums |E[digit] - y| over places (the leading carry
/// included); cross-entropy sums -log P(digit = y).
inline double loss(const RootOutput& out, const Label& label, LossKind kind, RootGrad* grad = nullptr) {
  if (grad) {
    *grad = RootGrad{};
    grad->kind = out.kind;
    grad->dist.assign(out.dist.size(), 0.0);
    for (const auto& p : out.places) grad->places.emplace_back(p.size(), 0.0);
  }
  switch (out.kind) {
    case RootKind::scalar: {
      const auto* y = std::get_if<double>(&label);
      if (!y) throw ArgumentError("loss: scalar root needs a real label");
      if (kind != LossKind::l1) throw ArgumentError("loss: cross-entropy needs a distribution root");
      if (grad) grad->value = detail::sign(out.value - *y);
      return std::abs(out.value - *y);
    }
    case RootKind::distribution: {
      const auto* y = std::get_if<std::size_t>(&label);
      if (!y || *y >= out.dist.size()) throw ArgumentError("loss: distribution root needs a class label in range");
      if (kind == LossKind::cross_entropy) {
        double dp = 0.0;
        const double l = detail::neg_log(out.dist[*y], dp);
        if (grad) grad->dist[*y] = dp;
        return l;
      }
      double l = 0.0;
      for (std::size_t j = 0; j < out.dist.size(); ++j) {
        const double d = out.dist[j] - (j == *y ? 1.0 : 0.0);
        l += std::abs(d);
        if (grad) grad->dist[j] = detail::sign(d);
      }
      return l;
    }
    case RootKind::digits: {
      const auto* y = std::get_if<std::vector<std::size_t>>(&label);
      const std::size_t n = out.places.size();
      if (!y || y->size() != n + 1) throw ArgumentError("loss: digit root needs " + std::to_string(n + 1) + " digits");
      double l = 0.0;
      // Leading carry from the most significant place.
      {
        const auto& p = out.places.back();
        double carry = 0.0;
        for (std::size_t j = 10; j < p.size(); ++j) carry += p[j];
        const double target = static_cast<double>((*y)[0]);
        double dc = 0.0;
        if (kind == LossKind::l1) {
          l += std::abs(carry - target);
          dc = detail::sign(carry - target);
        } else {
          double dp = 0.0;
          l += detail::neg_log((*y)[0] == 1 ? carry : 1.0 - carry, dp);
          dc = (*y)[0] == 1 ? dp : -dp;
        }
        if (grad) {
          for (std::size_t j = 10; j < p.size(); ++j) grad->places.back()[j] += dc;
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const auto& p = out.places[k];
        const std::size_t target = (*y)[n - k];
        if (kind == LossKind::l1) {
          double e = 0.0;
          for (std::size_t j = 0; j < p.size(); ++j) e += p[j] * static_cast<double>(j % 10);
          const double d = e - static_cast<double>(target);
          l += std::abs(d);
          if (grad) {
            for (std::size_t j = 0; j < p.size(); ++j) grad->places[k][j] += detail::sign(d) * static_cast<double>(j % 10);
          }
        } else {
          double q = 0.0;
          for (std::size_t j = target; j < p.size(); j += 10) q += p[j];
          double dq = 0.0;
          l += detail::neg_log(q, dq);
          if (grad) {
            for (std::size_t j = target; j < p.size(); j += 10) grad->places[k][j] += dq;
          }
        }
      }
      return l;
    }
  }
  throw InternalError("loss: unknown root kind");
}

/// Leaf distributions for one example.
inline std::vector<Distribution> leaf_distributions(const PerceptualModel& m, const TrainingExample& ex) {
  std::vector<Distribution> out;
  out.reserve(ex.inputs.size());
  for (const auto& x : ex.inputs) out.push_back(apply_model(m, x));
  return out;
}

/// Loss of one example and, when `grad` is given, accumulation of dL/dtheta.
inline double example_loss(const ProgramGraph& g, const std::vector<TTSketch>& sketches, const PerceptualModel& m,
                           const TrainingExample& ex, LossKind kind, const InferenceConfig& inf,
                           std::vector<double>* grad) {
  if (ex.inputs.size() != g.leaf_count()) throw ArgumentError("example has the wrong number of inputs");
  auto leaves = leaf_distributions(m, ex);
  auto [out, tape] = forward(g, sketches, leaves, inf);
  if (!grad) return loss(out, ex.label, kind);
  RootGrad up;
  const double l = loss(out, ex.label, kind, &up);
  const auto leaf_grads = backward(g, sketches, tape, up);
  for (std::size_t i = 0; i < leaves.size(); ++i) model_backward(m, ex.inputs[i], leaves[i], leaf_grads[i], *grad);
  return l;
}

/// Mean loss over a batch and its gradient with respect to theta.
inline double batch_gradient(const ProgramGraph& g, const std::vector<TTSketch>& sketches, const PerceptualModel& m,
                             const Dataset& data, std::span<const std::size_t> batch, LossKind kind,
                             const InferenceConfig& inf, std::vector<double>& grad) {
  grad.assign(m.theta.size(), 0.0);
  double total = 0.0;
  for (std::size_t i : batch) total += example_loss(g, sketches, m, data[i], kind, inf, &grad);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (double& x : grad) x *= scale;
  return total * scale;
}

inline double mean_loss(const ProgramGraph& g, const std::vector<TTSketch>& sketches, const PerceptualModel& m,
                        const Dataset& data, LossKind kind, const InferenceConfig& inf = {}) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : data) total += example_loss(g, sketches, m, ex, kind, inf, nullptr);
  return total / static_cast<double>(data.size());
}

struct Accuracy {
  double task = 0.0;
  double symbol = 0.0;
};

inline bool label_equal(const Label& a, const Label& b) {
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<double>(&a)) return std::abs(*x - std::get<double>(b)) <= 1e-9;
  return a == b;
}

/// Run the exact program on argmax symbols; per-symbol accuracy uses the
/// examples' ground-truth symbols when present.
inline Accuracy evaluate_argmax(const ProgramGraph& g, const PerceptualModel& m, const Dataset& data) {
  Accuracy acc;
  if (data.empty()) return acc;
  std::size_t task_ok = 0, sym_ok = 0, sym_total = 0;
  std::vector<std::size_t> pred(g.leaf_count());
  for (const auto& ex : data) {
    for (std::size_t i = 0; i < ex.inputs.size(); ++i) pred[i] = argmax(apply_model(m, ex.inputs[i]));
    const auto out = evaluate(g, pred);
    if (out && label_equal(*out, ex.label)) ++task_ok;
    if (ex.symbols.size() == pred.size()) {
      for (std::size_t i = 0; i < pred.size(); ++i) sym_ok += pred[i] == ex.symbols[i];
      sym_total += pred.size();
    }
  }
  acc.task = static_cast<double>(task_ok) / static_cast<double>(data.size());
  acc.symbol = sym_total ? static_cast<double>(sym_ok) / static_cast<double>(sym_total) : 0.0;
  return acc;
}

struct TrainConfig {
  LossKind loss = LossKind::l1;
  OptimizerConfig optimizer = OptimizerConfig::adam();
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  InferenceConfig inference;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double wall_seconds = 0.0;
  double train_loss = 0.0;
  double task_acc = 0.0;
  double symbol_acc = 0.0;
};

struct TrainResult {
  PerceptualModel model;
  std::vector<EpochMetrics> history;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& history) {
  os << "epoch,wall_seconds,train_loss,task_acc,symbol_acc\n";
  char buf[160];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.17g,%.17g,%.17g\n", e.epoch, e.wall_seconds, e.train_loss, e.task_acc,
                  e.symbol_acc);
    os << buf;
  }
}

/// Mini-batch training; the sketches stay fixed and only theta moves.
/// `on_epoch` sees each epoch's metrics as they are produced.
inline TrainResult train(const ProgramGraph& g, const std::vector<TTSketch>& sketches, PerceptualModel model,
                         const Dataset& train_data, const Dataset& test_data, const TrainConfig& cfg,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (cfg.batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (train_data.empty() && cfg.epochs > 0) throw ConfigError("train: no training data");
  Optimizer opt(cfg.optimizer);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + b, e - b);
      total += batch_gradient(g, sketches, model, train_data, batch, cfg.loss, cfg.inference, grad) *
               static_cast<double>(batch.size());
      opt.step(model.theta, grad);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = total / static_cast<double>(order.size());
    const auto acc = evaluate_argmax(g, model, test_data);
    m.task_acc = acc.task;
    m.symbol_acc = acc.symbol;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  result.model = std::move(model);
  return result;
}

/// Supervised cross-entropy training of the classifier alone.
inline PerceptualModel train_supervised(PerceptualModel model,
                                        const std::vector<std::pair<std::vector<double>, std::size_t>>& data,
                                        std::size_t epochs, std::size_t batch_size, OptimizerConfig ocfg,
                                        std::uint64_t seed) {
  Optimizer opt(ocfg);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      grad.assign(model.theta.size(), 0.0);
      const std::size_t e = std::min(order.size(), b + batch_size);
      for (std::size_t k = b; k < e; ++k) {
        const auto& [x, y] = data[order[k]];
        const auto p = apply_model(model, x);
        std::vector<double> gp(p.size(), 0.0);
        gp[y] = -1.0 / std::max(p[y], kProbFloor);
        model_backward(model, x, p, gp, grad);
      }
      for (double& v : grad) v /= static_cast<double>(e - b);
      opt.step(model.theta, grad);
    }
  }
  return model;
}

inline double symbol_accuracy(const PerceptualModel& m,
                              const std::vector<std::pair<std::vector<double>, std::size_t>>& data) {
  std::size_t ok = 0;
  for (const auto& [x, y] : data) ok += argmax(apply_model(m, x)) == y;
  return data.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace ctsketch
