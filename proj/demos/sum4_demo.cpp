// Learn digit classes for sum_4 from sums alone, then read off one prediction.

#include <cstdio>

#include "ctsketch/learn.hpp"

using namespace ctsketch;

int main() {
  const auto task = sum_task(4);
  const SyntheticSymbols symbols(task.class_count, 7);
  const auto train_data = make_dataset(task, symbols, 2000, 8);
  const auto test_data = make_dataset(task, symbols, 500, 9);

  // One sketch per distinct sub-program: the 10x10 and 19x19 pairwise sums.
  const auto sketches = sketch_graph(task.graph, SketchConfig::with_rank(2));
  for (const auto& s : sketches) {
    std::printf("sketch %zux%zu, %zu parameters, bound %.2g\n", s.source_dims()[0], s.source_dims()[1],
                s.parameter_count(), reconstruction_error_bound(s));
  }

  auto model = PerceptualModel::linear(symbols.dim(), task.class_count);
  model.randomize(7);
  TrainConfig cfg;
  cfg.optimizer = OptimizerConfig::adam(1e-2);
  cfg.epochs = 5;
  const auto result = train(task.graph, sketches, std::move(model), train_data, test_data, cfg,
                            [](const EpochMetrics& m) {
                              std::printf("epoch %zu  loss %.4f  task acc %.3f  digit acc %.3f\n", m.epoch,
                                          m.train_loss, m.task_acc, m.symbol_acc);
                            });

  const auto& ex = test_data.front();
  const auto out = forward(task.graph, sketches, leaf_distributions(result.model, ex)).first;
  std::printf("digits %zu %zu %zu %zu: true sum %g, expected sum %.3f\n", ex.symbols[0], ex.symbols[1],
              ex.symbols[2], ex.symbols[3], std::get<double>(ex.label), out.value);
}
