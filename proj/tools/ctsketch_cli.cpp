// ctsketch: build summaries, sketch them, train, infer, verify, and run ablations.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 verification
// failure, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctsketch/artifacts.hpp"
#include "ctsketch/learn.hpp"
#include "ctsketch/verify.hpp"

namespace fs = std::filesystem;
using namespace ctsketch;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitVerify = 4;

struct Options {
  std::string config;
  std::string task;
  std::string intermediate = "value";
  std::string root = "value";
  std::string split;
  std::string rank = "2";
  std::uint64_t seed = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::string loss = "l1";
  std::string optimizer = "adam";
  double sigma = 0.0;
  bool squared = false;
  std::string out;
  std::string summaries;
  std::string sketches;
  std::string leaves;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  std::string model = "linear";
  std::size_t hidden = 32;
  std::string ranks = "2,4,8,full";
  std::string splits;
};

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& part : split_on(s, ',')) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(part, &pos);
      if (pos != part.size() || v < 1) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("expected a comma-separated list of positive integers, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list '" + s + "'");
  return out;
}

/// Task config from --config, or from --task/--rank/--split/--intermediate.
TaskConfig resolve_config(const Options& o) {
  TaskConfig c;
  if (!o.config.empty()) {
    c = load_task_config(o.config);
  } else if (!o.task.empty()) {
    json j{{"task", o.task}, {"intermediate", o.intermediate}, {"root", o.root}, {"seed", o.seed}};
    const auto r = parse_rank(o.rank);
    j["rank"] = r ? json(*r) : json("full");
    if (!o.split.empty()) j["split"] = parse_sizes(o.split);
    c = parse_task_config(j);
  } else {
    throw ConfigError("give --config or --task");
  }
  if (o.sigma > 0.0) c.graph.sigma = o.sigma;
  return c;
}

/// Graph and sketches from --sketches, or sketched in-process from the config.
std::pair<ProgramGraph, std::vector<TTSketch>> resolve_sketches(const Options& o) {
  if (!o.sketches.empty()) {
    auto g = read_graph(o.sketches);
    auto s = read_sketches(o.sketches, g);
    if (o.sigma > 0.0) g.sigma = o.sigma;
    return {std::move(g), std::move(s)};
  }
  auto c = resolve_config(o);
  auto s = sketch_graph(c.graph, c.sketch);
  return {std::move(c.graph), std::move(s)};
}

InferenceConfig inference_config(const ProgramGraph& g, const Options& o) {
  InferenceConfig inf;
  inf.sigma = g.sigma;
  inf.squared = o.squared;
  return inf;
}

// ---------------------------------------------------------------------------

int cmd_build(const Options& o) {
  if (o.out.empty()) throw ConfigError("build: --out is required");
  const auto c = resolve_config(o);
  const auto records = write_summaries(o.out, c.graph);
  for (std::size_t i = 0; i < c.graph.nodes.size(); ++i) {
    const auto& n = c.graph.nodes[i];
    const auto& r = records[n.program];
    std::printf("node %-4zu layer %-3zu %-16s %-20s %14s%s\n", i, n.layer + 1, r.program.c_str(),
                shape_string(r.shape).c_str(), count_string(r.entries).c_str(),
                r.stored ? "" : "  (structured form, not stored)");
  }
  double total = 0.0;
  for (const auto& r : records) total += r.entries;
  std::printf("%zu summaries, %s entries\n", records.size(), count_string(total).c_str());
  return 0;
}

json sketch_report(const ProgramGraph& g, const std::vector<TTSketch>& sk, const std::vector<SketchConfig>& cfg,
                   const std::optional<fs::path>& summaries) {
  json rows = json::array();
  for (std::size_t p = 0; p < sk.size(); ++p) {
    json r{{"program", g.programs[p].name},
           {"rank", cfg[p].to_string()},
           {"ranks", sk[p].ranks()},
           {"parameters", sk[p].parameter_count()},
           {"error_bound", reconstruction_error_bound(sk[p])}};
    std::optional<DenseTensor> phi;
    if (summaries) phi = read_summary(*summaries, p);
    if (phi && phi->size() <= element_budget()) {
      const auto t = reconstruct(sk[p]);
      r["frobenius_error"] = frobenius_distance(*phi, t);
      r["max_abs_error"] = max_abs_difference(*phi, t);
    }
    rows.push_back(r);
  }
  return rows;
}

int cmd_sketch(const Options& o) {
  if (o.summaries.empty() || o.out.empty()) throw ConfigError("sketch: --summaries and --out are required");
  const auto g = read_graph(o.summaries);
  const auto r = parse_rank(o.rank);
  std::vector<SketchConfig> cfg(g.programs.size(), r ? SketchConfig::with_rank(*r, o.seed) : SketchConfig::full(o.seed));
  std::vector<TTSketch> sk;
  for (std::size_t p = 0; p < g.programs.size(); ++p) {
    const auto phi = read_summary(o.summaries, p);
    if (phi) {
      sk.push_back(tt_svd(*phi, cfg[p]));
    } else if (g.programs[p].structured) {
      sk.push_back(tt_round(g.programs[p].structured(), cfg[p]));
    } else {
      throw IoError("summary for program '" + g.programs[p].name + "' is missing");
    }
  }
  write_sketches(o.out, g, sk, cfg);
  const auto report = sketch_report(g, sk, cfg, fs::path(o.summaries));
  detail::write_json(fs::path(o.out) / "report.json", report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

PerceptualModel make_model(const Options& o, std::size_t dim, std::size_t classes) {
  PerceptualModel m;
  if (o.model == "linear") {
    m = PerceptualModel::linear(dim, classes);
  } else if (o.model == "mlp") {
    m = PerceptualModel::mlp(dim, o.hidden, classes);
  } else {
    throw ConfigError("unknown model '" + o.model + "' (expected linear or mlp)");
  }
  m.randomize(o.seed);
  return m;
}

TrainConfig train_config(const ProgramGraph& g, const Options& o) {
  TrainConfig cfg;
  cfg.loss = parse_loss(o.loss);
  if (o.optimizer == "adam") {
    cfg.optimizer = OptimizerConfig::adam(o.lr);
  } else if (o.optimizer == "sgd") {
    cfg.optimizer = OptimizerConfig::sgd(o.lr);
  } else {
    throw ConfigError("unknown optimizer '" + o.optimizer + "'");
  }
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.inference = inference_config(g, o);
  return cfg;
}

struct TaskData {
  Task task;
  Dataset train, test;
  std::size_t dim = 0;
};

TaskData make_data(const std::string& name, const ProgramGraph& g, const Options& o) {
  if (name.empty()) throw ConfigError("training needs a builtin task (--task or a config with \"task\")");
  TaskData d{task_by_name(name), {}, {}, 0};
  if (d.task.graph.leaf_count() != g.leaf_count()) throw ConfigError("task data does not match the graph's leaf count");
  const SyntheticSymbols sym(d.task.class_count, o.seed);
  d.train = make_dataset(d.task, sym, o.train_size, o.seed + 1);
  d.test = make_dataset(d.task, sym, o.test_size, o.seed + 2);
  d.dim = sym.dim();
  return d;
}

int cmd_train(const Options& o) {
  if (o.out.empty()) throw ConfigError("train: --out is required");
  std::string task = o.task;
  if (task.empty() && !o.config.empty()) task = load_task_config(o.config).task;
  auto [g, sk] = resolve_sketches(o);
  const auto data = make_data(task, g, o);
  const auto cfg = train_config(g, o);
  detail::ensure_dir(o.out);
  const auto model = make_model(o, data.dim, data.task.class_count);
  std::ofstream csv(fs::path(o.out) / "metrics.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (fs::path(o.out) / "metrics.csv").string());
  std::vector<EpochMetrics> history;
  write_metrics_csv(csv, history);
  const auto result = train(g, sk, model, data.train, data.test, cfg, [&](const EpochMetrics& m) {
    std::ostringstream row;
    write_metrics_csv(row, {m});
    const auto text = row.str();
    csv << text.substr(text.find('\n') + 1) << std::flush;
    std::printf("epoch %zu  loss %.6f  task_acc %.4f  symbol_acc %.4f  %.2fs\n", m.epoch, m.train_loss, m.task_acc,
                m.symbol_acc, m.wall_seconds);
  });
  detail::write_json(fs::path(o.out) / "model.json", model_to_json(result.model));
  const auto acc = evaluate_argmax(g, result.model, data.test);
  std::printf("final task_acc %.4f symbol_acc %.4f\n", acc.task, acc.symbol);
  return 0;
}

json output_to_json(const RootOutput& out) {
  switch (out.kind) {
    case RootKind::scalar:
      return {{"kind", "scalar"}, {"value", out.value}};
    case RootKind::distribution:
      return {{"kind", "distribution"}, {"distribution", out.dist}, {"argmax", argmax(out.dist)}};
    case RootKind::digits: {
      std::vector<std::size_t> digits;
      double carry = 0.0;
      for (std::size_t j = 10; j < out.places.back().size(); ++j) carry += out.places.back()[j];
      digits.push_back(carry > 0.5 ? 1 : 0);
      for (std::size_t k = out.places.size(); k-- > 0;) {
        std::vector<double> m(10, 0.0);
        for (std::size_t j = 0; j < out.places[k].size(); ++j) m[j % 10] += out.places[k][j];
        digits.push_back(argmax(m));
      }
      return {{"kind", "digits"}, {"places", out.places}, {"digits", digits}};
    }
  }
  return {};
}

int cmd_infer(const Options& o) {
  if (o.leaves.empty()) throw ConfigError("infer: --leaves is required (a JSON file, or - for stdin)");
  json j;
  if (o.leaves == "-") {
    try {
      j = json::parse(std::cin);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("leaves: ") + e.what());
    }
  } else {
    j = detail::read_json(o.leaves);
  }
  if (j.is_object() && j.contains("leaves")) j = j.at("leaves");
  std::vector<Distribution> leaves;
  try {
    leaves = j.get<std::vector<Distribution>>();
  } catch (const json::exception&) {
    throw ConfigError("leaves must be an array of probability vectors");
  }
  const auto [g, sk] = resolve_sketches(o);
  const auto out = forward(g, sk, leaves, inference_config(g, o)).first;
  std::cout << output_to_json(out).dump() << '\n';
  return 0;
}

Distribution random_distribution(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Distribution p(n);
  double s = 0.0;
  for (double& x : p) s += (x = u(rng));
  for (double& x : p) x /= s;
  return p;
}

struct CheckRow {
  std::string check;
  std::string target;
  CheckResult result;
  bool skipped = false;
};

int cmd_verify(const Options& o) {
  if (o.sketches.empty()) throw ConfigError("verify: --sketches is required");
  const auto g = read_graph(o.sketches);
  const auto sk = read_sketches(o.sketches, g);
  std::vector<CheckRow> rows;
  std::mt19937_64 rng(o.seed);
  for (std::size_t p = 0; p < g.programs.size(); ++p) {
    const auto& sp = g.programs[p];
    std::optional<DenseTensor> phi;
    if (!o.summaries.empty()) {
      phi = read_summary(o.summaries, p);
    } else if (sp.summary_entries() <= static_cast<double>(element_budget())) {
      phi = build_summary(sp);
    }
    if (phi && phi->dims() != sk[p].source_dims()) {
      CheckResult c{"shape", 0.0, 0.0, false, "sketch shape does not match the summary"};
      rows.push_back({"shape", sp.name, c});
      continue;
    }
    if (!phi) {
      rows.push_back({"reconstruction_bound", sp.name, {}, true});
      continue;
    }
    rows.push_back({"reconstruction_bound", sp.name, check_reconstruction_bound(*phi, sk[p])});
    // The one-hot bound applies to integer-valued VALUE summaries.
    bool integral = sp.kind == OutputKind::value;
    double top = 0.0;
    for (double v : phi->data()) {
      integral = integral && v >= 0.0 && v == std::round(v);
      top = std::max(top, v);
    }
    if (integral) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> w(phi->size());
      for (double& x : w) x = u(rng);
      const auto c = check_onehot_bound(*phi, sk[p], DenseTensor(phi->dims(), std::move(w)),
                                 static_cast<std::size_t>(top) + 1);
      rows.push_back({c.distribution.name, sp.name, c.distribution});
      rows.push_back({c.cell_count.name, sp.name, c.cell_count});
    }
  }
  // End-to-end gradient at random leaves against the program's own label.
  {
    std::vector<Distribution> leaves;
    std::vector<std::size_t> symbols;
    for (std::size_t d : g.leaf_domains) {
      leaves.push_back(random_distribution(d, rng));
      symbols.push_back(argmax(leaves.back()));
    }
    std::optional<Label> label = evaluate(g, symbols);
    if (!label) {
      rows.push_back({"gradient", g.name, {}, true});
    } else {
      const LossKind kind = g.root_kind() == RootKind::scalar ? LossKind::l1 : LossKind::cross_entropy;
      rows.push_back({"gradient", g.name, grad_check(g, sk, leaves, *label, kind, 1e-6, 1e-4, inference_config(g, o))});
    }
  }
  bool ok = true;
  std::printf("%-22s %-16s %14s %14s  %s\n", "check", "target", "measured", "bound", "status");
  for (const auto& r : rows) {
    if (r.skipped) {
      std::printf("%-22s %-16s %14s %14s  SKIP\n", r.check.c_str(), r.target.c_str(), "-", "-");
      continue;
    }
    ok = ok && r.result.pass;
    std::printf("%-22s %-16s %14.6e %14.6e  %s%s%s\n", r.check.c_str(), r.target.c_str(), r.result.measured,
                r.result.bound, r.result.pass ? "PASS" : "FAIL", r.result.detail.empty() ? "" : "  ",
                r.result.detail.c_str());
  }
  return ok ? 0 : kExitVerify;
}

int cmd_ablate_rank(const Options& o) {
  if (o.task.empty()) throw ConfigError("ablate rank: --task is required");
  const auto ranks = split_on(o.ranks, ',');
  if (ranks.empty()) throw ConfigError("ablate rank: --ranks is empty");
  const auto intermediate = parse_output_kind(o.intermediate);
  const auto base = task_by_name(o.task, intermediate);
  const auto data = make_data(o.task, base.graph, o);
  std::ofstream csv;
  if (!o.out.empty()) {
    detail::ensure_dir(o.out);
    csv.open(fs::path(o.out) / "ablate_rank.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write ablate_rank.csv");
    csv << "rank,parameters,epoch,wall_seconds,train_loss,task_acc,symbol_acc\n";
  }
  std::printf("%-6s %10s %12s %10s %10s\n", "rank", "parameters", "sec/epoch", "task_acc", "symbol_acc");
  for (const auto& rs : ranks) {
    const auto r = parse_rank(rs);
    const auto cfg = r ? SketchConfig::with_rank(*r, o.seed) : SketchConfig::full(o.seed);
    auto g = base.graph;
    if (o.sigma > 0.0) g.sigma = o.sigma;
    const auto sk = sketch_graph(g, cfg);
    std::size_t params = 0;
    for (const auto& s : sk) params += s.parameter_count();
    const auto res = train(g, sk, make_model(o, data.dim, data.task.class_count), data.train, data.test, train_config(g, o));
    for (const auto& m : res.history) {
      if (csv.is_open()) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.17g,%.17g,%.17g\n", cfg.to_string().c_str(), params, m.epoch,
                      m.wall_seconds, m.train_loss, m.task_acc, m.symbol_acc);
        csv << buf;
      }
    }
    const double per_epoch = res.history.empty() ? 0.0 : res.history.back().wall_seconds / static_cast<double>(res.history.size());
    const auto& last = res.history.empty() ? EpochMetrics{} : res.history.back();
    std::printf("%-6s %10zu %12.4f %10.4f %10.4f\n", cfg.to_string().c_str(), params, per_epoch, last.task_acc,
                last.symbol_acc);
  }
  return 0;
}

int cmd_ablate_decomposition(const Options& o) {
  if (o.task.rfind("sum_", 0) != 0) throw ConfigError("ablate decomposition: --task must be a sum task");
  const std::size_t n = task_by_name(o.task).graph.leaf_count();
  std::vector<std::string> splits = split_on(o.splits, ';');
  if (splits.empty()) {
    splits.push_back(std::to_string(n));
    for (std::size_t a = 2; a < n; a *= 2) {
      std::size_t layers = 0;
      for (std::size_t m = 1; m < n; m *= a) ++layers;
      std::size_t prod = 1;
      for (std::size_t k = 0; k < layers; ++k) prod *= a;
      if (prod != n) continue;
      std::string s;
      for (std::size_t k = 0; k < layers; ++k) s += (k ? "," : "") + std::to_string(a);
      splits.push_back(s);
    }
  }
  const double budget = static_cast<double>(element_budget());
  std::printf("%-14s %-8s %12s  %s\n", "split", "kind", "entries", "status");
  for (const auto& s : splits) {
    const auto arities = parse_sizes(s);
    for (auto kind : {OutputKind::value, OutputKind::onehot}) {
      const auto g = builtin_sum_split(arities, kind, kind);
      if (g.leaf_count() != n) throw ConfigError("split " + s + " does not cover " + std::to_string(n) + " digits");
      double total = 0.0, largest = 0.0;
      for (const auto& sp : g.programs) {
        total += sp.summary_entries();
        largest = std::max(largest, sp.summary_entries());
      }
      std::printf("%-14s %-8s %12.4g  %s\n", s.c_str(), to_string(kind).c_str(), total,
                  largest <= budget ? "fits" : "exceeds budget");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-sketched program inference and training"};
  app.require_subcommand(1);
  Options o;

  auto add_task_flags = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Task config JSON");
    c->add_option("--task", o.task, "Builtin task: sum_N, add_N, hwf_N, visudo_4, sudoku_cell");
    c->add_option("--intermediate", o.intermediate, "Output kind of intermediate nodes: value or onehot");
    c->add_option("--root", o.root, "Output kind of a sum task's root: value or onehot");
    c->add_option("--split", o.split, "Sum decomposition arities, e.g. 2,2,2,2 (sum tasks only)");
    c->add_option("--rank", o.rank, "Bond rank or 'full'");
    c->add_option("--seed", o.seed, "Seed");
    c->add_option("--sigma", o.sigma, "RBF width (overrides the config)");
    c->add_flag("--squared", o.squared, "Use the squared-distance RBF kernel");
  };
  auto add_train_flags = [&](CLI::App* c) {
    c->add_option("--epochs", o.epochs, "Training epochs");
    c->add_option("--batch-size", o.batch_size, "Mini-batch size");
    c->add_option("--lr", o.lr, "Learning rate");
    c->add_option("--loss", o.loss, "l1 or ce");
    c->add_option("--optimizer", o.optimizer, "adam or sgd");
    c->add_option("--train-size", o.train_size, "Synthetic training examples");
    c->add_option("--test-size", o.test_size, "Synthetic test examples");
    c->add_option("--model", o.model, "linear or mlp");
    c->add_option("--hidden", o.hidden, "MLP hidden units");
  };

  auto* build = app.add_subcommand("build", "Write summary tensors and a manifest");
  add_task_flags(build);
  build->add_option("--out", o.out, "Output directory");

  auto* sketch = app.add_subcommand("sketch", "Sketch the summaries of a build directory");
  sketch->add_option("--summaries", o.summaries, "Build directory")->required();
  sketch->add_option("--rank", o.rank, "Bond rank or 'full'");
  sketch->add_option("--seed", o.seed, "Seed for randomized SVD");
  sketch->add_option("--out", o.out, "Output directory");

  auto* trn = app.add_subcommand("train", "Train a perceptual model through the sketched program");
  add_task_flags(trn);
  add_train_flags(trn);
  trn->add_option("--sketches", o.sketches, "Sketch directory (default: sketch in-process)");
  trn->add_option("--out", o.out, "Output directory for metrics.csv and model.json");

  auto* infer = app.add_subcommand("infer", "Run the sketched program on leaf distributions");
  add_task_flags(infer);
  infer->add_option("--sketches", o.sketches, "Sketch directory (default: sketch in-process)");
  infer->add_option("--leaves", o.leaves, "JSON array of leaf distributions, or - for stdin");

  auto* verify = app.add_subcommand("verify", "Check sketches against their summaries");
  verify->add_option("--sketches", o.sketches, "Sketch directory");
  verify->add_option("--summaries", o.summaries, "Build directory (default: rebuild summaries)");
  verify->add_option("--seed", o.seed, "Seed for random weights and leaves");
  verify->add_option("--sigma", o.sigma, "RBF width");

  auto* ablate = app.add_subcommand("ablate", "Rank and decomposition ablations");
  ablate->require_subcommand(1);
  auto* ab_rank = ablate->add_subcommand("rank", "Train at several ranks");
  add_task_flags(ab_rank);
  add_train_flags(ab_rank);
  ab_rank->add_option("--ranks", o.ranks, "Comma-separated ranks, 'full' allowed");
  ab_rank->add_option("--out", o.out, "Output directory for ablate_rank.csv");
  auto* ab_dec = ablate->add_subcommand("decomposition", "Summary sizes of sum decompositions");
  ab_dec->add_option("--task", o.task, "Sum task, e.g. sum_16")->required();
  ab_dec->add_option("--splits", o.splits, "Semicolon-separated arity lists, e.g. '16;4,4;2,2,2,2'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*build) return cmd_build(o);
    if (*sketch) return cmd_sketch(o);
    if (*trn) return cmd_train(o);
    if (*infer) return cmd_infer(o);
    if (*verify) return cmd_verify(o);
    if (*ab_rank) return cmd_ablate_rank(o);
    if (*ab_dec) return cmd_ablate_decomposition(o);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ResourceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
