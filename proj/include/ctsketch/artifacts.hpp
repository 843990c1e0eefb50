#pragma once

/** On-disk artifacts: task configs, program graphs, summary and sketch
 *  directories, and trained models.
 *
 *  Tensors are CTS1 files; everything else is JSON. A summary directory holds
 *  manifest.json plus summary_<p>.cts per sub-program; a sketch directory
 *  holds manifest.json plus p<p>_core<j>.cts per core. */

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsketch/cts_io.hpp"
#include "ctsketch/data.hpp"
#include "ctsketch/graph.hpp"
#include "ctsketch/model.hpp"

namespace ctsketch {

using nlohmann::json;

namespace detail {

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Programs and graphs

/// Rebuild a sub-program from its descriptor.
inline SubProgram program_from_json(const json& d) {
  const std::string where = "program";
  const auto type = detail::get_field<std::string>(d, "type", where);
  auto kind_of = [&] { return parse_output_kind(d.value("output_kind", std::string("value"))); };
  SubProgram sp;
  if (type == "sum") {
    sp = sum_program(detail::get_field<std::vector<std::size_t>>(d, "domains", where), kind_of());
    if (d.contains("output_count")) {
      const auto n = detail::get_field<std::size_t>(d, "output_count", where);
      if (n < sp.output_count) throw ConfigError("sum program: output_count smaller than the largest sum");
      sp.output_count = n;
      sp.descriptor["output_count"] = n;
    }
  } else if (type == "carry_add") {
    sp = carry_add_program(kind_of());
  } else if (type == "equality") {
    sp = equality_program(detail::get_field<std::size_t>(d, "n", where),
                          parse_output_kind(d.value("output_kind", std::string("onehot"))));
  } else if (type == "or") {
    sp = or_program();
  } else if (type == "nor") {
    sp = nor_program();
  } else if (type == "not") {
    sp = not_program();
  } else if (type == "sudoku_cell") {
    sp = sudoku_cell_program();
  } else if (type == "hwf") {
    sp = hwf_program(detail::get_field<std::size_t>(d, "length", where));
  } else if (type == "table") {
    const auto kind = kind_of();
    TableEntries e;
    for (const auto& row : detail::get_field<json>(d, "entries", where)) {
      const auto in = detail::get_field<std::vector<std::size_t>>(row, "inputs", "table entry");
      if (kind == OutputKind::value) {
        e.values[in] = detail::get_field<double>(row, "value", "table entry");
      } else {
        e.sets[in] = detail::get_field<std::vector<std::size_t>>(row, "outputs", "table entry");
      }
    }
    sp = table_program(d.value("name", std::string("table")), detail::get_field<std::vector<std::size_t>>(d, "domains", where),
                       kind, kind == OutputKind::onehot ? detail::get_field<std::size_t>(d, "output_count", where) : 0,
                       std::move(e));
  } else {
    throw ConfigError("unknown program type '" + type + "'");
  }
  if (d.contains("name")) {
    sp.name = detail::get_field<std::string>(d, "name", where);
    sp.descriptor["name"] = sp.name;
  }
  return sp;
}

inline json program_to_json(const SubProgram& sp) {
  json d = sp.descriptor;
  if (d.is_null()) throw ConfigError("program '" + sp.name + "' has no descriptor and cannot be saved");
  d["name"] = sp.name;
  return d;
}

inline json graph_to_json(const ProgramGraph& g) {
  json j;
  j["name"] = g.name;
  j["leaf_domains"] = g.leaf_domains;
  j["sigma"] = g.sigma;
  j["root"] = g.root;
  j["places"] = g.places;
  j["programs"] = json::array();
  for (const auto& sp : g.programs) j["programs"].push_back(program_to_json(sp));
  j["nodes"] = json::array();
  for (const auto& n : g.nodes) {
    json in = json::array();
    for (const auto& w : n.inputs) in.push_back({w.kind == Wire::Kind::leaf ? "leaf" : "node", w.index});
    j["nodes"].push_back({{"program", n.program}, {"layer", n.layer}, {"inputs", in}, {"support", n.support}});
  }
  return j;
}

inline ProgramGraph graph_from_json(const json& j) {
  const std::string where = "graph";
  ProgramGraph g;
  g.name = j.value("name", std::string("graph"));
  g.leaf_domains = detail::get_field<std::vector<std::size_t>>(j, "leaf_domains", where);
  g.sigma = j.value("sigma", 0.5);
  for (const auto& d : detail::get_field<json>(j, "programs", where)) g.add_program(program_from_json(d));
  for (const auto& n : detail::get_field<json>(j, "nodes", where)) {
    std::vector<Wire> in;
    for (const auto& w : detail::get_field<json>(n, "inputs", "node")) {
      if (!w.is_array() || w.size() != 2 || !w[0].is_string() || !w[1].is_number_unsigned()) {
        throw ConfigError("node input must be [\"leaf\"|\"node\", index]");
      }
      const auto k = w[0].get<std::string>();
      if (k != "leaf" && k != "node") throw ConfigError("node input kind must be leaf or node");
      in.push_back(k == "leaf" ? Wire::leaf(w[1].get<std::size_t>()) : Wire::node(w[1].get<std::size_t>()));
    }
    g.add_node(detail::get_field<std::size_t>(n, "layer", "node"), detail::get_field<std::size_t>(n, "program", "node"),
               std::move(in), n.value("support", std::size_t{0}));
  }
  g.root = detail::get_field<std::size_t>(j, "root", where);
  g.places = j.value("places", std::vector<std::size_t>{});
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Task configs

/// A graph, how to sketch each of its sub-programs, and (for builtin tasks)
/// the name of the data generator.
struct TaskConfig {
  std::string task;  // builtin task name, empty for explicit graphs
  ProgramGraph graph;
  std::vector<SketchConfig> sketch;  // one per sub-program
  std::uint64_t sketch_seed = 0;
};

inline std::optional<std::size_t> parse_rank(const json& r) {
  if (r.is_string()) {
    if (r.get<std::string>() == "full") return std::nullopt;
    throw ConfigError("rank must be a positive integer or \"full\"");
  }
  if (!r.is_number_integer() || r.get<long long>() < 1) throw ConfigError("rank must be a positive integer or \"full\"");
  return r.get<std::size_t>();
}

inline std::optional<std::size_t> parse_rank(const std::string& s) {
  if (s == "full") return std::nullopt;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos == s.size() && v >= 1) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ConfigError("rank must be a positive integer or \"full\", got '" + s + "'");
}

inline ProgramGraph builtin_graph(const std::string& task, OutputKind intermediate, OutputKind root,
                                  const std::optional<std::vector<std::size_t>>& split) {
  try {
    if (task.rfind("sum_", 0) == 0) {
      std::size_t pos = 0;
      const std::string digits = task.substr(4);
      const unsigned long n = digits.empty() ? 0 : std::stoul(digits, &pos);
      if (n < 2 || pos != digits.size()) throw ConfigError("bad sum task '" + task + "'");
      if (!split) return builtin_sum_tree(n, intermediate, root);
      std::size_t prod = 1;
      for (std::size_t a : *split) prod *= a;
      if (prod != n) throw ConfigError("split arities multiply to " + std::to_string(prod) + ", not " + std::to_string(n));
      return builtin_sum_split(*split, intermediate, root);
    }
    if (split) throw ConfigError("'split' only applies to sum tasks");
    if (root != OutputKind::value) throw ConfigError("'root' only applies to sum tasks");
    if (task == "sudoku_cell") return builtin_sudoku_cell_graph();
    return task_by_name(task, intermediate).graph;
  } catch (const ArgumentError& e) {
    throw ConfigError(task + ": " + e.what());
  } catch (const std::logic_error&) {
    throw ConfigError("bad task name '" + task + "'");
  }
}

/// Config keys: "task" (builtin name) or "graph" (explicit), "rank" (default
/// for every sub-program), "ranks" (per-program overrides by name),
/// "intermediate", "root" (sum tasks), "split" (sum tasks), "sigma", "seed".
inline TaskConfig parse_task_config(const json& j) {
  if (!j.is_object()) throw ConfigError("task config must be a JSON object");
  TaskConfig c;
  const auto intermediate = parse_output_kind(j.value("intermediate", std::string("value")));
  if (j.contains("graph")) {
    c.graph = graph_from_json(j.at("graph"));
  } else if (j.contains("task")) {
    c.task = detail::get_field<std::string>(j, "task", "task config");
    std::optional<std::vector<std::size_t>> split;
    if (j.contains("split")) split = detail::get_field<std::vector<std::size_t>>(j, "split", "task config");
    const auto root = parse_output_kind(j.value("root", std::string("value")));
    c.graph = builtin_graph(c.task, intermediate, root, split);
  } else {
    throw ConfigError("task config needs either 'task' or 'graph'");
  }
  if (j.contains("sigma")) {
    c.graph.sigma = detail::get_field<double>(j, "sigma", "task config");
    if (!(c.graph.sigma > 0.0)) throw ConfigError("sigma must be positive");
  }
  c.sketch_seed = j.value("seed", std::uint64_t{0});
  const std::optional<std::size_t> rank = j.contains("rank") ? parse_rank(j.at("rank")) : std::nullopt;
  for (std::size_t p = 0; p < c.graph.programs.size(); ++p) {
    auto r = rank;
    if (j.contains("ranks") && j.at("ranks").contains(c.graph.programs[p].name)) {
      r = parse_rank(j.at("ranks").at(c.graph.programs[p].name));
    }
    c.sketch.push_back(r ? SketchConfig::with_rank(*r, c.sketch_seed) : SketchConfig::full(c.sketch_seed));
  }
  return c;
}

inline TaskConfig load_task_config(const std::filesystem::path& path) { return parse_task_config(detail::read_json(path)); }

// ---------------------------------------------------------------------------
// Summary and sketch directories

inline std::string summary_file(std::size_t p) { return "summary_" + std::to_string(p) + ".cts"; }
inline std::string core_file(std::size_t p, std::size_t j) {
  return "p" + std::to_string(p) + "_core" + std::to_string(j) + ".cts";
}

/// Summaries that fit the budget are written; the rest must have a
/// structured form and are recorded as such.
struct SummaryRecord {
  std::string program;
  Shape shape;
  double entries = 0.0;
  bool stored = false;
};

inline std::vector<SummaryRecord> write_summaries(const std::filesystem::path& dir, const ProgramGraph& g,
                                                  std::size_t budget = element_budget()) {
  detail::ensure_dir(dir);
  json manifest;
  manifest["graph"] = graph_to_json(g);
  manifest["summaries"] = json::array();
  std::vector<SummaryRecord> out;
  for (std::size_t p = 0; p < g.programs.size(); ++p) {
    const auto& sp = g.programs[p];
    SummaryRecord r{sp.name, sp.summary_shape(), sp.summary_entries(), false};
    json m{{"program", sp.name}, {"shape", r.shape}, {"entries", r.entries}};
    if (r.entries <= static_cast<double>(budget) || !sp.structured) {
      write_cts(dir / summary_file(p), build_summary(sp, SummaryMode::enumerate(), budget));
      r.stored = true;
      m["file"] = summary_file(p);
    } else {
      m["structured"] = true;
    }
    manifest["summaries"].push_back(m);
    out.push_back(std::move(r));
  }
  detail::write_json(dir / "manifest.json", manifest);
  return out;
}

/// The graph of a summary or sketch directory.
inline ProgramGraph read_graph(const std::filesystem::path& dir) {
  return graph_from_json(detail::get_field<json>(detail::read_json(dir / "manifest.json"), "graph", "manifest"));
}

/// Stored summary of program p, or nothing when only a structured form exists.
inline std::optional<DenseTensor> read_summary(const std::filesystem::path& dir, std::size_t p) {
  const auto m = detail::read_json(dir / "manifest.json");
  const auto& s = detail::get_field<json>(m, "summaries", "manifest");
  if (p >= s.size()) throw IoError("manifest has no summary for program " + std::to_string(p));
  if (!s[p].contains("file")) return std::nullopt;
  return read_cts(dir / s[p].at("file").get<std::string>());
}

inline void write_sketches(const std::filesystem::path& dir, const ProgramGraph& g, const std::vector<TTSketch>& sk,
                           const std::vector<SketchConfig>& cfg) {
  if (sk.size() != g.programs.size()) throw ArgumentError("write_sketches: one sketch per program expected");
  detail::ensure_dir(dir);
  json manifest;
  manifest["graph"] = graph_to_json(g);
  manifest["sketches"] = json::array();
  for (std::size_t p = 0; p < sk.size(); ++p) {
    json cores = json::array();
    for (std::size_t j = 0; j < sk[p].order(); ++j) {
      write_cts(dir / core_file(p, j), sk[p].core(j));
      cores.push_back(core_file(p, j));
    }
    manifest["sketches"].push_back({{"program", g.programs[p].name},
                                    {"rank", cfg.at(p).to_string()},
                                    {"ranks", sk[p].ranks()},
                                    {"truncation_errors", sk[p].truncation_errors()},
                                    {"parameters", sk[p].parameter_count()},
                                    {"cores", cores}});
  }
  detail::write_json(dir / "manifest.json", manifest);
}

inline std::vector<TTSketch> read_sketches(const std::filesystem::path& dir, const ProgramGraph& g) {
  const auto m = detail::read_json(dir / "manifest.json");
  const auto& s = detail::get_field<json>(m, "sketches", "manifest");
  if (s.size() != g.programs.size()) throw IoError(dir.string() + ": sketch count does not match the graph");
  std::vector<TTSketch> out;
  for (const auto& e : s) {
    std::vector<DenseTensor> cores;
    for (const auto& f : detail::get_field<std::vector<std::string>>(e, "cores", "sketch")) cores.push_back(read_cts(dir / f));
    try {
      out.emplace_back(std::move(cores), detail::get_field<std::vector<double>>(e, "truncation_errors", "sketch"));
    } catch (const ArgumentError& err) {
      throw IoError(dir.string() + ": " + err.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models

inline json model_to_json(const PerceptualModel& m) {
  return {{"kind", to_string(m.kind)},
          {"input_dim", m.input_dim},
          {"class_count", m.class_count},
          {"hidden", m.hidden},
          {"theta", m.theta}};
}

inline PerceptualModel model_from_json(const json& j) {
  const auto kind = detail::get_field<std::string>(j, "kind", "model");
  const auto in = detail::get_field<std::size_t>(j, "input_dim", "model");
  const auto classes = detail::get_field<std::size_t>(j, "class_count", "model");
  PerceptualModel m;
  if (kind == "linear") {
    m = PerceptualModel::linear(in, classes);
  } else if (kind == "mlp") {
    m = PerceptualModel::mlp(in, detail::get_field<std::size_t>(j, "hidden", "model"), classes);
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  auto theta = detail::get_field<std::vector<double>>(j, "theta", "model");
  if (theta.size() != m.theta.size()) throw ConfigError("model: theta has the wrong length");
  m.theta = std::move(theta);
  return m;
}

}  // namespace ctsketch
