#pragma once

// Pipeline commands behind the mitgnn tool. Each reads its inputs from the
// run config, writes fixed-name outputs under `out`, and reports progress on
// the log stream. run_command maps errors to exit codes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/checkpoint.hpp"
#include "mitgnn/config.hpp"
#include "mitgnn/evaluation.hpp"
#include "mitgnn/gradcheck.hpp"
#include "mitgnn/inductive.hpp"
#include "mitgnn/synth.hpp"
#include "mitgnn/training.hpp"

namespace mitgnn {

enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_config = 2,
  exit_data = 3,
  exit_numeric = 4,
  exit_io = 5,
  exit_lookup = 6,
  exit_shape = 7,
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::usage: return exit_config;
    case ErrorKind::data:
    case ErrorKind::format:
    case ErrorKind::integrity: return exit_data;
    case ErrorKind::numeric: return exit_numeric;
    case ErrorKind::io: return exit_io;
    case ErrorKind::lookup: return exit_lookup;
    case ErrorKind::shape: return exit_shape;
  }
  return exit_internal;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"ingest", "split", "train", "eval",
                                              "infer",  "synth", "gradcheck", "grid"};
  return names;
}

namespace detail {

inline std::filesystem::path out_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.text("out"));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory " + dir.string());
  return dir;
}

inline std::string path_or(const RunConfig& cfg, const std::string& key, const char* fallback) {
  const std::string& v = cfg.text(key);
  return v.empty() ? (std::filesystem::path(cfg.text("out")) / fallback).string() : v;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
  return f;
}

inline void write_effective_config(const RunConfig& cfg, const std::string& command) {
  auto f = open_out(out_dir(cfg) / (command + ".config.txt"));
  cfg.write(f);
}

struct LoadedGraph {
  Interactions data;
  BasketGraph graph;
};

inline LoadedGraph load_graph(const RunConfig& cfg) {
  LoadedGraph g;
  g.data = load_interactions(path_or(cfg, "graph", "graph.cache"));
  g.graph = build_graph(g.data);
  g.graph.check_invariants();
  return g;
}

inline DataSplit load_split(const RunConfig& cfg, const LoadedGraph& g) {
  const std::string path = path_or(cfg, "split", "split.tsv");
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open split " + path);
  return read_split(in, g.graph, g.data);
}

inline DataSplit make_split(const RunConfig& cfg, const BasketGraph& graph) {
  const SplitMode mode = parse_split_mode(cfg.text("split_mode"));
  return mode == SplitMode::transductive
             ? split_transductive(graph, cfg.real("holdout_frac"), cfg.u64("seed"))
             : split_inductive(graph, cfg.size("seed_count"), cfg.u64("seed"));
}

inline void print_graph_stats(std::ostream& log, const BasketGraph& g) {
  log << "users=" << g.num_users() << " baskets=" << g.present_basket_count()
      << " items=" << g.num_items() << " basket_item_edges=" << g.num_basket_item_edges()
      << " user_item_edges=" << g.num_user_item_edges() << " density=" << format_double(g.density())
      << '\n';
}

}  // namespace detail

// csv -> filtered, validated canonical CSV at <out>/graph.cache
inline BasketGraph cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  const std::string& input = cfg.text("input");
  if (input.empty()) throw Error(ErrorKind::config, "ingest needs input=<csv>");
  Interactions raw = load_interactions(input);
  Interactions data =
      filter_interactions(raw, cfg.size("min_basket_items"), cfg.size("min_user_baskets"));
  if (data.records.empty()) throw Error(ErrorKind::data, "no interactions survive filtering");
  BasketGraph graph = build_graph(data);
  graph.check_invariants();
  auto f = detail::open_out(detail::out_dir(cfg) / "graph.cache");
  write_interactions(f, data);
  detail::write_effective_config(cfg, "ingest");
  detail::print_graph_stats(log, graph);
  return graph;
}

inline DataSplit cmd_split(const RunConfig& cfg, std::ostream& log) {
  const detail::LoadedGraph g = detail::load_graph(cfg);
  DataSplit split = detail::make_split(cfg, g.graph);
  for (const auto& w : split.warnings) log << "warning: " << w << '\n';
  auto f = detail::open_out(detail::out_dir(cfg) / "split.tsv");
  write_split(f, split, g.data);
  detail::write_effective_config(cfg, "split");
  log << to_string(split.mode) << " split: " << split.test_cases.size() << " test cases\n";
  return split;
}

inline TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  TrainConfig tc = cfg.train_config();
  const detail::LoadedGraph g = detail::load_graph(cfg);
  const DataSplit split = detail::load_split(cfg, g);
  const auto dir = detail::out_dir(cfg);
  tc.checkpoint_dir = dir.string();
  log << "training " << dims_for(tc, split.train_graph).describe() << '\n';
  TrainResult result = train(tc, split.train_graph, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << " loss " << format_double(r.loss);
    if (r.val_recall100) log << " val_recall@100 " << format_double(*r.val_recall100);
    log << '\n';
  });
  for (const auto& w : result.warnings) log << "warning: " << w << '\n';
  save_checkpoint(detail::path_or(cfg, "checkpoint", "model.ckpt"), result.params);
  auto curve = detail::open_out(dir / "losses.csv");
  write_loss_curve(curve, result.curve);
  detail::write_effective_config(cfg, "train");
  log << "best epoch " << result.best_epoch << '\n';
  return result;
}

inline MetricReport cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const detail::LoadedGraph g = detail::load_graph(cfg);
  const DataSplit split = detail::load_split(cfg, g);
  const Checkpoint ck = load_checkpoint(detail::path_or(cfg, "checkpoint", "model.ckpt"));
  check_dims(GraphOperators::build(split.train_graph), ck.params.dims());
  ForwardOptions fo = cfg.train_config().forward_options(false);
  const bool per_case = cfg.boolean("per_case");
  MetricReport report =
      evaluate(split.test_cases, make_mitgnn_scorer(ck.params, split, fo), cfg.sizes("k_set"), per_case);
  const auto dir = detail::out_dir(cfg);
  auto f = detail::open_out(dir / "metrics.csv");
  write_report_csv(f, report);
  if (per_case) {
    auto pc = detail::open_out(dir / "per_case.tsv");
    write_per_case_tsv(pc, report, &g.data.baskets);
  }
  detail::write_effective_config(cfg, "eval");
  if (report.skipped) log << "warning: " << report.skipped << " cases with empty ground truth skipped\n";
  for (std::size_t k = 0; k < report.ks.size(); ++k) {
    log << "K=" << report.ks[k] << " recall=" << format_double(report.recall[k])
        << " hr=" << format_double(report.hr[k]) << " ndcg=" << format_double(report.ndcg[k]) << '\n';
  }
  return report;
}

// Scores a cold basket for a known user from seed items; prints the top list
// and writes <out>/ranked.tsv.
inline RankedList cmd_infer(const RunConfig& cfg, std::ostream& out) {
  const detail::LoadedGraph g = detail::load_graph(cfg);
  const std::string& user_name = cfg.text("user");
  if (user_name.empty()) throw Error(ErrorKind::config, "infer needs user=<id>");
  const std::size_t user = g.data.users.require(user_name, "user");
  std::vector<std::size_t> seeds;
  if (!cfg.text("items").empty()) {
    std::stringstream in(cfg.text("items"));
    std::string name;
    while (std::getline(in, name, ',')) seeds.push_back(g.data.items.require(detail::trim(name), "item"));
  }
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  const std::string split_path = detail::path_or(cfg, "split", "split.tsv");
  const BasketGraph train_graph =
      std::filesystem::exists(split_path) ? detail::load_split(cfg, g).train_graph : g.graph;
  const Checkpoint ck = load_checkpoint(detail::path_or(cfg, "checkpoint", "model.ckpt"));
  const InductiveScorer scorer(ck.params, train_graph, cfg.train_config().forward_options(false));
  const std::vector<double> scores = scorer.score(ColdBasket{user, seeds});
  const RankedList ranked = rank_candidates(kNone, scores, seeds, cfg.size("top"));

  auto f = detail::open_out(detail::out_dir(cfg) / "ranked.tsv");
  f << "rank\titem\tscore\n";
  for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
    const auto& e = ranked.entries[r];
    f << r + 1 << '\t' << g.data.items.name(e.item) << '\t' << format_double(e.score) << '\n';
    out << r + 1 << '\t' << g.data.items.name(e.item) << '\t' << format_double(e.score) << '\n';
  }
  detail::write_effective_config(cfg, "infer");
  return ranked;
}

// Writes interactions.csv, labels.csv and a ready graph.cache.
inline SynthData cmd_synth(const RunConfig& cfg, std::ostream& log) {
  SynthData synth = generate(cfg.synth_spec());
  const auto dir = detail::out_dir(cfg);
  {
    auto f = detail::open_out(dir / "interactions.csv");
    write_interactions(f, synth.data);
  }
  {
    auto f = detail::open_out(dir / "graph.cache");
    write_interactions(f, synth.data);
  }
  {
    auto f = detail::open_out(dir / "labels.csv");
    write_labels(f, synth);
  }
  detail::write_effective_config(cfg, "synth");
  detail::print_graph_stats(log, build_graph(synth.data));
  return synth;
}

inline GradCheckReport cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  ModelGradCheckOptions opt;
  opt.dims.dim = cfg.size("dim");
  opt.dims.intents = cfg.size("intents");
  opt.dims.layers = cfg.size("layers");
  opt.seed = cfg.u64("seed");
  opt.lambda = cfg.real("lambda");
  opt.random_attention = cfg.boolean("random_attention");
  opt.step = cfg.real("fd_step");
  opt.tolerance = cfg.real("tolerance");
  opt.leaky_slope = cfg.real("leaky_slope");
  if (!(opt.step > 0.0)) throw Error(ErrorKind::config, "fd_step must be positive");
  const GradCheckReport report = model_gradient_check(toy_graph(), opt);
  for (const auto& e : report.entries) {
    out << e.name << " max_rel_err=" << format_double(e.max_rel_error) << '\n';
  }
  out << (report.passed() ? "PASS" : "FAIL") << " max_rel_err=" << format_double(report.max_rel_error())
      << (report.passed() ? " < " : " >= ") << format_double(opt.tolerance) << '\n';
  return report;
}

struct GridCell {
  std::size_t intents;
  std::size_t layers;
  double recall;
};

// Recall@grid_k for every (T, L) pair. Uses graph= when given, otherwise
// synthetic data from the synth_* keys.
inline std::vector<GridCell> cmd_grid(const RunConfig& cfg, std::ostream& log) {
  BasketGraph graph;
  if (!cfg.text("graph").empty()) {
    graph = detail::load_graph(cfg).graph;
  } else {
    graph = build_graph(generate(cfg.synth_spec()).data);
  }
  const DataSplit split = detail::make_split(cfg, graph);
  const std::size_t k = cfg.size("grid_k");
  std::vector<GridCell> cells;
  for (std::size_t t : cfg.sizes("grid_intents")) {
    for (std::size_t l : cfg.sizes("grid_layers")) {
      TrainConfig tc = cfg.train_config();
      tc.intents = t;
      tc.layers = l;
      const TrainResult result = train(tc, split.train_graph);
      const MetricReport report =
          evaluate(split.test_cases, make_mitgnn_scorer(result.params, split, tc.forward_options(false)), {k});
      cells.push_back({t, l, report.recall_at(k)});
      log << "T=" << t << " L=" << l << " recall@" << k << '=' << format_double(cells.back().recall) << '\n';
    }
  }
  auto f = detail::open_out(detail::out_dir(cfg) / "grid.csv");
  f << "intents,layers,k,recall\n";
  for (const auto& c : cells) f << c.intents << ',' << c.layers << ',' << k << ',' << format_double(c.recall) << '\n';
  detail::write_effective_config(cfg, "grid");
  return cells;
}

// Runs one command; errors are reported on `err` and mapped to exit codes.
inline int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out,
                       std::ostream& err) {
  try {
    if (command == "ingest") cmd_ingest(cfg, err);
    else if (command == "split") cmd_split(cfg, err);
    else if (command == "train") cmd_train(cfg, err);
    else if (command == "eval") cmd_eval(cfg, err);
    else if (command == "infer") cmd_infer(cfg, out);
    else if (command == "synth") cmd_synth(cfg, err);
    else if (command == "gradcheck") return cmd_gradcheck(cfg, out).passed() ? exit_ok : exit_numeric;
    else if (command == "grid") cmd_grid(cfg, err);
    else throw Error(ErrorKind::usage, "unknown command '" + command + "'");
    return exit_ok;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return exit_internal;
  }
}

}  // namespace mitgnn
