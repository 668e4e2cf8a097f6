#pragma once

// Predictive layer, BPR objective, triple sampling and the training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/checkpoint.hpp"
#include "mitgnn/diffcore.hpp"
#include "mitgnn/evaluation.hpp"
#include "mitgnn/model.hpp"
#include "mitgnn/optimizer.hpp"
#include "mitgnn/propagation.hpp"

namespace mitgnn {

// ---- predictive layer -------------------------------------------------

// e* = e^(0) || e^(1) || ... || e^(L)
inline std::vector<double> final_representation(EntityKind kind, std::size_t index,
                                                const std::vector<LayerState>& states) {
  std::vector<double> out;
  for (const LayerState& s : states) {
    const Tensor& table = kind == EntityKind::user ? s.users
                          : kind == EntityKind::item ? s.items
                                                     : s.baskets;
    if (index >= table.rows()) throw Error(ErrorKind::lookup, "entity index out of range");
    auto row = table.row(index);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

// y(b, i; u) = e_u* . e_i* + e_b* . e_i*
inline double predict_score(std::size_t user, std::size_t basket, std::size_t item,
                            const std::vector<LayerState>& states) {
  double score = 0.0;
  for (const LayerState& s : states) {
    auto ei = s.items.row(item);
    score += dense::dot(s.users.row(user), ei) + dense::dot(s.baskets.row(basket), ei);
  }
  return score;
}

// Scores every item against per-layer query vectors (e_u^l + e_b^l).
inline std::vector<double> score_items(const std::vector<LayerState>& states,
                                       const std::vector<std::vector<double>>& queries) {
  if (queries.size() != states.size()) throw Error(ErrorKind::shape, "one query per layer required");
  const std::size_t m = states.front().items.rows();
  std::vector<double> scores(m, 0.0);
  for (std::size_t l = 0; l < states.size(); ++l) {
    const Tensor& items = states[l].items;
    for (std::size_t i = 0; i < m; ++i) scores[i] += dense::dot(queries[l], items.row(i));
  }
  return scores;
}

inline std::vector<double> score_basket(const std::vector<LayerState>& states, std::size_t user,
                                        std::size_t basket) {
  std::vector<std::vector<double>> queries;
  for (const LayerState& s : states) {
    std::vector<double> q(s.users.cols());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = s.users(user, j) + s.baskets(basket, j);
    queries.push_back(std::move(q));
  }
  return score_items(states, queries);
}

// ---- sampling ---------------------------------------------------------

struct SampleTriple {
  std::size_t basket;
  std::size_t positive;
  std::size_t negative;
  friend bool operator==(const SampleTriple&, const SampleTriple&) = default;
};

// Baskets uniform, positive uniform within the basket, each negative uniform
// over the items outside the basket (rejection sampled).
template <class Rng>
std::vector<SampleTriple> sample_triples(const BasketGraph& graph, std::size_t count,
                                         std::size_t negatives_per_positive, Rng& rng) {
  if (negatives_per_positive == 0) throw Error(ErrorKind::config, "negatives_per_positive must be >= 1");
  std::vector<std::size_t> eligible;
  for (std::size_t b = 0; b < graph.num_baskets(); ++b) {
    if (graph.has_basket(b) && graph.basket_items(b).size() < graph.num_items()) eligible.push_back(b);
  }
  if (eligible.empty()) throw Error(ErrorKind::data, "no basket admits a negative sample");
  std::uniform_int_distribution<std::size_t> pick_basket(0, eligible.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, graph.num_items() - 1);
  std::vector<SampleTriple> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t b = eligible[pick_basket(rng)];
    const auto& items = graph.basket_items(b);
    std::uniform_int_distribution<std::size_t> pick_pos(0, items.size() - 1);
    const std::size_t pos = items[pick_pos(rng)];
    for (std::size_t n = 0; n < negatives_per_positive && out.size() < count; ++n) {
      std::size_t neg;
      do {
        neg = pick_item(rng);
      } while (std::binary_search(items.begin(), items.end(), neg));
      out.push_back({b, pos, neg});
    }
  }
  return out;
}

// ---- objective --------------------------------------------------------

// -sum log logistic(y(b,i) - y(b,j)) + lambda * ||Theta||^2 on the tape.
inline Var bpr_loss(Tape& tape, const ForwardVars& fv, const BasketGraph& graph,
                    std::span<const SampleTriple> triples, ModelParams& params, double lambda,
                    bool track_grads = true) {
  if (triples.empty()) throw Error(ErrorKind::usage, "bpr_loss needs at least one triple");
  std::vector<std::size_t> owners, baskets, pos, neg;
  for (const auto& t : triples) {
    if (!graph.has_basket(t.basket)) throw Error(ErrorKind::lookup, "triple basket absent from graph");
    owners.push_back(graph.owner(t.basket));
    baskets.push_back(t.basket);
    pos.push_back(t.positive);
    neg.push_back(t.negative);
  }
  auto g_user = std::make_shared<SparseRows>(SparseRows::gather(owners, graph.num_users()));
  auto g_basket = std::make_shared<SparseRows>(SparseRows::gather(baskets, graph.num_baskets()));
  auto g_pos = std::make_shared<SparseRows>(SparseRows::gather(pos, graph.num_items()));
  auto g_neg = std::make_shared<SparseRows>(SparseRows::gather(neg, graph.num_items()));

  std::optional<Var> margin;
  for (std::size_t l = 0; l < fv.users.size(); ++l) {
    Var query = add(spmm(g_user, fv.users[l]), spmm(g_basket, fv.baskets[l]));
    Var delta = sub(spmm(g_pos, fv.items[l]), spmm(g_neg, fv.items[l]));
    Var term = row_dot(query, delta);
    margin = margin ? add(*margin, term) : term;
  }
  Var loss = scale(sum_all(log_sigmoid(*margin)), -1.0);
  if (lambda != 0.0) {
    std::optional<Var> reg;
    for (Param& p : params.store().all()) {
      Var leaf = track_grads ? tape.leaf(p) : tape.constant(p.value);
      Var sq = sum_squares(leaf);
      reg = reg ? add(*reg, sq) : sq;
    }
    loss = add(loss, scale(*reg, lambda));
  }
  return loss;
}

inline double l2_penalty(const ParamStore& params) {
  double s = 0.0;
  for (const Param& p : params.all())
    for (double v : p.value.data()) s += v * v;
  return s;
}

// Same objective evaluated directly from layer states.
inline double bpr_loss_value(std::span<const SampleTriple> triples,
                             const std::vector<LayerState>& states, const BasketGraph& graph,
                             const ModelParams& params, double lambda) {
  if (triples.empty()) throw Error(ErrorKind::usage, "bpr_loss needs at least one triple");
  double loss = 0.0;
  for (const auto& t : triples) {
    const std::size_t u = graph.owner(t.basket);
    const double margin =
        predict_score(u, t.basket, t.positive, states) - predict_score(u, t.basket, t.negative, states);
    loss -= log_sigmoid(margin);
  }
  return loss + lambda * l2_penalty(params.store());
}

// ---- training loop ----------------------------------------------------

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t intents = 3;
  std::size_t layers = 3;
  double learning_rate = 5e-4;
  double lambda = 1e-4;
  double dropout = 0.1;
  std::size_t epochs = 50;
  std::size_t triples_per_epoch = 0;  // 0: |E_bi| of the training graph
  std::size_t negatives_per_positive = 1;
  std::size_t batch_size = 4096;
  std::uint64_t seed = 42;
  double leaky_slope = 0.2;
  double norm_eps = 1e-12;
  double val_frac = 0.05;
  double val_holdout_frac = 0.2;
  std::size_t eval_every = 5;
  std::size_t checkpoint_every = 0;
  std::string checkpoint_dir;
  std::size_t max_neighbors = 0;
  bool random_attention_init = false;

  ForwardOptions forward_options(bool train_mode) const {
    ForwardOptions o;
    o.train = train_mode;
    o.dropout = dropout;
    o.leaky_slope = leaky_slope;
    o.norm_eps = norm_eps;
    return o;
  }

  void validate() const {
    if (dim == 0) throw Error(ErrorKind::config, "dim must be positive");
    if (intents == 0) throw Error(ErrorKind::config, "intents must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::config, "lr must be positive");
    if (lambda < 0.0) throw Error(ErrorKind::config, "lambda must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::config, "dropout must lie in [0, 1)");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
      throw Error(ErrorKind::config, "leaky_slope must lie in [0, 1)");
    if (batch_size == 0) throw Error(ErrorKind::config, "batch_size must be positive");
    if (negatives_per_positive == 0) throw Error(ErrorKind::config, "negatives_per_positive must be >= 1");
    if (!(val_frac >= 0.0 && val_frac < 1.0)) throw Error(ErrorKind::config, "val_frac must lie in [0, 1)");
    if (!(norm_eps > 0.0)) throw Error(ErrorKind::config, "norm_eps must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> val_recall100;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  std::vector<std::string> warnings;
};

inline void write_loss_curve(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << "epoch,loss,val_recall100\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << format_double(r.loss) << ',';
    if (r.val_recall100) out << format_double(*r.val_recall100);
    out << '\n';
  }
}

// Holds out items of a val_frac share of baskets for model selection.
inline DataSplit carve_validation(const BasketGraph& graph, double val_frac, double holdout_frac,
                                  std::uint64_t seed) {
  DataSplit all = split_transductive(graph, holdout_frac, seed);
  std::vector<std::size_t> order(all.test_cases.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t keep = static_cast<std::size_t>(std::ceil(val_frac * static_cast<double>(order.size())));
  keep = std::min(keep, order.size());
  order.resize(keep);
  std::sort(order.begin(), order.end());
  DataSplit val;
  val.mode = SplitMode::transductive;
  std::vector<std::vector<std::size_t>> items = graph.all_basket_items();
  for (std::size_t k : order) {
    const TestCase& tc = all.test_cases[k];
    items[tc.basket] = tc.seed_items;
    val.test_cases.push_back(tc);
  }
  val.train_graph = BasketGraph(graph.num_users(), graph.num_items(), graph.owners(),
                                std::move(items), graph.basket_orders());
  return val;
}

inline ModelDims dims_for(const TrainConfig& config, const BasketGraph& graph) {
  return ModelDims{graph.num_users(), graph.num_baskets(), graph.num_items(),
                   config.dim,        config.intents,      config.layers};
}

// Recall@100 of a model over transductive-style cases on `graph`.
inline double transductive_recall(const ModelParams& params, const BasketGraph& graph,
                                  const std::vector<TestCase>& cases, const TrainConfig& config,
                                  std::size_t k) {
  ForwardResult fr = forward(GraphOperators::build(graph, config.max_neighbors, config.seed), params,
                             config.forward_options(false));
  MetricReport rep = evaluate(
      cases, [&](const TestCase& tc) { return score_basket(fr.states, tc.user, tc.basket); }, {k});
  return rep.recall_at(k);
}

using ProgressFn = std::function<void(const EpochRecord&)>;

// Mini-batch Adam over sampled BPR triples with full-graph propagation per
// step. With val_frac > 0 the returned parameters are those of the epoch with
// the best validation Recall@100.
inline TrainResult train(const TrainConfig& config, const BasketGraph& train_graph,
                         ProgressFn progress = {}, std::optional<ModelParams> init = {}) {
  config.validate();
  TrainResult result;
  for (std::size_t u = 0; u < train_graph.num_users(); ++u) {
    if (train_graph.user_baskets(u).empty()) {
      result.warnings.push_back("some users have no training baskets; their basket term is zero");
      break;
    }
  }

  const ModelDims dims = dims_for(config, train_graph);
  ModelParams params = init ? std::move(*init)
                            : initialize_params(dims, config.seed, config.random_attention_init);
  if (!(params.dims() == dims)) throw Error(ErrorKind::shape, "initial parameters do not match graph");

  DataSplit val;
  const BasketGraph* fit_graph = &train_graph;
  const bool validate = config.val_frac > 0.0;
  if (validate) {
    val = carve_validation(train_graph, config.val_frac, config.val_holdout_frac, config.seed + 1);
    fit_graph = &val.train_graph;
    if (val.test_cases.empty()) result.warnings.push_back("validation set is empty");
  }
  const GraphOperators ops = GraphOperators::build(*fit_graph, config.max_neighbors, config.seed);
  const std::size_t per_epoch =
      config.triples_per_epoch ? config.triples_per_epoch : fit_graph->num_basket_item_edges();

  Adam adam(params.store(), AdamOptions{config.learning_rate, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(config.seed);
  std::optional<double> best_val;
  ModelParams best = params;
  ModelParams last_good = params;
  auto checkpoint_path = [&](const char* name) {
    return (std::filesystem::path(config.checkpoint_dir) / name).string();
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      const auto triples = sample_triples(*fit_graph, per_epoch, config.negatives_per_positive, rng);
      for (std::size_t start = 0; start < triples.size(); start += config.batch_size) {
        const std::size_t end = std::min(triples.size(), start + config.batch_size);
        std::span<const SampleTriple> batch(triples.data() + start, end - start);
        params.store().zero_grad();
        Tape tape;
        ForwardVars fv = forward_on_tape(tape, ops, params, config.forward_options(true), &rng);
        Var loss = bpr_loss(tape, fv, *fit_graph, batch, params, config.lambda);
        rec.loss += loss.value()(0, 0);
        tape.backward(loss);
        adam.step(params.store());
      }
      if (!std::isfinite(rec.loss)) throw Error(ErrorKind::numeric, "loss is not finite");
      for (const Param& p : params.store().all()) {
        if (p.value.first_non_finite() != p.value.size()) {
          throw Error(ErrorKind::numeric, "parameter " + p.name + " became non-finite");
        }
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      if (!config.checkpoint_dir.empty()) save_checkpoint(checkpoint_path("last_good.ckpt"), last_good);
      throw Error(ErrorKind::numeric, "training aborted at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    last_good = params;

    const bool eval_now = validate && !val.test_cases.empty() &&
                          (epoch % std::max<std::size_t>(1, config.eval_every) == 0 || epoch == config.epochs);
    if (eval_now) {
      rec.val_recall100 = transductive_recall(params, *fit_graph, val.test_cases, config, 100);
      if (!best_val || *rec.val_recall100 > *best_val) {
        best_val = rec.val_recall100;
        best = params;
        result.best_epoch = epoch;
      }
    }
    if (!config.checkpoint_dir.empty() && config.checkpoint_every > 0 &&
        epoch % config.checkpoint_every == 0) {
      save_checkpoint(checkpoint_path("last.ckpt"), params, &adam);
    }
    result.curve.push_back(rec);
    if (progress) progress(rec);
  }
  if (best_val) {
    result.params = std::move(best);
  } else {
    result.params = std::move(params);
    result.best_epoch = config.epochs;
  }
  return result;
}

}  // namespace mitgnn
