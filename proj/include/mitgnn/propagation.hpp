#pragma once

// Layer-wise propagation over the whole basket graph. Each layer runs the
// intent module for every basket, then the user and item aggregators
//   e_u' = LeakyReLU(e_u + mean_{b in N_b(u)} e~_b + mean_{i in N_i(u)} e_i)
//   e_i' = LeakyReLU(e_i + mean_{b in N_b(i)} e~~_b + mean_{u in N_u(i)} e_u)
// and finally L2-normalizes (plus train-time dropout) the three outputs.

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/diffcore.hpp"
#include "mitgnn/intent.hpp"
#include "mitgnn/model.hpp"

namespace mitgnn {

// Constant neighborhood operators derived from one graph.
struct GraphOperators {
  std::shared_ptr<const SparseRows> basket_owner;      // S x N gather
  std::shared_ptr<const SparseRows> basket_item_sum;   // S x M
  std::shared_ptr<const SparseRows> user_basket_mean;  // N x S
  std::shared_ptr<const SparseRows> user_item_mean;    // N x M
  std::shared_ptr<const SparseRows> item_basket_mean;  // M x S
  std::shared_ptr<const SparseRows> item_user_mean;    // M x N
  std::size_t users = 0;
  std::size_t baskets = 0;
  std::size_t items = 0;

  // max_neighbors > 0 caps every neighbor list with a seeded subsample.
  static GraphOperators build(const BasketGraph& g, std::size_t max_neighbors = 0,
                              std::uint64_t seed = 0) {
    std::mt19937_64 rng(seed);
    auto cap = [&](std::vector<std::vector<std::size_t>> lists) {
      if (max_neighbors == 0) return lists;
      for (auto& list : lists) {
        if (list.size() <= max_neighbors) continue;
        std::shuffle(list.begin(), list.end(), rng);
        list.resize(max_neighbors);
        std::sort(list.begin(), list.end());
      }
      return lists;
    };
    GraphOperators ops;
    ops.users = g.num_users();
    ops.baskets = g.num_baskets();
    ops.items = g.num_items();
    ops.basket_owner = std::make_shared<SparseRows>(SparseRows::gather(g.owners(), g.num_users()));
    ops.basket_item_sum = std::make_shared<SparseRows>(
        SparseRows::from_lists(cap(g.all_basket_items()), g.num_items(), false));
    ops.user_basket_mean = std::make_shared<SparseRows>(
        SparseRows::from_lists(cap(g.all_user_baskets()), g.num_baskets(), true));
    ops.user_item_mean = std::make_shared<SparseRows>(
        SparseRows::from_lists(cap(g.all_user_items()), g.num_items(), true));
    ops.item_basket_mean = std::make_shared<SparseRows>(
        SparseRows::from_lists(cap(g.all_item_baskets()), g.num_baskets(), true));
    ops.item_user_mean = std::make_shared<SparseRows>(
        SparseRows::from_lists(cap(g.all_item_users()), g.num_users(), true));
    return ops;
  }
};

struct ForwardOptions {
  bool train = false;         // enables dropout
  bool track_grads = true;    // read params as tape leaves
  double dropout = 0.0;
  double leaky_slope = 0.2;
  double norm_eps = 1e-12;
};

struct LayerState {
  Tensor users;    // N x d
  Tensor items;    // M x d
  Tensor baskets;  // S x d
  // Type-guided basket embeddings computed from this layer (empty on the
  // last layer).
  Tensor user_guided;
  Tensor item_guided;
};

struct IntentTrace {
  std::vector<Tensor> h;
  std::vector<Tensor> o;
  Tensor gamma;
  Tensor alpha;
  Tensor beta;
};

struct ForwardResult {
  std::vector<LayerState> states;   // layers 0..L
  std::vector<IntentTrace> intents; // transitions 0..L-1
};

struct ForwardVars {
  std::vector<Var> users;
  std::vector<Var> items;
  std::vector<Var> baskets;
  std::vector<IntentLayerOutput> intents;
};

inline void check_dims(const GraphOperators& ops, const ModelDims& dims) {
  if (ops.users != dims.users || ops.baskets != dims.baskets || ops.items != dims.items) {
    throw Error(ErrorKind::shape, "model dims " + dims.describe() + " do not match graph (N=" +
                                      std::to_string(ops.users) + " S=" + std::to_string(ops.baskets) +
                                      " M=" + std::to_string(ops.items) + ")");
  }
}

template <class Rng>
ForwardVars forward_on_tape(Tape& tape, const GraphOperators& ops, ModelParams& params,
                            const ForwardOptions& opt, Rng* rng) {
  const ModelDims& dims = params.dims();
  check_dims(ops, dims);
  if (opt.train && opt.dropout > 0.0 && rng == nullptr) {
    throw Error(ErrorKind::usage, "train-mode dropout needs a random generator");
  }
  auto read = [&](const std::string& name) {
    Param& p = params.param(name);
    return opt.track_grads ? tape.leaf(p) : tape.constant(p.value);
  };
  auto regularize = [&](Var x) {
    Var y = l2_normalize_rows(x, opt.norm_eps);
    if (opt.train && opt.dropout > 0.0) {
      y = apply_mask(y, dropout_mask(y.rows(), y.cols(), opt.dropout, *rng));
    }
    return y;
  };

  ForwardVars fv;
  fv.users.push_back(read(param_names::user_embedding));
  fv.items.push_back(read(param_names::item_embedding));
  fv.baskets.push_back(read(param_names::basket_embedding));

  for (std::size_t l = 0; l < dims.layers; ++l) {
    try {
      IntentLayerVars w;
      w.W_b = read(param_names::layer(l, "W_b"));
      for (std::size_t t = 0; t < dims.intents; ++t) {
        w.W_1.push_back(read(param_names::head(l, "W_1", t)));
        w.W_2.push_back(read(param_names::head(l, "W_2", t)));
      }
      w.a_b = read(param_names::layer(l, "a_b"));
      w.a_u = read(param_names::layer(l, "a_u"));
      w.a_i = read(param_names::layer(l, "a_i"));

      Var eu = fv.users[l];
      Var ei = fv.items[l];
      Var eb = fv.baskets[l];
      Var owner_emb = spmm(ops.basket_owner, eu);
      Var item_sum = spmm(ops.basket_item_sum, ei);
      Var mean_item = mean_rows(ei);
      IntentLayerOutput intent = intent_layer(eb, owner_emb, item_sum, mean_item, w, opt.leaky_slope);

      Var user_in = add(add(eu, spmm(ops.user_basket_mean, intent.user_guided)),
                        spmm(ops.user_item_mean, ei));
      Var item_in = add(add(ei, spmm(ops.item_basket_mean, intent.item_guided)),
                        spmm(ops.item_user_mean, eu));
      Var user_next = leaky_relu(user_in, opt.leaky_slope);
      Var item_next = leaky_relu(item_in, opt.leaky_slope);

      fv.users.push_back(regularize(user_next));
      fv.items.push_back(regularize(item_next));
      fv.baskets.push_back(regularize(intent.basket_next));
      fv.intents.push_back(std::move(intent));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      throw Error(ErrorKind::numeric, "layer " + std::to_string(l) + ": " + e.what());
    }
  }
  return fv;
}

inline ForwardResult collect(const ForwardVars& fv) {
  ForwardResult result;
  for (std::size_t l = 0; l < fv.users.size(); ++l) {
    LayerState s;
    s.users = fv.users[l].value();
    s.items = fv.items[l].value();
    s.baskets = fv.baskets[l].value();
    if (l < fv.intents.size()) {
      s.user_guided = fv.intents[l].user_guided.value();
      s.item_guided = fv.intents[l].item_guided.value();
    }
    result.states.push_back(std::move(s));
  }
  for (const auto& in : fv.intents) {
    IntentTrace trace;
    for (const Var& h : in.h) trace.h.push_back(h.value());
    for (const Var& o : in.o) trace.o.push_back(o.value());
    trace.gamma = in.gamma.value();
    trace.alpha = in.alpha.value();
    trace.beta = in.beta.value();
    result.intents.push_back(std::move(trace));
  }
  return result;
}

// Evaluation-mode forward: deterministic, no dropout, no gradient tracking.
inline ForwardResult forward(const GraphOperators& ops, const ModelParams& params,
                             ForwardOptions opt = {}) {
  opt.train = false;
  opt.track_grads = false;
  Tape tape;
  std::mt19937_64* no_rng = nullptr;
  return collect(forward_on_tape(tape, ops, const_cast<ModelParams&>(params), opt, no_rng));
}

inline ForwardResult forward(const BasketGraph& graph, const ModelParams& params,
                             ForwardOptions opt = {}) {
  return forward(GraphOperators::build(graph), params, opt);
}

// Train-mode forward (dropout active) returning plain values.
template <class Rng>
ForwardResult forward_train(const GraphOperators& ops, const ModelParams& params,
                            ForwardOptions opt, Rng& rng) {
  opt.train = true;
  opt.track_grads = false;
  Tape tape;
  return collect(forward_on_tape(tape, ops, const_cast<ModelParams&>(params), opt, &rng));
}

namespace detail {

inline std::vector<double> mean_of_rows(const Tensor& table, const std::vector<std::size_t>& rows,
                                        std::size_t d) {
  std::vector<double> out(d, 0.0);
  if (rows.empty()) return out;
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < d; ++j) out[j] += table(r, j);
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

}  // namespace detail

// Pre-normalization user update for one user; `state` must carry the
// user-guided basket embeddings of its layer.
inline std::vector<double> user_aggregate(std::size_t u, const BasketGraph& graph,
                                          const LayerState& state, double slope) {
  const std::size_t d = state.users.cols();
  auto baskets = detail::mean_of_rows(state.user_guided, graph.user_baskets(u), d);
  auto items = detail::mean_of_rows(state.items, graph.user_items(u), d);
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j)
    out[j] = dense::leaky_relu(state.users(u, j) + baskets[j] + items[j], slope);
  return out;
}

inline std::vector<double> item_aggregate(std::size_t i, const BasketGraph& graph,
                                          const LayerState& state, double slope) {
  const std::size_t d = state.items.cols();
  auto baskets = detail::mean_of_rows(state.item_guided, graph.item_baskets(i), d);
  auto users = detail::mean_of_rows(state.users, graph.item_users(i), d);
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j)
    out[j] = dense::leaky_relu(state.items(i, j) + baskets[j] + users[j], slope);
  return out;
}

}  // namespace mitgnn
