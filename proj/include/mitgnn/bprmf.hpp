#pragma once

// Matrix-factorization BPR baseline. Every user's baskets are merged into one
// item set; a basket is scored with its owner's embedding only.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/diffcore.hpp"
#include "mitgnn/evaluation.hpp"
#include "mitgnn/model.hpp"
#include "mitgnn/optimizer.hpp"

namespace mitgnn {

struct BprMfModel {
  ParamStore params;

  const Tensor& users() const { return params.at(param_names::user_embedding).value; }
  const Tensor& items() const { return params.at(param_names::item_embedding).value; }

  std::vector<double> score_user(std::size_t user) const {
    if (user >= users().rows()) throw Error(ErrorKind::lookup, "unknown user index " + std::to_string(user));
    std::vector<double> scores(items().rows());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = dense::dot(users().row(user), items().row(i));
    return scores;
  }

  CaseScorer scorer() const {
    return [this](const TestCase& tc) { return score_user(tc.user); };
  }
};

struct BprMfConfig {
  std::size_t dim = 64;
  double learning_rate = 1e-3;
  double lambda = 1e-4;
  std::size_t epochs = 50;
  std::size_t triples_per_epoch = 0;  // 0: |E_bi|
  std::size_t batch_size = 4096;
  std::uint64_t seed = 42;
};

struct SampleTripleUser {
  std::size_t user;
  std::size_t positive;
  std::size_t negative;
};

// Positive drawn from the user's merged basket items, negative from the rest.
template <class Rng>
std::vector<SampleTripleUser> sample_user_triples(const BasketGraph& graph, std::size_t count,
                                                  Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    const auto& items = graph.user_items(u);
    if (!items.empty() && items.size() < graph.num_items()) eligible.push_back(u);
  }
  if (eligible.empty()) throw Error(ErrorKind::data, "no user admits a negative sample");
  std::uniform_int_distribution<std::size_t> pick_user(0, eligible.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, graph.num_items() - 1);
  std::vector<SampleTripleUser> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t u = eligible[pick_user(rng)];
    const auto& items = graph.user_items(u);
    std::uniform_int_distribution<std::size_t> pick_pos(0, items.size() - 1);
    const std::size_t pos = items[pick_pos(rng)];
    std::size_t neg;
    do {
      neg = pick_item(rng);
    } while (std::binary_search(items.begin(), items.end(), neg));
    out.push_back({u, pos, neg});
  }
  return out;
}

inline BprMfModel train_bprmf(const BprMfConfig& config, const BasketGraph& graph) {
  if (config.dim == 0 || config.batch_size == 0) throw Error(ErrorKind::config, "invalid BPR-MF config");
  BprMfModel model;
  std::mt19937_64 rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
  Tensor users(graph.num_users(), config.dim);
  Tensor items(graph.num_items(), config.dim);
  fill_uniform(users, bound, rng);
  fill_uniform(items, bound, rng);
  model.params.add(param_names::user_embedding, std::move(users));
  model.params.add(param_names::item_embedding, std::move(items));
  Adam adam(model.params, AdamOptions{config.learning_rate, 0.9, 0.999, 1e-8});
  const std::size_t per_epoch =
      config.triples_per_epoch ? config.triples_per_epoch : graph.num_basket_item_edges();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto triples = sample_user_triples(graph, per_epoch, rng);
    for (std::size_t start = 0; start < triples.size(); start += config.batch_size) {
      const std::size_t end = std::min(triples.size(), start + config.batch_size);
      std::vector<std::size_t> u, p, n;
      for (std::size_t k = start; k < end; ++k) {
        u.push_back(triples[k].user);
        p.push_back(triples[k].positive);
        n.push_back(triples[k].negative);
      }
      model.params.zero_grad();
      Tape tape;
      Var eu = tape.leaf(model.params.at(param_names::user_embedding));
      Var ei = tape.leaf(model.params.at(param_names::item_embedding));
      auto gu = std::make_shared<SparseRows>(SparseRows::gather(u, graph.num_users()));
      auto gp = std::make_shared<SparseRows>(SparseRows::gather(p, graph.num_items()));
      auto gn = std::make_shared<SparseRows>(SparseRows::gather(n, graph.num_items()));
      Var margin = row_dot(spmm(gu, eu), sub(spmm(gp, ei), spmm(gn, ei)));
      Var loss = scale(sum_all(log_sigmoid(margin)), -1.0);
      if (config.lambda != 0.0) loss = add(loss, scale(add(sum_squares(eu), sum_squares(ei)), config.lambda));
      tape.backward(loss);
      adam.step(model.params);
    }
  }
  return model;
}

}  // namespace mitgnn
