#pragma once

// Toy fixture and whole-model finite-difference check of the BPR objective.

#include <random>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/diffcore.hpp"
#include "mitgnn/model.hpp"
#include "mitgnn/propagation.hpp"
#include "mitgnn/training.hpp"

namespace mitgnn {

// 3 users, 4 baskets, 8 items:
//   u0: b0 = {i0, i1, i2}, b1 = {i2, i3}
//   u1: b2 = {i4, i5, i6}
//   u2: b3 = {i1, i6, i7}
inline BasketGraph toy_graph() {
  return BasketGraph(3, 8, {0, 0, 1, 2}, {{0, 1, 2}, {2, 3}, {4, 5, 6}, {1, 6, 7}});
}

// Every (basket, member, non-member) combination, in a fixed order.
inline std::vector<SampleTriple> all_triples(const BasketGraph& graph) {
  std::vector<SampleTriple> out;
  for (std::size_t b = 0; b < graph.num_baskets(); ++b) {
    if (!graph.has_basket(b)) continue;
    const auto& items = graph.basket_items(b);
    for (std::size_t pos : items)
      for (std::size_t neg = 0; neg < graph.num_items(); ++neg)
        if (!std::binary_search(items.begin(), items.end(), neg)) out.push_back({b, pos, neg});
  }
  return out;
}

struct ModelGradCheckOptions {
  ModelDims dims{3, 4, 8, 4, 2, 2};
  std::uint64_t seed = 42;
  double lambda = 1e-3;
  bool random_attention = true;
  double step = 1e-5;
  double tolerance = 1e-4;
  double leaky_slope = 0.2;
};

// Gradients of the full loss (eval mode, all triples) against central
// differences, for every named parameter.
inline GradCheckReport model_gradient_check(const BasketGraph& graph,
                                            const ModelGradCheckOptions& opt) {
  ModelDims dims = opt.dims;
  dims.users = graph.num_users();
  dims.baskets = graph.num_baskets();
  dims.items = graph.num_items();
  ModelParams params = initialize_params(dims, opt.seed, opt.random_attention);
  const GraphOperators ops = GraphOperators::build(graph);
  const std::vector<SampleTriple> triples = all_triples(graph);
  ForwardOptions fo;
  fo.leaky_slope = opt.leaky_slope;
  auto build = [&](Tape& tape) {
    std::mt19937_64* no_rng = nullptr;
    ForwardVars fv = forward_on_tape(tape, ops, params, fo, no_rng);
    return bpr_loss(tape, fv, graph, triples, params, opt.lambda);
  };
  return finite_difference_check(build, params.store(), opt.step, opt.tolerance);
}

}  // namespace mitgnn
