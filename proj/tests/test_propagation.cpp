#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "mitgnn/propagation.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace mitgnn;
using testing_support::random_tensor;

namespace {

bool bit_equal(const ForwardResult& a, const ForwardResult& b) {
  if (a.states.size() != b.states.size()) return false;
  for (std::size_t l = 0; l < a.states.size(); ++l) {
    if (!(a.states[l].users == b.states[l].users) || !(a.states[l].items == b.states[l].items) ||
        !(a.states[l].baskets == b.states[l].baskets))
      return false;
  }
  return true;
}

double max_diff(const Tensor& t, const oracle::Mat& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) worst = std::max(worst, std::abs(t(r, c) - m[r][c]));
  return worst;
}

}  // namespace

TEST(Forward, ZeroLayersReturnsTables) {
  const BasketGraph g = toy_graph();
  const ModelParams p = testing_support::toy_params(1, 4, 2, 0);
  const ForwardResult fr = forward(g, p);
  ASSERT_EQ(fr.states.size(), 1u);
  EXPECT_EQ(fr.states[0].users, p.param(param_names::user_embedding).value);
  EXPECT_EQ(fr.states[0].items, p.param(param_names::item_embedding).value);
  EXPECT_EQ(fr.states[0].baskets, p.param(param_names::basket_embedding).value);
}

TEST(Forward, EvalModeIsDeterministic) {
  const BasketGraph g = toy_graph();
  const ModelParams p = testing_support::toy_params(2);
  EXPECT_TRUE(bit_equal(forward(g, p), forward(g, p)));
}

TEST(Forward, MatchesStraightLineOracle) {
  const BasketGraph g = toy_graph();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams p = testing_support::toy_params(seed);
    const ForwardResult fr = forward(g, p);
    const oracle::Trace ref = oracle::forward(g, p);
    for (std::size_t l = 0; l < fr.states.size(); ++l) {
      EXPECT_LT(max_diff(fr.states[l].users, ref.states[l].users), 1e-10);
      EXPECT_LT(max_diff(fr.states[l].items, ref.states[l].items), 1e-10);
      EXPECT_LT(max_diff(fr.states[l].baskets, ref.states[l].baskets), 1e-10);
    }
    for (std::size_t l = 0; l < fr.intents.size(); ++l)
      for (std::size_t b = 0; b < g.num_baskets(); ++b)
        for (std::size_t t = 0; t < 2; ++t) EXPECT_NEAR(fr.intents[l].gamma(b, t), ref.intents[l][b].gamma[t], 1e-10);
  }
}

TEST(Forward, RowsAreUnitNormAfterEachLayer) {
  const ForwardResult fr = forward(toy_graph(), testing_support::toy_params(3));
  for (std::size_t l = 1; l < fr.states.size(); ++l) {
    for (const Tensor* t : {&fr.states[l].users, &fr.states[l].items, &fr.states[l].baskets}) {
      for (std::size_t r = 0; r < t->rows(); ++r) EXPECT_NEAR(dense::dot(t->row(r), t->row(r)), 1.0, 1e-12);
    }
  }
}

TEST(Forward, DimsMismatchIsShapeError) {
  const ModelParams p = initialize_params({3, 5, 8, 4, 2, 2}, 1);
  try {
    forward(toy_graph(), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Forward, TrainModeDropsAndNeedsRng) {
  const BasketGraph g = toy_graph();
  const GraphOperators ops = GraphOperators::build(g);
  ModelParams p = testing_support::toy_params(4);
  ForwardOptions opt;
  opt.train = true;
  opt.dropout = 0.5;
  Tape tape;
  std::mt19937_64* none = nullptr;
  EXPECT_THROW(forward_on_tape(tape, ops, p, opt, none), Error);
  std::mt19937_64 rng(1);
  const ForwardResult train = forward_train(ops, p, opt, rng);
  std::size_t zeros = 0;
  for (double v : train.states[1].items.data()) zeros += v == 0.0;
  EXPECT_GT(zeros, 0u);
}

TEST(Aggregators, SingletonNeighborhoodsTriple) {
  // One user, one basket, one item; every embedding x >= 0.
  BasketGraph g(1, 1, {0}, {{0}});
  LayerState s;
  const Tensor x = Tensor::from_rows({{0.1, 0.2, 0.3}});
  s.users = s.items = s.baskets = s.user_guided = s.item_guided = x;
  const auto u = user_aggregate(0, g, s, 0.2);
  const auto i = item_aggregate(0, g, s, 0.2);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(u[j], 3 * x(0, j), 1e-15);
    EXPECT_NEAR(i[j], 3 * x(0, j), 1e-15);
  }
}

TEST(Aggregators, IsolatedNodesPassThroughActivation) {
  BasketGraph g(2, 2, {0}, {{0}});
  LayerState s;
  s.users = Tensor::from_rows({{1.0, -1.0}, {-2.0, 0.5}});
  s.items = Tensor::from_rows({{1.0, 1.0}, {-1.0, 2.0}});
  s.baskets = s.user_guided = s.item_guided = Tensor::from_rows({{0.3, 0.3}});
  const auto u = user_aggregate(1, g, s, 0.2);
  EXPECT_DOUBLE_EQ(u[0], -0.4);
  EXPECT_DOUBLE_EQ(u[1], 0.5);
  const auto i = item_aggregate(1, g, s, 0.2);
  EXPECT_DOUBLE_EQ(i[0], -0.2);
  EXPECT_DOUBLE_EQ(i[1], 2.0);
}

TEST(Aggregators, RandomCaseMatchesLoopOracle) {
  // User 0 owns baskets {0, 1} over items {0, 1, 2}; item 1 is shared.
  BasketGraph g(2, 3, {0, 0, 1}, {{0, 1}, {1, 2}, {1}});
  std::mt19937_64 rng(5);
  LayerState s;
  s.users = random_tensor(2, 3, rng);
  s.items = random_tensor(3, 3, rng);
  s.baskets = random_tensor(3, 3, rng);
  s.user_guided = random_tensor(3, 3, rng);
  s.item_guided = random_tensor(3, 3, rng);
  const auto u = user_aggregate(0, g, s, 0.2);
  const auto i = item_aggregate(1, g, s, 0.2);
  for (std::size_t j = 0; j < 3; ++j) {
    const double uref = s.users(0, j) + (s.user_guided(0, j) + s.user_guided(1, j)) / 2 +
                        (s.items(0, j) + s.items(1, j) + s.items(2, j)) / 3;
    const double iref = s.items(1, j) + (s.item_guided(0, j) + s.item_guided(1, j) + s.item_guided(2, j)) / 3 +
                        (s.users(0, j) + s.users(1, j)) / 2;
    EXPECT_NEAR(u[j], oracle::lrelu(uref, 0.2), 1e-12);
    EXPECT_NEAR(i[j], oracle::lrelu(iref, 0.2), 1e-12);
  }
}

TEST(Aggregators, AgreeWithBatchedForwardBeforeNormalization) {
  const BasketGraph g = toy_graph();
  const ModelParams p = testing_support::toy_params(6);
  const ForwardResult fr = forward(g, p);
  for (std::size_t u = 0; u < g.num_users(); ++u) {
    auto v = user_aggregate(u, g, fr.states[0], 0.2);
    Tensor n = l2_normalize_rows(Tensor::row_vector(v), 1e-12);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(n(0, j), fr.states[1].users(u, j), 1e-12);
  }
  for (std::size_t i = 0; i < g.num_items(); ++i) {
    auto v = item_aggregate(i, g, fr.states[0], 0.2);
    Tensor n = l2_normalize_rows(Tensor::row_vector(v), 1e-12);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(n(0, j), fr.states[1].items(i, j), 1e-12);
  }
}

TEST(ForwardProperty, RelabelingIsEquivariant) {
  const BasketGraph g = toy_graph();
  const ModelParams p = testing_support::toy_params(7);
  const std::vector<std::size_t> pu{2, 0, 1}, pb{3, 1, 0, 2}, pi{5, 7, 0, 2, 1, 6, 4, 3};
  std::vector<std::size_t> owner(4);
  std::vector<std::vector<std::size_t>> items(4);
  for (std::size_t b = 0; b < 4; ++b) {
    owner[pb[b]] = pu[g.owner(b)];
    for (std::size_t i : g.basket_items(b)) items[pb[b]].push_back(pi[i]);
  }
  const BasketGraph h(3, 8, owner, items);
  ModelParams q = p;
  auto permute = [&](const std::string& name, const std::vector<std::size_t>& perm) {
    const Tensor& src = p.param(name).value;
    Tensor& dst = q.param(name).value;
    for (std::size_t r = 0; r < perm.size(); ++r)
      std::copy(src.row(r).begin(), src.row(r).end(), dst.row(perm[r]).begin());
  };
  permute(param_names::user_embedding, pu);
  permute(param_names::basket_embedding, pb);
  permute(param_names::item_embedding, pi);
  const ForwardResult a = forward(g, p), b = forward(h, q);
  for (std::size_t l = 0; l < a.states.size(); ++l)
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t u = 0; u < 3; ++u) EXPECT_NEAR(a.states[l].users(u, j), b.states[l].users(pu[u], j), 1e-13);
      for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.states[l].baskets(k, j), b.states[l].baskets(pb[k], j), 1e-13);
      for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(a.states[l].items(i, j), b.states[l].items(pi[i], j), 1e-13);
    }
}

// One layer only: the attention context shared by all baskets (mean of all
// item embeddings) makes every basket depend on every item from the second
// layer on.
TEST(ForwardProperty, EdgeRemovalIsLocalForOneLayer) {
  const BasketGraph g = toy_graph();
  const ModelParams p = testing_support::toy_params(8, 4, 2, 1);
  // Remove (b0, i0): touches b0, i0, owner u0 and the items of b0.
  const BasketGraph h(3, 8, {0, 0, 1, 2}, {{1, 2}, {2, 3}, {4, 5, 6}, {1, 6, 7}});
  const ForwardResult a = forward(g, p), b = forward(h, p);
  const std::vector<bool> item_near{true, true, true, false, false, false, false, false};
  for (std::size_t i = 0; i < 8; ++i) {
    if (item_near[i]) continue;
    const auto x = a.states[1].items.row(i), y = b.states[1].items.row(i);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << "item " << i;
  }
  for (std::size_t u = 1; u < 3; ++u)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.states[1].users(u, j), b.states[1].users(u, j));
  for (std::size_t k = 1; k < 4; ++k)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.states[1].baskets(k, j), b.states[1].baskets(k, j));
  EXPECT_NE(a.states[1].baskets(0, 0), b.states[1].baskets(0, 0));
}

TEST(GraphOperators, NeighborCapSubsamples) {
  BasketGraph g(1, 6, {0}, {{0, 1, 2, 3, 4, 5}});
  const GraphOperators ops = GraphOperators::build(g, 2, 9);
  EXPECT_EQ(ops.basket_item_sum->offsets[1] - ops.basket_item_sum->offsets[0], 2u);
  const GraphOperators full = GraphOperators::build(g);
  EXPECT_EQ(full.basket_item_sum->offsets[1], 6u);
}
