#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "mitgnn/diffcore.hpp"
#include "support.hpp"

using namespace mitgnn;
using testing_support::random_tensor;

namespace {

// Checks an op by projecting its output onto a fixed random tensor.
double check_op(const std::vector<std::pair<std::size_t, std::size_t>>& input_shapes,
                const std::function<Var(Tape&, const std::vector<Var>&)>& op, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  for (std::size_t k = 0; k < input_shapes.size(); ++k) {
    store.add("x" + std::to_string(k), random_tensor(input_shapes[k].first, input_shapes[k].second, rng));
  }
  std::optional<Tensor> projection;
  auto build = [&](Tape& tape) {
    std::vector<Var> xs;
    for (Param& p : store.all()) xs.push_back(tape.leaf(p));
    Var y = op(tape, xs);
    if (!projection) projection = random_tensor(y.rows(), y.cols(), rng);
    return sum_all(hadamard(y, tape.constant(*projection)));
  };
  return finite_difference_check(build, store, 1e-6, 1e-6).max_rel_error();
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(DiffcoreOps, Matmul) {
  EXPECT_LT(check_op({{3, 4}, {4, 2}}, [](Tape&, auto& x) { return matmul(x[0], x[1]); }), kTol);
}

TEST(DiffcoreOps, AddSubScaleHadamard) {
  EXPECT_LT(check_op({{3, 4}, {3, 4}}, [](Tape&, auto& x) { return add(x[0], x[1]); }), kTol);
  EXPECT_LT(check_op({{3, 4}, {3, 4}}, [](Tape&, auto& x) { return sub(x[0], x[1]); }), kTol);
  EXPECT_LT(check_op({{3, 4}}, [](Tape&, auto& x) { return scale(x[0], -2.5); }), kTol);
  EXPECT_LT(check_op({{3, 4}, {3, 4}}, [](Tape&, auto& x) { return hadamard(x[0], x[1]); }), kTol);
}

TEST(DiffcoreOps, SharedInputAccumulates) {
  EXPECT_LT(check_op({{3, 3}}, [](Tape&, auto& x) { return matmul(x[0], x[0]); }), kTol);
  EXPECT_LT(check_op({{2, 3}}, [](Tape&, auto& x) { return hadamard(x[0], add(x[0], x[0])); }), kTol);
}

TEST(DiffcoreOps, ApplyMask) {
  Tensor mask = Tensor::from_rows({{0, 2, 2}, {2, 0, 2}});
  EXPECT_LT(check_op({{2, 3}}, [&](Tape&, auto& x) { return apply_mask(x[0], mask); }), kTol);
}

TEST(DiffcoreOps, ConcatAndSlice) {
  EXPECT_LT(check_op({{3, 2}, {3, 4}}, [](Tape&, auto& x) { return concat_cols({x[0], x[1]}); }), kTol);
  EXPECT_LT(check_op({{2, 3}, {4, 3}}, [](Tape&, auto& x) { return concat_rows({x[0], x[1]}); }), kTol);
  EXPECT_LT(check_op({{3, 5}}, [](Tape&, auto& x) { return slice_cols(x[0], 1, 4); }), kTol);
  EXPECT_LT(check_op({{5, 3}}, [](Tape&, auto& x) { return slice_rows(x[0], 2, 5); }), kTol);
}

TEST(DiffcoreOps, Reductions) {
  EXPECT_LT(check_op({{4, 3}}, [](Tape&, auto& x) { return sum_rows(x[0]); }), kTol);
  EXPECT_LT(check_op({{4, 3}}, [](Tape&, auto& x) { return mean_rows(x[0]); }), kTol);
  EXPECT_LT(check_op({{4, 3}}, [](Tape&, auto& x) { return sum_all(x[0]); }), kTol);
  EXPECT_LT(check_op({{4, 3}}, [](Tape&, auto& x) { return sum_squares(x[0]); }), kTol);
}

TEST(DiffcoreOps, RowwiseBroadcasts) {
  EXPECT_LT(check_op({{4, 3}, {1, 3}}, [](Tape&, auto& x) { return add_row(x[0], x[1]); }), kTol);
  EXPECT_LT(check_op({{4, 3}, {4, 1}}, [](Tape&, auto& x) { return scale_rows(x[0], x[1]); }), kTol);
  EXPECT_LT(check_op({{4, 3}, {4, 3}}, [](Tape&, auto& x) { return row_dot(x[0], x[1]); }), kTol);
}

TEST(DiffcoreOps, Spmm) {
  auto op = std::make_shared<SparseRows>(SparseRows::from_lists({{0, 2}, {}, {1, 2, 3}}, 4, true));
  EXPECT_LT(check_op({{4, 3}}, [&](Tape&, auto& x) { return spmm(op, x[0]); }), kTol);
  std::vector<std::size_t> idx{2, SparseRows::npos, 0, 2};
  auto gather = std::make_shared<SparseRows>(SparseRows::gather(idx, 3));
  EXPECT_LT(check_op({{3, 2}}, [&](Tape&, auto& x) { return spmm(gather, x[0]); }), kTol);
}

TEST(DiffcoreOps, Nonlinearities) {
  EXPECT_LT(check_op({{4, 5}}, [](Tape&, auto& x) { return leaky_relu(x[0], 0.2); }), kTol);
  EXPECT_LT(check_op({{4, 5}}, [](Tape&, auto& x) { return softmax_rows(x[0]); }), kTol);
  EXPECT_LT(check_op({{4, 5}}, [](Tape&, auto& x) { return l2_normalize_rows(x[0], 1e-12); }), kTol);
  EXPECT_LT(check_op({{4, 5}}, [](Tape&, auto& x) { return log_sigmoid(scale(x[0], 4.0)); }), kTol);
}

TEST(DiffcoreOps, ComposedChain) {
  EXPECT_LT(check_op({{3, 4}, {4, 4}, {8, 1}},
                     [](Tape&, auto& x) {
                       Var h = leaky_relu(matmul(x[0], x[1]), 0.2);
                       Var logits = matmul(concat_cols({h, h}), x[2]);
                       Var weights = softmax_rows(concat_cols({logits, slice_cols(h, 0, 1)}));
                       return l2_normalize_rows(scale_rows(h, slice_cols(weights, 1, 2)), 1e-12);
                     }),
            kTol);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape tape;
  Var x = tape.constant(Tensor(2, 2, 1.0));
  try {
    tape.backward(x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
  }
}

TEST(Tape, NonFiniteIsNamed) {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{1.0, 1e308}}));
  try {
    scale(x, 1e10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
  }
}

TEST(Tape, ConstantsReceiveNoGradient) {
  ParamStore store;
  store.add("w", Tensor::from_rows({{2.0}}));
  Tape tape;
  Var w = tape.leaf(store.at("w"));
  Var c = tape.constant(Tensor::from_rows({{3.0}}));
  tape.backward(sum_all(hadamard(w, c)));
  EXPECT_EQ(store.at("w").grad(0, 0), 3.0);
}

TEST(Tape, GradientsAccumulateAcrossBackwardCalls) {
  ParamStore store;
  store.add("w", Tensor::from_rows({{2.0}}));
  for (int k = 0; k < 2; ++k) {
    Tape tape;
    tape.backward(sum_squares(tape.leaf(store.at("w"))));
  }
  EXPECT_EQ(store.at("w").grad(0, 0), 8.0);
  store.zero_grad();
  EXPECT_EQ(store.at("w").grad(0, 0), 0.0);
}

TEST(ParamStore, DuplicateAndMissingNames) {
  ParamStore store;
  store.add("a", Tensor(1, 1));
  EXPECT_THROW(store.add("a", Tensor(1, 1)), Error);
  try {
    store.at("b");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::lookup);
  }
  EXPECT_EQ(store.scalar_count(), 1u);
}

TEST(Primitives, SoftmaxRowsSumToOneUnderLargeInputs) {
  Tensor x = Tensor::from_rows({{1000.0, 999.0, -1000.0}, {0.0, 0.0, 0.0}});
  Tensor y = softmax_rows(x);
  for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(y(r, 0) + y(r, 1) + y(r, 2), 1.0, 1e-15);
  EXPECT_NEAR(y(1, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y(0, 0) / y(0, 1), std::exp(1.0), 1e-12);
}

TEST(Primitives, L2NormalizeGivesUnitRowsAndKeepsZeroRows) {
  Tensor y = l2_normalize_rows(Tensor::from_rows({{3.0, 4.0}, {0.0, 0.0}}), 1e-12);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(y(0, 1), 0.8);
  EXPECT_EQ(y(1, 0), 0.0);
}

TEST(Primitives, LogSigmoidIsStable) {
  EXPECT_NEAR(log_sigmoid(0.0), std::log(0.5), 1e-15);
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-12);
  EXPECT_NEAR(log_sigmoid(800.0), 0.0, 1e-300);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-1e6)));
}

TEST(Primitives, LeakyReluSlopeValidated) {
  Tape tape;
  Var x = tape.constant(Tensor(1, 1, -1.0));
  EXPECT_THROW(leaky_relu(x, 1.0), Error);
  EXPECT_THROW(leaky_relu(x, -0.1), Error);
  EXPECT_DOUBLE_EQ(leaky_relu(x, 0.2).value()(0, 0), -0.2);
}

TEST(Dropout, KeepFractionAndScale) {
  std::mt19937_64 rng(11);
  const std::size_t n = 1000000;
  Tensor mask = dropout_mask(1000, 1000, 0.5, rng);
  std::size_t kept = 0;
  for (double v : mask.data()) {
    ASSERT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / n, 0.5, 0.01);
}

TEST(Dropout, ZeroRateIsIdentityAndBadRateRejected) {
  std::mt19937_64 rng(1);
  Tensor mask = dropout_mask(3, 3, 0.0, rng);
  for (double v : mask.data()) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(dropout_mask(1, 1, 1.0, rng), Error);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 3.0), 0.5);
}

TEST(GradCheck, DetectsWrongGradient) {
  ParamStore store;
  store.add("x", Tensor::from_rows({{0.3, -0.7}}));
  // Forward is x^2 but the backward claims 3x.
  auto build = [&](Tape& tape) {
    Var x = tape.leaf(store.at("x"));
    Tensor v = x.value();
    for (double& e : v.data()) e *= e;
    Var y = tape.push("bogus_square", v, {x}, [ix = x.id](Tape& t, const Tensor& g) {
      if (Tensor* gx = t.grad_if_needed(ix))
        for (std::size_t k = 0; k < g.size(); ++k) gx->data()[k] += 3.0 * t.value(ix).data()[k] * g.data()[k];
    });
    return sum_all(y);
  };
  EXPECT_FALSE(finite_difference_check(build, store, 1e-6, 1e-4).passed());
}
