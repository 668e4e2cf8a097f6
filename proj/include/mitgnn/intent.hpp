#pragma once

// Multi-intent generator and aggregator. A basket's T intents are tail
// entities translated from the projected basket embedding:
//   h[t] = e_b W_b + o[t],  o[t] = e_u W_1[t] + sum_{i in N_i(b)} e_i W_2[t].
// Three attention distributions over t (basket-, user- and item-guided)
// combine the intents into the next-layer basket embedding and the two
// type-guided basket embeddings.
//
// Two forms are provided: per-basket functions over plain tensors (used for
// inductive inference) and a batched, differentiable form over all baskets.

#include <span>
#include <utility>
#include <vector>

#include "mitgnn/diffcore.hpp"
#include "mitgnn/model.hpp"

namespace mitgnn {

struct IntentLayerWeights {
  Tensor W_b;
  std::vector<Tensor> W_1;
  std::vector<Tensor> W_2;
  Tensor a_b;
  Tensor a_u;
  Tensor a_i;

  std::size_t intents() const noexcept { return W_1.size(); }
  std::size_t dim() const noexcept { return W_b.rows(); }

  static IntentLayerWeights from_params(const ModelParams& params, std::size_t layer) {
    const ModelDims& dims = params.dims();
    if (layer >= dims.layers) throw Error(ErrorKind::lookup, "no weights for layer " + std::to_string(layer));
    IntentLayerWeights w;
    w.W_b = params.param(param_names::layer(layer, "W_b")).value;
    for (std::size_t t = 0; t < dims.intents; ++t) {
      w.W_1.push_back(params.param(param_names::head(layer, "W_1", t)).value);
      w.W_2.push_back(params.param(param_names::head(layer, "W_2", t)).value);
    }
    w.a_b = params.param(param_names::layer(layer, "a_b")).value;
    w.a_u = params.param(param_names::layer(layer, "a_u")).value;
    w.a_i = params.param(param_names::layer(layer, "a_i")).value;
    return w;
  }
};

struct IntentBundle {
  Tensor h;  // T x d
  Tensor o;  // T x d
  std::vector<double> gamma;
  std::vector<double> alpha;
  std::vector<double> beta;
};

namespace detail {

// v (1 x d) * W (d x d), accumulated into out.
inline void row_times_matrix(std::span<const double> v, const Tensor& w, std::span<double> out) {
  for (std::size_t p = 0; p < v.size(); ++p) {
    const double vp = v[p];
    auto wp = w.row(p);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += vp * wp[j];
  }
}

inline void require_dim(std::span<const double> v, std::size_t d, const char* what) {
  if (v.size() != d) {
    throw Error(ErrorKind::shape, std::string(what) + " has length " + std::to_string(v.size()) +
                                      ", expected " + std::to_string(d));
  }
}

}  // namespace detail

// o[t] = e_u W_1[t] + sum_i e_i W_2[t]. An empty item set leaves only the
// user term.
inline Tensor relation_vectors(std::span<const double> user_emb, const Tensor& item_embs,
                               const IntentLayerWeights& w) {
  const std::size_t d = w.dim();
  detail::require_dim(user_emb, d, "user embedding");
  if (!item_embs.empty() && item_embs.cols() != d) {
    throw Error(ErrorKind::shape, "item embeddings " + item_embs.shape_string() +
                                      " do not match d=" + std::to_string(d));
  }
  std::vector<double> item_sum(d, 0.0);
  for (std::size_t r = 0; r < item_embs.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) item_sum[j] += item_embs(r, j);
  Tensor o(w.intents(), d);
  for (std::size_t t = 0; t < w.intents(); ++t) {
    detail::row_times_matrix(user_emb, w.W_1[t], o.row(t));
    if (item_embs.rows() > 0) detail::row_times_matrix(item_sum, w.W_2[t], o.row(t));
  }
  return o;
}

inline Tensor translate_intents(std::span<const double> basket_emb, const Tensor& o,
                                const Tensor& W_b) {
  detail::require_dim(basket_emb, W_b.rows(), "basket embedding");
  std::vector<double> projected(W_b.cols(), 0.0);
  detail::row_times_matrix(basket_emb, W_b, projected);
  Tensor h = o;
  for (std::size_t t = 0; t < h.rows(); ++t)
    for (std::size_t j = 0; j < h.cols(); ++j) h(t, j) += projected[j];
  return h;
}

// softmax_t( LeakyReLU( [h[t] ; context] . a ) )
inline std::vector<double> attend(const Tensor& h, std::span<const double> context,
                                  const Tensor& a, double slope) {
  const std::size_t d = h.cols();
  detail::require_dim(context, d, "attention context");
  if (a.size() != 2 * d) throw Error(ErrorKind::shape, "attention vector must have length 2d");
  auto av = a.data();
  double context_term = 0.0;
  for (std::size_t j = 0; j < d; ++j) context_term += context[j] * av[d + j];
  Tensor logits(1, h.rows());
  for (std::size_t t = 0; t < h.rows(); ++t) {
    double s = context_term;
    for (std::size_t j = 0; j < d; ++j) s += h(t, j) * av[j];
    logits(0, t) = dense::leaky_relu(s, slope);
  }
  Tensor weights = softmax_rows(logits);
  return {weights.data().begin(), weights.data().end()};
}

inline std::vector<double> combine_intents(const Tensor& h, std::span<const double> weights,
                                           double slope) {
  if (weights.size() != h.rows()) throw Error(ErrorKind::shape, "one weight per intent required");
  std::vector<double> out(h.cols(), 0.0);
  for (std::size_t t = 0; t < h.rows(); ++t)
    for (std::size_t j = 0; j < h.cols(); ++j) out[j] += weights[t] * h(t, j);
  for (double& v : out) v = dense::leaky_relu(v, slope);
  return out;
}

// Next-layer basket embedding: LeakyReLU(sum_t gamma[t] h[t]).
inline std::vector<double> aggregate_basket(const Tensor& h, std::span<const double> gamma,
                                            double slope) {
  return combine_intents(h, gamma, slope);
}

// (user-guided, item-guided) basket embeddings.
inline std::pair<std::vector<double>, std::vector<double>> type_guided(
    const Tensor& h, std::span<const double> alpha, std::span<const double> beta, double slope) {
  return {combine_intents(h, alpha, slope), combine_intents(h, beta, slope)};
}

// Full per-basket evaluation of one layer of the intent module.
inline IntentBundle evaluate_intents(std::span<const double> basket_emb,
                                     std::span<const double> user_emb, const Tensor& item_embs,
                                     std::span<const double> mean_item_emb,
                                     const IntentLayerWeights& w, double slope) {
  IntentBundle bundle;
  bundle.o = relation_vectors(user_emb, item_embs, w);
  bundle.h = translate_intents(basket_emb, bundle.o, w.W_b);
  bundle.gamma = attend(bundle.h, basket_emb, w.a_b, slope);
  bundle.alpha = attend(bundle.h, user_emb, w.a_u, slope);
  bundle.beta = attend(bundle.h, mean_item_emb, w.a_i, slope);
  return bundle;
}

// ---- batched differentiable form --------------------------------------

struct IntentLayerVars {
  Var W_b;
  std::vector<Var> W_1;
  std::vector<Var> W_2;
  Var a_b;
  Var a_u;
  Var a_i;
};

struct IntentLayerOutput {
  std::vector<Var> h;  // T tensors of S x d
  std::vector<Var> o;  // T tensors of S x d
  Var gamma;           // S x T
  Var alpha;           // S x T
  Var beta;            // S x T
  Var basket_next;     // S x d
  Var user_guided;     // S x d
  Var item_guided;     // S x d
};

namespace detail {

// S x T attention weights for intents h given a per-basket context term.
inline Var batched_attention(const std::vector<Var>& h, Var context_term, Var a, std::size_t d,
                             double slope) {
  Var a_intent = slice_rows(a, 0, d);
  std::vector<Var> logits;
  logits.reserve(h.size());
  for (const Var& ht : h) {
    Var s = matmul(ht, a_intent);
    s = context_term.rows() == 1 && s.rows() != 1 ? add_row(s, context_term) : add(s, context_term);
    logits.push_back(leaky_relu(s, slope));
  }
  return softmax_rows(concat_cols(logits));
}

inline Var batched_combine(const std::vector<Var>& h, Var weights, double slope) {
  Var acc = scale_rows(h[0], slice_cols(weights, 0, 1));
  for (std::size_t t = 1; t < h.size(); ++t)
    acc = add(acc, scale_rows(h[t], slice_cols(weights, t, t + 1)));
  return leaky_relu(acc, slope);
}

}  // namespace detail

// basket_emb, owner_emb and item_sum are S x d (row b: e_b, e_owner(b),
// sum of e_i over N_i(b)); mean_item is 1 x d.
inline IntentLayerOutput intent_layer(Var basket_emb, Var owner_emb, Var item_sum, Var mean_item,
                                      const IntentLayerVars& w, double slope) {
  const std::size_t d = basket_emb.cols();
  IntentLayerOutput out;
  Var projected = matmul(basket_emb, w.W_b);
  for (std::size_t t = 0; t < w.W_1.size(); ++t) {
    Var o = add(matmul(owner_emb, w.W_1[t]), matmul(item_sum, w.W_2[t]));
    out.o.push_back(o);
    out.h.push_back(add(projected, o));
  }
  Var basket_ctx = matmul(basket_emb, slice_rows(w.a_b, d, 2 * d));
  Var user_ctx = matmul(owner_emb, slice_rows(w.a_u, d, 2 * d));
  Var item_ctx = matmul(mean_item, slice_rows(w.a_i, d, 2 * d));
  out.gamma = detail::batched_attention(out.h, basket_ctx, w.a_b, d, slope);
  out.alpha = detail::batched_attention(out.h, user_ctx, w.a_u, d, slope);
  out.beta = detail::batched_attention(out.h, item_ctx, w.a_i, d, slope);
  out.basket_next = detail::batched_combine(out.h, out.gamma, slope);
  out.user_guided = detail::batched_combine(out.h, out.alpha, slope);
  out.item_guided = detail::batched_combine(out.h, out.beta, slope);
  return out;
}

}  // namespace mitgnn
