#pragma once

// Straight-line reference of the model, written directly from the
// formulas with nested vectors and explicit loops. It shares nothing with
// the library beyond reading parameter values and graph adjacency.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat read(const mitgnn::ModelParams& p, const std::string& name) {
  const mitgnn::Tensor& t = p.param(name).value;
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline double lrelu(double x, double s) { return x >= 0 ? x : s * x; }

inline Vec vec_mat(const Vec& v, const Mat& w) {
  Vec out(w[0].size(), 0.0);
  for (std::size_t p = 0; p < v.size(); ++p)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += v[p] * w[p][j];
  return out;
}

inline Vec plus(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] + b[j];
  return out;
}

inline Vec mean_of(const Mat& table, const std::vector<std::size_t>& rows, std::size_t d) {
  Vec out(d, 0.0);
  if (rows.empty()) return out;
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < d; ++j) out[j] += table[r][j];
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

// softmax_t( LeakyReLU( [h_t || ctx] . a ) )
inline Vec attention(const Mat& h, const Vec& ctx, const Mat& a, double s) {
  const std::size_t d = ctx.size();
  Vec logits(h.size());
  for (std::size_t t = 0; t < h.size(); ++t) {
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += h[t][j] * a[j][0];
    for (std::size_t j = 0; j < d; ++j) z += ctx[j] * a[d + j][0];
    logits[t] = lrelu(z, s);
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  Vec w(h.size());
  for (std::size_t t = 0; t < h.size(); ++t) total += (w[t] = std::exp(logits[t] - m));
  for (double& v : w) v /= total;
  return w;
}

inline Vec combine(const Mat& h, const Vec& w, double s) {
  Vec out(h[0].size(), 0.0);
  for (std::size_t t = 0; t < h.size(); ++t)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[t] * h[t][j];
  for (double& v : out) v = lrelu(v, s);
  return out;
}

inline Vec normalized(const Vec& v, double eps) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::max(std::sqrt(n), eps);
  Vec out(v);
  for (double& x : out) x /= n;
  return out;
}

struct Layer {
  Mat W_b;
  std::vector<Mat> W_1, W_2;
  Mat a_b, a_u, a_i;
};

inline Layer read_layer(const mitgnn::ModelParams& p, std::size_t l) {
  namespace pn = mitgnn::param_names;
  Layer w;
  w.W_b = read(p, pn::layer(l, "W_b"));
  for (std::size_t t = 0; t < p.dims().intents; ++t) {
    w.W_1.push_back(read(p, pn::head(l, "W_1", t)));
    w.W_2.push_back(read(p, pn::head(l, "W_2", t)));
  }
  w.a_b = read(p, pn::layer(l, "a_b"));
  w.a_u = read(p, pn::layer(l, "a_u"));
  w.a_i = read(p, pn::layer(l, "a_i"));
  return w;
}

struct BasketIntents {
  Mat o, h;
  Vec gamma, alpha, beta;
  Vec next, user_guided, item_guided;
};

// One basket through one layer. `items` are the basket's item embeddings.
inline BasketIntents basket_step(const Vec& eb, const Vec& eu, const Mat& items, const Vec& mean_item,
                                 const Layer& w, double s) {
  BasketIntents r;
  Vec proj = vec_mat(eb, w.W_b);
  for (std::size_t t = 0; t < w.W_1.size(); ++t) {
    Vec o = vec_mat(eu, w.W_1[t]);
    for (const Vec& ei : items) o = plus(o, vec_mat(ei, w.W_2[t]));
    r.o.push_back(o);
    r.h.push_back(plus(proj, o));
  }
  r.gamma = attention(r.h, eb, w.a_b, s);
  r.alpha = attention(r.h, eu, w.a_u, s);
  r.beta = attention(r.h, mean_item, w.a_i, s);
  r.next = combine(r.h, r.gamma, s);
  r.user_guided = combine(r.h, r.alpha, s);
  r.item_guided = combine(r.h, r.beta, s);
  return r;
}

struct State {
  Mat users, items, baskets;
};

struct Trace {
  std::vector<State> states;
  std::vector<std::vector<BasketIntents>> intents;  // [layer][basket]
};

// Absent baskets see a zero owner vector and no items.
inline Trace forward(const mitgnn::BasketGraph& g, const mitgnn::ModelParams& p, double s = 0.2,
                     double eps = 1e-12) {
  namespace pn = mitgnn::param_names;
  const std::size_t d = p.dims().dim;
  Trace tr;
  tr.states.push_back({read(p, pn::user_embedding), read(p, pn::item_embedding),
                       read(p, pn::basket_embedding)});
  for (std::size_t l = 0; l < p.dims().layers; ++l) {
    const Layer w = read_layer(p, l);
    const State& cur = tr.states.back();
    Vec mean_item(d, 0.0);
    for (const Vec& ei : cur.items)
      for (std::size_t j = 0; j < d; ++j) mean_item[j] += ei[j] / static_cast<double>(cur.items.size());
    std::vector<BasketIntents> per_basket;
    for (std::size_t b = 0; b < g.num_baskets(); ++b) {
      Vec eu(d, 0.0);
      Mat items;
      if (g.has_basket(b)) {
        eu = cur.users[g.owner(b)];
        for (std::size_t i : g.basket_items(b)) items.push_back(cur.items[i]);
      }
      per_basket.push_back(basket_step(cur.baskets[b], eu, items, mean_item, w, s));
    }
    Mat user_guided, item_guided;
    for (const auto& bi : per_basket) {
      user_guided.push_back(bi.user_guided);
      item_guided.push_back(bi.item_guided);
    }
    State next;
    for (std::size_t u = 0; u < g.num_users(); ++u) {
      Vec x = plus(plus(cur.users[u], mean_of(user_guided, g.user_baskets(u), d)),
                   mean_of(cur.items, g.user_items(u), d));
      for (double& v : x) v = lrelu(v, s);
      next.users.push_back(normalized(x, eps));
    }
    for (std::size_t i = 0; i < g.num_items(); ++i) {
      Vec x = plus(plus(cur.items[i], mean_of(item_guided, g.item_baskets(i), d)),
                   mean_of(cur.users, g.item_users(i), d));
      for (double& v : x) v = lrelu(v, s);
      next.items.push_back(normalized(x, eps));
    }
    for (std::size_t b = 0; b < g.num_baskets(); ++b) next.baskets.push_back(normalized(per_basket[b].next, eps));
    tr.intents.push_back(std::move(per_basket));
    tr.states.push_back(std::move(next));
  }
  return tr;
}

// y = sum_l (e_u^l + e_b^l) . e_i^l
inline double score(const Trace& tr, std::size_t u, std::size_t b, std::size_t i) {
  double y = 0.0;
  for (const State& s : tr.states)
    for (std::size_t j = 0; j < s.items[i].size(); ++j) y += (s.users[u][j] + s.baskets[b][j]) * s.items[i][j];
  return y;
}

// Cold basket: layer 0 = e_u + mean(seed e_i); then intents against the
// frozen train-graph states, normalized after each layer.
inline Mat cold_basket(const Trace& tr, const mitgnn::ModelParams& p, std::size_t u,
                       const std::vector<std::size_t>& seeds, double s = 0.2, double eps = 1e-12) {
  const std::size_t d = p.dims().dim;
  Mat out;
  Vec eb = tr.states[0].users[u];
  if (!seeds.empty()) eb = plus(eb, mean_of(tr.states[0].items, seeds, d));
  out.push_back(eb);
  for (std::size_t l = 0; l < p.dims().layers; ++l) {
    const Layer w = read_layer(p, l);
    const State& cur = tr.states[l];
    Mat items;
    for (std::size_t i : seeds) items.push_back(cur.items[i]);
    Vec unused(d, 0.0);
    BasketIntents bi = basket_step(eb, cur.users[u], items, unused, w, s);
    eb = normalized(bi.next, eps);
    out.push_back(eb);
  }
  return out;
}

// Ranking metrics by brute force: an item's rank is one plus the number of
// candidates that beat it (higher score, or equal score and lower index).
struct Ranking {
  double recall, hr, ndcg;
};

inline Ranking ranking_metrics(const Vec& scores, const std::set<std::size_t>& excluded,
                               const std::set<std::size_t>& truth, std::size_t k) {
  std::size_t hits = 0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (excluded.count(i)) continue;
    std::size_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j == i || excluded.count(j)) continue;
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++rank;
    }
    if (rank <= k && truth.count(i)) {
      ++hits;
      dcg += std::log(2.0) / std::log(rank + 1.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 1; r <= std::min(k, truth.size()); ++r) idcg += std::log(2.0) / std::log(r + 1.0);
  return {static_cast<double>(hits) / truth.size(), hits > 0 ? 1.0 : 0.0, dcg / idcg};
}

}  // namespace oracle
