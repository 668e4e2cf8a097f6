#pragma once

// Scoring for baskets that were never seen in training. The cold basket's
// layer-0 embedding is its owner's embedding plus the mean of its seed item
// embeddings; later layers reuse the intent generator and basket-guided
// aggregator against the cached, frozen train-graph layer states. The cold
// basket never feeds back into user or item embeddings.

#include <span>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/intent.hpp"
#include "mitgnn/propagation.hpp"
#include "mitgnn/training.hpp"

namespace mitgnn {

struct ColdBasket {
  std::size_t user = 0;
  std::vector<std::size_t> seed_items;
};

inline std::vector<double> infer_layer0(std::size_t user, std::span<const std::size_t> seed_items,
                                        const ModelParams& params) {
  const Tensor& users = params.param(param_names::user_embedding).value;
  const Tensor& items = params.param(param_names::item_embedding).value;
  if (user >= users.rows()) throw Error(ErrorKind::lookup, "unknown user index " + std::to_string(user));
  std::vector<double> out(users.row(user).begin(), users.row(user).end());
  if (seed_items.empty()) return out;
  std::vector<double> mean(out.size(), 0.0);
  for (std::size_t i : seed_items) {
    if (i >= items.rows()) throw Error(ErrorKind::lookup, "unknown item index " + std::to_string(i));
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += items(i, j);
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += mean[j] / static_cast<double>(seed_items.size());
  return out;
}

// Read-only view over a trained model and its cached train-graph states.
class InductiveScorer {
 public:
  InductiveScorer(const ModelParams& params, ForwardResult cached, ForwardOptions options)
      : params_(&params), cached_(std::move(cached)), options_(options) {
    for (std::size_t l = 0; l < params.dims().layers; ++l)
      weights_.push_back(IntentLayerWeights::from_params(params, l));
  }

  InductiveScorer(const ModelParams& params, const BasketGraph& train_graph, ForwardOptions options)
      : InductiveScorer(params, forward(train_graph, params, options), options) {}

  const ForwardResult& cached() const noexcept { return cached_; }

  // Per-layer embeddings of the cold basket, (L+1) x d.
  Tensor infer_forward(const ColdBasket& cold) const {
    const ModelDims& dims = params_->dims();
    if (cold.user >= dims.users) {
      throw Error(ErrorKind::lookup, "unknown user index " + std::to_string(cold.user));
    }
    Tensor out(dims.layers + 1, dims.dim);
    std::vector<double> basket = infer_layer0(cold.user, cold.seed_items, *params_);
    std::copy(basket.begin(), basket.end(), out.row(0).begin());
    for (std::size_t l = 0; l < dims.layers; ++l) {
      const LayerState& s = cached_.states[l];
      Tensor seeds(cold.seed_items.size(), dims.dim);
      for (std::size_t k = 0; k < cold.seed_items.size(); ++k) {
        auto src = s.items.row(cold.seed_items[k]);
        std::copy(src.begin(), src.end(), seeds.row(k).begin());
      }
      const IntentLayerWeights& w = weights_[l];
      Tensor o = relation_vectors(s.users.row(cold.user), seeds, w);
      Tensor h = translate_intents(basket, o, w.W_b);
      std::vector<double> gamma = attend(h, basket, w.a_b, options_.leaky_slope);
      std::vector<double> next = aggregate_basket(h, gamma, options_.leaky_slope);
      Tensor normalized = l2_normalize_rows(Tensor::row_vector(next), options_.norm_eps);
      basket.assign(normalized.data().begin(), normalized.data().end());
      std::copy(basket.begin(), basket.end(), out.row(l + 1).begin());
    }
    return out;
  }

  std::vector<double> score(const ColdBasket& cold) const {
    const Tensor baskets = infer_forward(cold);
    std::vector<std::vector<double>> queries;
    for (std::size_t l = 0; l < cached_.states.size(); ++l) {
      const Tensor& users = cached_.states[l].users;
      std::vector<double> q(users.cols());
      for (std::size_t j = 0; j < q.size(); ++j) q[j] = users(cold.user, j) + baskets(l, j);
      queries.push_back(std::move(q));
    }
    return score_items(cached_.states, queries);
  }

  std::vector<double> score(const TestCase& tc) const {
    return score(ColdBasket{tc.user, tc.seed_items});
  }

 private:
  const ModelParams* params_;
  ForwardResult cached_;
  ForwardOptions options_;
  std::vector<IntentLayerWeights> weights_;
};

// Scores a split's cases with the protocol that matches its mode.
inline CaseScorer make_mitgnn_scorer(const ModelParams& params, const DataSplit& split,
                                     const ForwardOptions& options) {
  if (split.mode == SplitMode::inductive) {
    auto scorer = std::make_shared<InductiveScorer>(params, split.train_graph, options);
    return [scorer](const TestCase& tc) { return scorer->score(tc); };
  }
  auto fr = std::make_shared<ForwardResult>(forward(split.train_graph, params, options));
  return [fr](const TestCase& tc) { return score_basket(fr->states, tc.user, tc.basket); };
}

}  // namespace mitgnn
