#pragma once

// Planted-intent basket generator. Items are partitioned into blocks, one per
// true intent (any remaining items form a noise pool). Every basket picks a
// few intents and fills itself from their blocks, with a noise_rate share of
// draws replaced by uniformly random items.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/error.hpp"
#include "mitgnn/propagation.hpp"

namespace mitgnn {

struct SynthSpec {
  std::size_t num_users = 50;
  std::size_t num_items = 300;
  std::size_t num_intents = 3;
  std::size_t items_per_intent = 100;
  std::size_t baskets_per_user = 8;
  std::size_t intents_per_basket_min = 2;
  std::size_t intents_per_basket_max = 2;
  std::size_t items_per_basket_min = 12;
  std::size_t items_per_basket_max = 20;
  double noise_rate = 0.05;
  std::uint64_t seed = 7;

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw Error(ErrorKind::config, std::string(name) + " must be positive");
    };
    positive(num_users, "synth_users");
    positive(num_items, "synth_items");
    positive(num_intents, "synth_intents");
    positive(items_per_intent, "synth_items_per_intent");
    positive(baskets_per_user, "synth_baskets_per_user");
    positive(intents_per_basket_min, "synth_intents_min");
    positive(items_per_basket_min, "synth_basket_items_min");
    if (num_intents * items_per_intent > num_items)
      throw Error(ErrorKind::config, "intent blocks exceed the item count");
    if (intents_per_basket_max < intents_per_basket_min || intents_per_basket_max > num_intents)
      throw Error(ErrorKind::config, "invalid intents-per-basket range");
    if (items_per_basket_max < items_per_basket_min)
      throw Error(ErrorKind::config, "invalid items-per-basket range");
    if (items_per_basket_max > num_items)
      throw Error(ErrorKind::config, "baskets cannot hold more items than exist");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0))
      throw Error(ErrorKind::config, "noise rate must lie in [0, 1]");
  }
};

struct SynthData {
  Interactions data;
  std::vector<int> item_intent;                      // -1 for the noise pool
  std::vector<std::vector<std::size_t>> basket_intents;
  std::size_t noise_draws = 0;
  std::size_t total_draws = 0;
};

inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthData out;
  out.data.has_order = true;
  for (std::size_t u = 0; u < spec.num_users; ++u) out.data.users.intern("u" + std::to_string(u));
  for (std::size_t i = 0; i < spec.num_items; ++i) out.data.items.intern("i" + std::to_string(i));
  out.item_intent.assign(spec.num_items, -1);
  for (std::size_t i = 0; i < spec.num_intents * spec.items_per_intent; ++i)
    out.item_intent[i] = static_cast<int>(i / spec.items_per_intent);

  std::uniform_int_distribution<std::size_t> intents_count(spec.intents_per_basket_min,
                                                           spec.intents_per_basket_max);
  std::uniform_int_distribution<std::size_t> basket_size(spec.items_per_basket_min,
                                                         spec.items_per_basket_max);
  std::uniform_int_distribution<std::size_t> any_item(0, spec.num_items - 1);
  std::uniform_int_distribution<std::size_t> in_block(0, spec.items_per_intent - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::size_t> intents(spec.num_intents);

  for (std::size_t u = 0; u < spec.num_users; ++u) {
    for (std::size_t k = 0; k < spec.baskets_per_user; ++k) {
      const std::size_t b = out.data.baskets.intern("b" + std::to_string(out.basket_intents.size()));
      for (std::size_t t = 0; t < intents.size(); ++t) intents[t] = t;
      std::shuffle(intents.begin(), intents.end(), rng);
      std::vector<std::size_t> chosen(intents.begin(),
                                      intents.begin() + static_cast<std::ptrdiff_t>(intents_count(rng)));
      std::sort(chosen.begin(), chosen.end());
      const std::size_t target = basket_size(rng);
      const std::size_t capacity = chosen.size() * spec.items_per_intent;
      std::set<std::size_t> items;
      std::size_t attempts = 0;
      while (items.size() < target && attempts++ < 100 * target) {
        ++out.total_draws;
        std::size_t item;
        if (coin(rng) < spec.noise_rate) {
          ++out.noise_draws;
          item = any_item(rng);
        } else {
          if (capacity == 0) continue;
          std::uniform_int_distribution<std::size_t> pick(0, chosen.size() - 1);
          item = chosen[pick(rng)] * spec.items_per_intent + in_block(rng);
        }
        items.insert(item);
      }
      for (std::size_t i : items) out.data.records.push_back({u, b, i, k});
      out.basket_intents.push_back(std::move(chosen));
    }
  }
  return out;
}

inline void write_labels(std::ostream& out, const SynthData& synth) {
  out << "item_id,intent_label\n";
  for (std::size_t i = 0; i < synth.item_intent.size(); ++i)
    out << synth.data.items.name(i) << ',' << synth.item_intent[i] << '\n';
}

// Mean between-label distance over mean within-label distance, pooled over
// item pairs of all baskets. Each basket item is represented by the intent
// vector h[t] nearest to its embedding. Values above 1 mean items of
// different true intents land on different learned intents.
inline double intent_separation(const std::vector<Tensor>& intents, const Tensor& item_embeddings,
                                const BasketGraph& graph, const std::vector<int>& item_labels) {
  if (intents.empty()) throw Error(ErrorKind::usage, "no intent vectors");
  constexpr double kEps = 1e-12;
  const std::size_t d = item_embeddings.cols();
  auto dist = [d](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  };
  double between = 0.0, within = 0.0;
  std::size_t n_between = 0, n_within = 0;
  for (std::size_t b = 0; b < graph.num_baskets(); ++b) {
    if (!graph.has_basket(b)) continue;
    const auto& items = graph.basket_items(b);
    std::vector<std::size_t> assigned(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
      double best = 0.0;
      for (std::size_t t = 0; t < intents.size(); ++t) {
        const double dt = dist(item_embeddings.row(items[k]), intents[t].row(b));
        if (t == 0 || dt < best) {
          best = dt;
          assigned[k] = t;
        }
      }
    }
    for (std::size_t x = 0; x < items.size(); ++x) {
      for (std::size_t y = x + 1; y < items.size(); ++y) {
        const double dxy = dist(intents[assigned[x]].row(b), intents[assigned[y]].row(b));
        if (item_labels.at(items[x]) == item_labels.at(items[y])) {
          within += dxy;
          ++n_within;
        } else {
          between += dxy;
          ++n_between;
        }
      }
    }
  }
  if (n_between == 0 || n_within == 0) {
    throw Error(ErrorKind::data, "separation needs item pairs with both equal and different labels");
  }
  return (between / static_cast<double>(n_between) + kEps) / (within / static_cast<double>(n_within) + kEps);
}

// Diagnostic over a model: first-layer intents against layer-0 item embeddings.
inline double intent_separation(const ModelParams& params, const BasketGraph& graph,
                                const std::vector<int>& item_labels, const ForwardOptions& options = {}) {
  if (params.dims().layers == 0) throw Error(ErrorKind::usage, "intent separation needs at least one layer");
  ForwardResult fr = forward(graph, params, options);
  return intent_separation(fr.intents[0].h, fr.states[0].items, graph, item_labels);
}

}  // namespace mitgnn
