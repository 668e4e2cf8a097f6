#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mitgnn/diffcore.hpp"
#include "mitgnn/error.hpp"

namespace mitgnn {

struct ModelDims {
  std::size_t users = 0;
  std::size_t baskets = 0;
  std::size_t items = 0;
  std::size_t dim = 64;
  std::size_t intents = 3;
  std::size_t layers = 3;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;

  std::string describe() const {
    return "N=" + std::to_string(users) + " S=" + std::to_string(baskets) +
           " M=" + std::to_string(items) + " d=" + std::to_string(dim) +
           " T=" + std::to_string(intents) + " L=" + std::to_string(layers);
  }
};

namespace param_names {
inline const std::string user_embedding = "embed.user";
inline const std::string item_embedding = "embed.item";
inline const std::string basket_embedding = "embed.basket";
inline std::string layer(std::size_t l, const std::string& leaf) {
  return "layer" + std::to_string(l) + "." + leaf;
}
inline std::string head(std::size_t l, const char* matrix, std::size_t t) {
  return layer(l, std::string(matrix) + ".t" + std::to_string(t));
}
}  // namespace param_names

// Every trainable tensor of the model. Attention vectors are stored as
// (2d x 1) columns: rows [0, d) weight the intent, rows [d, 2d) the context.
class ModelParams {
 public:
  ModelParams() = default;

  explicit ModelParams(const ModelDims& dims) : dims_(dims) {
    if (dims.dim == 0) throw Error(ErrorKind::config, "embedding size must be positive");
    if (dims.intents == 0) throw Error(ErrorKind::config, "number of intents must be at least 1");
    const std::size_t d = dims.dim;
    store_.add(param_names::user_embedding, Tensor(dims.users, d));
    store_.add(param_names::item_embedding, Tensor(dims.items, d));
    store_.add(param_names::basket_embedding, Tensor(dims.baskets, d));
    for (std::size_t l = 0; l < dims.layers; ++l) {
      store_.add(param_names::layer(l, "W_b"), Tensor(d, d));
      for (std::size_t t = 0; t < dims.intents; ++t) {
        store_.add(param_names::head(l, "W_1", t), Tensor(d, d));
        store_.add(param_names::head(l, "W_2", t), Tensor(d, d));
      }
      store_.add(param_names::layer(l, "a_b"), Tensor(2 * d, 1));
      store_.add(param_names::layer(l, "a_u"), Tensor(2 * d, 1));
      store_.add(param_names::layer(l, "a_i"), Tensor(2 * d, 1));
    }
  }

  const ModelDims& dims() const noexcept { return dims_; }
  ParamStore& store() noexcept { return store_; }
  const ParamStore& store() const noexcept { return store_; }

  Param& param(const std::string& name) { return store_.at(name); }
  const Param& param(const std::string& name) const { return store_.at(name); }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    if (!(a.dims_ == b.dims_) || a.store_.size() != b.store_.size()) return false;
    for (std::size_t k = 0; k < a.store_.size(); ++k) {
      const auto& pa = a.store_.all()[k];
      const auto& pb = b.store_.all()[k];
      if (pa.name != pb.name || !(pa.value == pb.value)) return false;
    }
    return true;
  }

 private:
  ModelDims dims_;
  ParamStore store_;
};

inline bool is_attention_param(const std::string& name) {
  return name.size() > 4 && name.compare(name.size() - 4, 2, ".a") == 0 &&
         name[name.size() - 2] == '_';
}

inline bool is_embedding_param(const std::string& name) { return name.rfind("embed.", 0) == 0; }

template <class Rng>
void fill_uniform(Tensor& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
}

// Embeddings ~ U(+-1/sqrt(d)); weight matrices Xavier-uniform; attention
// vectors zero (uniform initial attention) unless random_attention is set.
inline ModelParams initialize_params(const ModelDims& dims, std::uint64_t seed,
                                     bool random_attention = false) {
  ModelParams params(dims);
  std::mt19937_64 rng(seed);
  const double d = static_cast<double>(dims.dim);
  for (Param& p : params.store().all()) {
    if (is_embedding_param(p.name)) {
      fill_uniform(p.value, 1.0 / std::sqrt(d), rng);
    } else if (is_attention_param(p.name)) {
      if (random_attention) fill_uniform(p.value, std::sqrt(6.0 / (2.0 * d + 1.0)), rng);
    } else {
      fill_uniform(p.value, std::sqrt(6.0 / (2.0 * d)), rng);
    }
  }
  return params;
}

}  // namespace mitgnn
