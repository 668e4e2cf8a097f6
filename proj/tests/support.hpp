#pragma once

#include <random>

#include "mitgnn/gradcheck.hpp"
#include "mitgnn/model.hpp"
#include "mitgnn/tensor.hpp"

namespace testing_support {

inline mitgnn::Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double bound = 1.0) {
  mitgnn::Tensor t(r, c);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Toy-graph model with every parameter (attention included) random.
inline mitgnn::ModelParams toy_params(std::uint64_t seed, std::size_t dim = 4, std::size_t intents = 2,
                                      std::size_t layers = 2) {
  const mitgnn::BasketGraph g = mitgnn::toy_graph();
  return mitgnn::initialize_params({g.num_users(), g.num_baskets(), g.num_items(), dim, intents, layers}, seed,
                                   true);
}

}  // namespace testing_support
