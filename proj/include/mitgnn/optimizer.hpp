#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mitgnn/diffcore.hpp"

namespace mitgnn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Moments are kept per
// parameter, in the store's order.
class Adam {
 public:
  Adam(const ParamStore& params, AdamOptions options) : options_(options) {
    for (const Param& p : params.all()) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }

  void step(ParamStore& params) {
    if (params.size() != m_.size()) throw Error(ErrorKind::usage, "optimizer/parameter count mismatch");
    ++steps_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Param& p = params.all()[k];
      auto theta = p.value.data();
      auto g = p.grad.data();
      auto m = m_[k].data();
      auto v = v_[k].data();
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        theta[j] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      }
    }
  }

  std::uint64_t steps() const noexcept { return steps_; }
  void set_steps(std::uint64_t s) noexcept { steps_ = s; }
  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) noexcept { options_.learning_rate = lr; }

  const Tensor& first_moment(std::size_t k) const { return m_.at(k); }
  const Tensor& second_moment(std::size_t k) const { return v_.at(k); }
  void set_moments(std::size_t k, Tensor m, Tensor v) {
    if (!m.same_shape(m_.at(k)) || !v.same_shape(v_.at(k))) {
      throw Error(ErrorKind::shape, "optimizer moment shape mismatch");
    }
    m_[k] = std::move(m);
    v_[k] = std::move(v);
  }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace mitgnn
