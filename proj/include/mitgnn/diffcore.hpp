#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every
// primitive applied during one forward pass; backward() walks it in reverse
// and accumulates exact gradients into the Params that were read as leaves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mitgnn/error.hpp"
#include "mitgnn/tensor.hpp"

namespace mitgnn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Ordered, name-unique collection of trainable tensors.
class ParamStore {
 public:
  Param& add(std::string name, Tensor value) {
    if (index_.count(name)) throw Error(ErrorKind::usage, "duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    Tensor grad(value.rows(), value.cols());
    params_.push_back(Param{std::move(name), std::move(value), std::move(grad)});
    return params_.back();
  }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::lookup, "no parameter named " + name);
    return params_[it->second];
  }
  const Param& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Param>& all() noexcept { return params_; }
  const std::vector<Param>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Constant sparse row operator (CSR). Used for neighbor sums/means and row
// gathers; it never carries gradients itself.
struct SparseRows {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;
  std::vector<double> weights;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Row r selects column index[r]; npos yields an all-zero row.
  static SparseRows gather(std::span<const std::size_t> index, std::size_t cols) {
    SparseRows s;
    s.rows = index.size();
    s.cols = cols;
    s.offsets.reserve(index.size() + 1);
    for (std::size_t c : index) {
      if (c != npos) {
        if (c >= cols) throw Error(ErrorKind::shape, "gather index out of range");
        s.indices.push_back(c);
        s.weights.push_back(1.0);
      }
      s.offsets.push_back(s.indices.size());
    }
    return s;
  }

  // Row r aggregates the listed columns, either summed or averaged. Empty
  // lists give a zero row.
  static SparseRows from_lists(const std::vector<std::vector<std::size_t>>& lists,
                               std::size_t cols, bool mean) {
    SparseRows s;
    s.rows = lists.size();
    s.cols = cols;
    s.offsets.reserve(lists.size() + 1);
    for (const auto& list : lists) {
      const double w = mean && !list.empty() ? 1.0 / static_cast<double>(list.size()) : 1.0;
      for (std::size_t c : list) {
        if (c >= cols) throw Error(ErrorKind::shape, "sparse column index out of range");
        s.indices.push_back(c);
        s.weights.push_back(w);
      }
      s.offsets.push_back(s.indices.size());
    }
    return s;
  }

  Tensor multiply(const Tensor& x) const {
    if (x.rows() != cols) {
      throw Error(ErrorKind::shape, "spmm: operator has " + std::to_string(cols) +
                                        " columns, operand is " + x.shape_string());
    }
    Tensor y(rows, x.cols());
    for (std::size_t r = 0; r < rows; ++r) {
      auto yr = y.row(r);
      for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
        auto xr = x.row(indices[k]);
        const double w = weights[k];
        for (std::size_t j = 0; j < yr.size(); ++j) yr[j] += w * xr[j];
      }
    }
    return y;
  }
};

class Tape;

// Handle to one node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    check_finite(value, "constant");
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
    return {this, nodes_.size() - 1};
  }

  // Reads a parameter; backward() adds its gradient into param.grad.
  Var leaf(Param& param) {
    check_finite(param.value, param.name.c_str());
    nodes_.push_back(Node{param.value, {}, nullptr, &param, true});
    return {this, nodes_.size() - 1};
  }

  Var push(const char* op, Tensor value, std::initializer_list<Var> inputs, Backprop backprop) {
    check_finite(value, op);
    bool needs = false;
    for (const Var& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    nodes_.push_back(
        Node{std::move(value), {}, needs ? std::move(backprop) : Backprop{}, nullptr, needs});
    return {this, nodes_.size() - 1};
  }

  Var push_many(const char* op, Tensor value, const std::vector<Var>& inputs, Backprop backprop) {
    check_finite(value, op);
    bool needs = false;
    for (const Var& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    nodes_.push_back(
        Node{std::move(value), {}, needs ? std::move(backprop) : Backprop{}, nullptr, needs});
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient buffer of a node, or nullptr if nothing upstream needs it.
  Tensor* grad_if_needed(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  void backward(Var root) {
    if (root.tape != this) throw Error(ErrorKind::usage, "backward: variable from another tape");
    const Tensor& rv = nodes_[root.id].value;
    if (rv.rows() != 1 || rv.cols() != 1) {
      throw Error(ErrorKind::usage, "backward requires a scalar root, got " + rv.shape_string());
    }
    for (auto& n : nodes_) n.grad = Tensor{};
    if (!nodes_[root.id].requires_grad) return;
    grad_if_needed(root.id)->fill(1.0);
    for (std::size_t k = root.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (n.grad.empty()) continue;
      if (n.param != nullptr) {
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      } else if (n.backprop) {
        // grad is copied out because backprop may grow other buffers.
        Tensor g = std::move(n.grad);
        n.backprop(*this, g);
        n.grad = std::move(g);
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backprop backprop;
    Param* param;
    bool requires_grad;
  };

  static void check_finite(const Tensor& t, const char* op) {
    std::size_t k = t.first_non_finite();
    if (k != t.size()) {
      std::size_t cols = t.cols() ? t.cols() : 1;
      throw Error(ErrorKind::numeric, std::string("non-finite value from ") + op + " at row " +
                                          std::to_string(k / cols) + ", col " +
                                          std::to_string(k % cols));
    }
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline void accumulate(Tensor* dst, const Tensor& src, double scale = 1.0) {
  if (dst == nullptr) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] += scale * s[k];
}

inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw Error(ErrorKind::usage, "operands live on different tapes");
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  Tensor out = dense::matmul(a.value(), b.value());
  return a.tape->push("matmul", std::move(out), {a, b},
                      [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
                        if (Tensor* ga = t.grad_if_needed(ia)) dense::gemm_nt(g, t.value(ib), *ga);
                        if (Tensor* gb = t.grad_if_needed(ib)) dense::gemm_tn(t.value(ia), g, *gb);
                      });
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  Tensor out = dense::add(a.value(), b.value());
  return a.tape->push("add", std::move(out), {a, b},
                      [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
                        detail::accumulate(t.grad_if_needed(ia), g);
                        detail::accumulate(t.grad_if_needed(ib), g);
                      });
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  dense::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t k = 0; k < od.size(); ++k) od[k] -= bd[k];
  return a.tape->push("sub", std::move(out), {a, b},
                      [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
                        detail::accumulate(t.grad_if_needed(ia), g);
                        detail::accumulate(t.grad_if_needed(ib), g, -1.0);
                      });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape->push("scale", std::move(out), {a}, [ia = a.id, s](Tape& t, const Tensor& g) {
    detail::accumulate(t.grad_if_needed(ia), g, s);
  });
}

inline Var hadamard(Var a, Var b) {
  detail::same_tape(a, b);
  dense::require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t k = 0; k < od.size(); ++k) od[k] *= bd[k];
  return a.tape->push("hadamard", std::move(out), {a, b},
                      [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
                        auto gd = g.data();
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          auto bv = t.value(ib).data();
                          auto d = ga->data();
                          for (std::size_t k = 0; k < d.size(); ++k) d[k] += gd[k] * bv[k];
                        }
                        if (Tensor* gb = t.grad_if_needed(ib)) {
                          auto av = t.value(ia).data();
                          auto d = gb->data();
                          for (std::size_t k = 0; k < d.size(); ++k) d[k] += gd[k] * av[k];
                        }
                      });
}

// Element-wise product with a constant tensor (dropout masks).
inline Var apply_mask(Var a, const Tensor& mask) {
  dense::require_same_shape(a.value(), mask, "apply_mask");
  Tensor out = a.value();
  auto od = out.data();
  auto md = mask.data();
  for (std::size_t k = 0; k < od.size(); ++k) od[k] *= md[k];
  return a.tape->push("apply_mask", std::move(out), {a},
                      [ia = a.id, mask](Tape& t, const Tensor& g) {
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          auto d = ga->data();
                          auto gd = g.data();
                          auto md = mask.data();
                          for (std::size_t k = 0; k < d.size(); ++k) d[k] += gd[k] * md[k];
                        }
                      });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::usage, "concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw Error(ErrorKind::shape, "concat_cols: shape mismatch " +
                                        parts[0].value().shape_string() + " vs " +
                                        p.value().shape_string());
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + c0);
    c0 += v.cols();
    ids.push_back(p.id);
  }
  return parts[0].tape->push_many("concat_cols", std::move(out), parts,
                                  [ids](Tape& t, const Tensor& g) {
                                    std::size_t c0 = 0;
                                    for (std::size_t id : ids) {
                                      const std::size_t w = t.value(id).cols();
                                      if (Tensor* gp = t.grad_if_needed(id)) {
                                        for (std::size_t r = 0; r < g.rows(); ++r)
                                          for (std::size_t j = 0; j < w; ++j)
                                            (*gp)(r, j) += g(r, c0 + j);
                                      }
                                      c0 += w;
                                    }
                                  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::usage, "concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw Error(ErrorKind::shape, "concat_rows: shape mismatch " +
                                        parts[0].value().shape_string() + " vs " +
                                        p.value().shape_string());
    }
    rows += p.rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    auto d = p.value().data();
    values.insert(values.end(), d.begin(), d.end());
    ids.push_back(p.id);
  }
  return parts[0].tape->push_many(
      "concat_rows", Tensor(rows, cols, std::move(values)), parts,
      [ids](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t id : ids) {
          const std::size_t n = t.value(id).size();
          if (Tensor* gp = t.grad_if_needed(id)) {
            auto d = gp->data();
            for (std::size_t k = 0; k < n; ++k) d[k] += g.data()[offset + k];
          }
          offset += n;
        }
      });
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (begin > end || end > v.cols()) throw Error(ErrorKind::shape, "slice_cols out of range");
  Tensor out(v.rows(), end - begin);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t j = begin; j < end; ++j) out(r, j - begin) = v(r, j);
  return a.tape->push("slice_cols", std::move(out), {a},
                      [ia = a.id, begin](Tape& t, const Tensor& g) {
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(r, begin + j) += g(r, j);
                        }
                      });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (begin > end || end > v.rows()) throw Error(ErrorKind::shape, "slice_rows out of range");
  auto d = v.data();
  Tensor out(end - begin, v.cols(),
             std::vector<double>(d.begin() + begin * v.cols(), d.begin() + end * v.cols()));
  return a.tape->push("slice_rows", std::move(out), {a},
                      [ia = a.id, begin](Tape& t, const Tensor& g) {
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          auto dst = ga->data().subspan(begin * g.cols(), g.size());
                          auto src = g.data();
                          for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
                        }
                      });
}

// Column-wise sum over rows: (r x c) -> (1 x c).
inline Var sum_rows(Var a) {
  const Tensor& v = a.value();
  Tensor out(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t j = 0; j < v.cols(); ++j) out(0, j) += v(r, j);
  return a.tape->push("sum_rows", std::move(out), {a}, [ia = a.id](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_if_needed(ia)) {
      for (std::size_t r = 0; r < ga->rows(); ++r)
        for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(r, j) += g(0, j);
    }
  });
}

// Column-wise mean over rows: (r x c) -> (1 x c).
inline Var mean_rows(Var a) {
  const std::size_t n = a.rows();
  if (n == 0) throw Error(ErrorKind::shape, "mean_rows of an empty tensor");
  return scale(sum_rows(a), 1.0 / static_cast<double>(n));
}

inline Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->push("sum_all", Tensor(1, 1, s), {a}, [ia = a.id](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_if_needed(ia))
      for (double& v : ga->data()) v += g(0, 0);
  });
}

inline Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.tape->push("sum_squares", Tensor(1, 1, s), {a}, [ia = a.id](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_if_needed(ia)) {
      auto d = ga->data();
      auto x = t.value(ia).data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += 2.0 * x[k] * g(0, 0);
    }
  });
}

// Adds a (1 x c) row to every row of a (r x c) tensor.
inline Var add_row(Var a, Var row) {
  detail::same_tape(a, row);
  const Tensor& v = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != v.cols()) {
    throw Error(ErrorKind::shape,
                "add_row: shape mismatch " + v.shape_string() + " vs " + rv.shape_string());
  }
  Tensor out = v;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) += rv(0, j);
  return a.tape->push("add_row", std::move(out), {a, row},
                      [ia = a.id, ir = row.id](Tape& t, const Tensor& g) {
                        detail::accumulate(t.grad_if_needed(ia), g);
                        if (Tensor* gr = t.grad_if_needed(ir)) {
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t j = 0; j < g.cols(); ++j) (*gr)(0, j) += g(r, j);
                        }
                      });
}

// Multiplies row r of a (r x c) tensor by w(r, 0).
inline Var scale_rows(Var a, Var w) {
  detail::same_tape(a, w);
  const Tensor& v = a.value();
  const Tensor& wv = w.value();
  if (wv.cols() != 1 || wv.rows() != v.rows()) {
    throw Error(ErrorKind::shape,
                "scale_rows: shape mismatch " + v.shape_string() + " vs " + wv.shape_string());
  }
  Tensor out = v;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& x : out.row(r)) x *= wv(r, 0);
  return a.tape->push("scale_rows", std::move(out), {a, w},
                      [ia = a.id, iw = w.id](Tape& t, const Tensor& g) {
                        const Tensor& wv = t.value(iw);
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(r, j) += g(r, j) * wv(r, 0);
                        }
                        if (Tensor* gw = t.grad_if_needed(iw)) {
                          const Tensor& av = t.value(ia);
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            (*gw)(r, 0) += dense::dot(g.row(r), av.row(r));
                        }
                      });
}

// Row-wise dot product: (r x c), (r x c) -> (r x 1).
inline Var row_dot(Var a, Var b) {
  detail::same_tape(a, b);
  dense::require_same_shape(a.value(), b.value(), "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) out(r, 0) = dense::dot(av.row(r), bv.row(r));
  return a.tape->push("row_dot", std::move(out), {a, b},
                      [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
                        const Tensor& av = t.value(ia);
                        const Tensor& bv = t.value(ib);
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          for (std::size_t r = 0; r < av.rows(); ++r)
                            for (std::size_t j = 0; j < av.cols(); ++j) (*ga)(r, j) += g(r, 0) * bv(r, j);
                        }
                        if (Tensor* gb = t.grad_if_needed(ib)) {
                          for (std::size_t r = 0; r < av.rows(); ++r)
                            for (std::size_t j = 0; j < av.cols(); ++j) (*gb)(r, j) += g(r, 0) * av(r, j);
                        }
                      });
}

// y = A x for a constant sparse operator A.
inline Var spmm(std::shared_ptr<const SparseRows> op, Var x) {
  Tensor out = op->multiply(x.value());
  return x.tape->push("spmm", std::move(out), {x}, [op, ix = x.id](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_if_needed(ix)) {
      for (std::size_t r = 0; r < op->rows; ++r) {
        auto gr = g.row(r);
        for (std::size_t k = op->offsets[r]; k < op->offsets[r + 1]; ++k) {
          auto dst = gx->row(op->indices[k]);
          const double w = op->weights[k];
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * gr[j];
        }
      }
    }
  });
}

inline Var leaky_relu(Var a, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw Error(ErrorKind::usage, "leaky_relu slope must lie in [0, 1)");
  }
  Tensor out = a.value();
  for (double& v : out.data()) v = dense::leaky_relu(v, slope);
  return a.tape->push("leaky_relu", std::move(out), {a},
                      [ia = a.id, slope](Tape& t, const Tensor& g) {
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          auto x = t.value(ia).data();
                          auto d = ga->data();
                          auto gd = g.data();
                          // Subgradient at exactly 0 is the negative slope.
                          for (std::size_t k = 0; k < d.size(); ++k)
                            d[k] += gd[k] * (x[k] > 0.0 ? 1.0 : slope);
                        }
                      });
}

inline Tensor softmax_rows(const Tensor& x) {
  if (x.cols() == 0) throw Error(ErrorKind::shape, "softmax_rows needs at least one column");
  Tensor y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    const double m = *std::max_element(xr.begin(), xr.end());
    double z = 0.0;
    for (std::size_t j = 0; j < xr.size(); ++j) z += (yr[j] = std::exp(xr[j] - m));
    for (double& v : yr) v /= z;
  }
  return y;
}

inline Var softmax_rows(Var a) {
  return a.tape->push("softmax_rows", softmax_rows(a.value()), {a},
                      [ia = a.id, self = a.tape->size()](Tape& t, const Tensor& g) {
                        if (Tensor* ga = t.grad_if_needed(ia)) {
                          const Tensor& y = t.value(self);
                          for (std::size_t r = 0; r < y.rows(); ++r) {
                            const double s = dense::dot(g.row(r), y.row(r));
                            for (std::size_t j = 0; j < y.cols(); ++j)
                              (*ga)(r, j) += y(r, j) * (g(r, j) - s);
                          }
                        }
                      });
}

inline Tensor l2_normalize_rows(const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::usage, "l2_normalize_rows eps must be positive");
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    const double n = std::max(std::sqrt(dense::dot(yr, yr)), eps);
    for (double& v : yr) v /= n;
  }
  return y;
}

inline Var l2_normalize_rows(Var a, double eps) {
  return a.tape->push(
      "l2_normalize_rows", l2_normalize_rows(a.value(), eps), {a},
      [ia = a.id, self = a.tape->size(), eps](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_if_needed(ia)) {
          const Tensor& x = t.value(ia);
          const Tensor& y = t.value(self);
          for (std::size_t r = 0; r < x.rows(); ++r) {
            const double norm = std::sqrt(dense::dot(x.row(r), x.row(r)));
            if (norm > eps) {
              const double proj = dense::dot(y.row(r), g.row(r));
              for (std::size_t j = 0; j < x.cols(); ++j)
                (*ga)(r, j) += (g(r, j) - y(r, j) * proj) / norm;
            } else {
              for (std::size_t j = 0; j < x.cols(); ++j) (*ga)(r, j) += g(r, j) / eps;
            }
          }
        }
      });
}

// log(logistic(x)), evaluated without overflow.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var log_sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = log_sigmoid(v);
  return a.tape->push("log_sigmoid", std::move(out), {a}, [ia = a.id](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_if_needed(ia)) {
      auto x = t.value(ia).data();
      auto d = ga->data();
      auto gd = g.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += gd[k] * sigmoid(-x[k]);
    }
  });
}

// Inverted-dropout keep mask: entries are 0 or 1/(1-rate).
template <class Rng>
Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorKind::usage, "dropout rate must lie in [0, 1)");
  Tensor mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.data()) v = uniform(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const { return max_rel_error() < tolerance; }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Compares backward() against central differences for every coordinate of
// every parameter. build_loss must read parameters through tape.leaf().
inline GradCheckReport finite_difference_check(const std::function<Var(Tape&)>& build_loss,
                                               ParamStore& params, double step,
                                               double tolerance) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = build_loss(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape tape;
    return build_loss(tape).value()(0, 0);
  };
  GradCheckReport report;
  report.tolerance = tolerance;
  for (Param& p : params.all()) {
    GradCheckEntry entry;
    entry.name = p.name;
    auto values = p.value.data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      values[k] = original + step;
      const double plus = evaluate();
      values[k] = original - step;
      const double minus = evaluate();
      values[k] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p.grad.data()[k];
      const double err = relative_error(analytic, numeric);
      if (err > entry.max_rel_error || k == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = k;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace mitgnn
