#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"

namespace mmfuse {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix<T>& value() const { return tape_->value(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/**
 * Reverse-mode differentiation tape. Nodes are appended in evaluation order,
 * so every node's parents have smaller ids and a backward sweep over
 * descending ids visits nodes in reverse topological order.
 *
 * A tape belongs to one thread of control.
 */
template <typename T>
class Tape {
 public:
  // Propagates the adjoint of node `self` into its parents.
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Var<T> parameter(Matrix<T> value) { return push(std::move(value), true, nullptr); }
  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  Var<T> record(Matrix<T> value, bool needs_grad, Backprop backprop) {
    return push(std::move(value), needs_grad, needs_grad ? std::move(backprop) : nullptr);
  }

  const Matrix<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }
  const Matrix<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var<T> v) const { return nodes_[v.id()].needs_grad; }

  // Adjoint buffer for node `id`, zero-initialized on first access.
  Matrix<T>& adjoint(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Matrix<T>(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  // Gradient of the last backward sweep; zero for nodes the loss does not use.
  Matrix<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    if (!n.has_grad) return Matrix<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void zero_grad() {
    for (Node& n : nodes_) n.has_grad = false;
  }

  // Resets all adjoints, then sweeps from `loss`.
  void backward(Var<T> loss) {
    zero_grad();
    accumulate_backward(loss);
  }

  // Sweeps without resetting leaf gradients: repeated calls sum them.
  void accumulate_backward(Var<T> loss) {
    const Matrix<T>& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      fail(ErrorKind::invalid_argument, "backward requires a scalar loss, got " + lv.shape());
    }
    for (Node& n : nodes_)
      if (n.backprop) n.has_grad = false;
    adjoint(loss.id())[0] += T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backprop) n.backprop(*this, i);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    Backprop backprop;
  };

  Var<T> push(Matrix<T> value, bool needs_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), false, needs_grad, std::move(backprop)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) fail(ErrorKind::invalid_argument, "operands recorded on different tapes");
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    fail(ErrorKind::shape_mismatch, std::string(op) + ": " + a.value().shape() + " vs " + b.value().shape());
  }
}

// out += a * b (plain triple loop, fixed summation order)
template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a(i, p);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
}

// out += a * b^T
template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(j, p);
      out(i, j) += s;
    }
}

// out += a^T * b
template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a(p, i);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
}

template <typename T>
T sigmoid(T x) {
  // Split by sign so exp never overflows.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  if (av.cols() != bv.rows()) {
    fail(ErrorKind::shape_mismatch, "matmul: " + av.shape() + " x " + bv.shape());
  }
  Matrix<T> out(av.rows(), bv.cols());
  detail::gemm_nn(av, bv, out);
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib), [ia, ib](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) detail::gemm_nt(g, tp.value(ib), tp.adjoint(ia));
    if (tp.needs_grad(ib)) detail::gemm_tn(tp.value(ia), g, tp.adjoint(ib));
  });
}

// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  if (av.cols() != bv.cols()) {
    fail(ErrorKind::shape_mismatch, "matmul_nt: " + av.shape() + " x " + bv.shape() + "^T");
  }
  Matrix<T> out(av.rows(), bv.rows());
  detail::gemm_nt(av, bv, out);
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib), [ia, ib](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) detail::gemm_nn(g, tp.value(ib), tp.adjoint(ia));
    if (tp.needs_grad(ib)) detail::gemm_tn(g, tp.value(ia), tp.adjoint(ib));
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Matrix<T> out = transpose(a.value());
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape("add", a, b);
  Matrix<T> out = a.value();
  const Matrix<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib), [ia, ib](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.needs_grad(id)) continue;
      Matrix<T>& gp = tp.adjoint(id);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape("sub", a, b);
  Matrix<T> out = a.value();
  const Matrix<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib), [ia, ib](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) {
      Matrix<T>& ga = tp.adjoint(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(ib)) {
      Matrix<T>& gb = tp.adjoint(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  detail::require_same_shape("hadamard", a, b);
  Matrix<T> out = a.value();
  const Matrix<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib), [ia, ib](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) {
      Matrix<T>& ga = tp.adjoint(ia);
      const Matrix<T>& bv = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(ib)) {
      Matrix<T>& gb = tp.adjoint(ib);
      const Matrix<T>& av = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia, c](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

// 1 - a
template <typename T>
Var<T> one_minus(Var<T> a) {
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) - out[i];
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

// x[L x n] + b^T broadcast over rows, with b an [n x 1] column.
template <typename T>
Var<T> add_row_bias(Var<T> x, Var<T> b) {
  detail::require_same_tape(x, b);
  const Matrix<T>& xv = x.value();
  const Matrix<T>& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != xv.cols()) {
    fail(ErrorKind::shape_mismatch, "add_row_bias: input " + xv.shape() + " with bias " + bv.shape());
  }
  Matrix<T> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  Tape<T>& t = x.tape();
  const std::size_t ix = x.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ix) || t.needs_grad(ib), [ix, ib](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    if (tp.needs_grad(ix)) {
      Matrix<T>& gx = tp.adjoint(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs_grad(ib)) {
      Matrix<T>& gb = tp.adjoint(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

// Row-wise linear layer: x[L x in] W^T + b^T with W [out x in], b [out x 1].
template <typename T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  if (x.cols() != w.cols()) {
    fail(ErrorKind::shape_mismatch, "affine: input " + x.value().shape() + " with weight " + w.value().shape());
  }
  return add_row_bias(matmul_nt(x, w), b);
}

template <typename T>
Var<T> tanh_map(Var<T> a) {
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    const Matrix<T>& y = tp.value(self);
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> sigmoid_map(Var<T> a) {
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid(out[i]);
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    const Matrix<T>& y = tp.value(self);
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

// Per-row softmax with row-max subtraction.
template <typename T>
Matrix<T> softmax_rows_value(const Matrix<T>& a) {
  Matrix<T> out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    T mx = out(i, 0);
    for (std::size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, out(i, j));
    T sum = 0;
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      sum += out(i, j);
    }
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Matrix<T> out = softmax_rows_value(a.value());
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    const Matrix<T>& y = tp.value(self);
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

// [L x n] -> [1 x n]
template <typename T>
Var<T> mean_rows(Var<T> a) {
  Matrix<T> out = row_mean(a.value());
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    Matrix<T>& ga = tp.adjoint(ia);
    const T n = static_cast<T>(ga.rows());
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[j] / n;
  });
}

// [L x a] , [L x b] -> [L x (a+b)]
template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  if (av.rows() != bv.rows()) {
    fail(ErrorKind::shape_mismatch, "concat_cols: " + av.shape() + " vs " + bv.shape());
  }
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix<T> out(av.rows(), ca + cb);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
  }
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                  [ia, ib, ca, cb](Tape<T>& tp, std::size_t self) {
                    const Matrix<T>& g = tp.adjoint(self);
                    if (tp.needs_grad(ia)) {
                      Matrix<T>& ga = tp.adjoint(ia);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
                    }
                    if (tp.needs_grad(ib)) {
                      Matrix<T>& gb = tp.adjoint(ib);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
                    }
                  });
}

// [La x n] , [Lb x n] -> [(La+Lb) x n]
template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  if (av.cols() != bv.cols()) {
    fail(ErrorKind::shape_mismatch, "concat_rows: " + av.shape() + " vs " + bv.shape());
  }
  std::vector<T> data(av.storage());
  data.insert(data.end(), bv.storage().begin(), bv.storage().end());
  const std::size_t na = av.size();
  Matrix<T> out(av.rows() + bv.rows(), av.cols(), std::move(data));
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ib), [ia, ib, na](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) {
      Matrix<T>& ga = tp.adjoint(ia);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(ib)) {
      Matrix<T>& gb = tp.adjoint(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

// a[L x n] scaled per column by the row z [1 x n]; a [1 x 1] z scales everything.
template <typename T>
Var<T> mul_broadcast(Var<T> a, Var<T> z) {
  detail::require_same_tape(a, z);
  const Matrix<T>& av = a.value();
  const Matrix<T>& zv = z.value();
  const bool scalar = zv.rows() == 1 && zv.cols() == 1;
  if (!scalar && (zv.rows() != 1 || zv.cols() != av.cols())) {
    fail(ErrorKind::shape_mismatch, "mul_broadcast: " + av.shape() + " by " + zv.shape());
  }
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= zv[scalar ? 0 : j];
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id(), iz = z.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(iz),
                  [ia, iz, scalar](Tape<T>& tp, std::size_t self) {
                    const Matrix<T>& g = tp.adjoint(self);
                    const Matrix<T>& av = tp.value(ia);
                    const Matrix<T>& zv = tp.value(iz);
                    if (tp.needs_grad(ia)) {
                      Matrix<T>& ga = tp.adjoint(ia);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * zv[scalar ? 0 : j];
                    }
                    if (tp.needs_grad(iz)) {
                      Matrix<T>& gz = tp.adjoint(iz);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gz[scalar ? 0 : j] += g(i, j) * av(i, j);
                    }
                  });
}

// Sum of all entries -> [1 x 1]
template <typename T>
Var<T> sum_all(Var<T> a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  Tape<T>& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(Matrix<T>(1, 1, s), t.needs_grad(ia), [ia](Tape<T>& tp, std::size_t self) {
    const T g = tp.adjoint(self)[0];
    Matrix<T>& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
struct Attention {
  Var<T> out;      // [n_q x d_p]
  Var<T> weights;  // [n_q x n_k], row-stochastic
};

// softmax_rows(Q K^T / sqrt(d_p)) V
template <typename T>
Attention<T> scaled_dot_attention(Var<T> q, Var<T> k, Var<T> v) {
  const std::size_t dp = q.cols();
  if (k.cols() != dp || v.cols() != dp || k.rows() != v.rows()) {
    fail(ErrorKind::shape_mismatch, "scaled_dot_attention: Q " + q.value().shape() + ", K " + k.value().shape() +
                                        ", V " + v.value().shape());
  }
  Var<T> logits = scale(matmul_nt(q, k), T(1) / std::sqrt(static_cast<T>(dp)));
  Var<T> weights = softmax_rows(logits);
  return {matmul(weights, v), weights};
}

inline constexpr double kLogClamp = 1e-12;

// -w[gold] * log(max(softmax(logits)[gold], 1e-12)) for a [1 x M] logit row.
template <typename T>
Var<T> weighted_cross_entropy(Var<T> logits, std::size_t gold, std::span<const T> class_weights) {
  const Matrix<T>& lv = logits.value();
  const std::size_t m = lv.cols();
  if (lv.rows() != 1) fail(ErrorKind::shape_mismatch, "weighted_cross_entropy: logits must be one row, got " + lv.shape());
  if (gold >= m) {
    fail(ErrorKind::invalid_argument, "weighted_cross_entropy: gold class " + std::to_string(gold) +
                                          " out of range for " + std::to_string(m) + " classes");
  }
  if (class_weights.size() != m) {
    fail(ErrorKind::shape_mismatch, "weighted_cross_entropy: " + std::to_string(class_weights.size()) +
                                        " class weights for " + std::to_string(m) + " classes");
  }
  const T w = class_weights[gold];
  if (!(w > T(0))) fail(ErrorKind::invalid_argument, "weighted_cross_entropy: class weights must be positive");

  T mx = lv[0];
  for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, lv[j]);
  T sum = 0;
  for (std::size_t j = 0; j < m; ++j) sum += std::exp(lv[j] - mx);
  const T log_p = lv[gold] - mx - std::log(sum);
  const T log_floor = static_cast<T>(std::log(kLogClamp));
  const bool clamped = log_p < log_floor;
  const T loss = -w * (clamped ? log_floor : log_p);

  Tape<T>& t = logits.tape();
  const std::size_t il = logits.id();
  return t.record(Matrix<T>(1, 1, loss), t.needs_grad(il) && !clamped, [il, gold, w](Tape<T>& tp, std::size_t self) {
    const T g = tp.adjoint(self)[0];
    const Matrix<T> p = softmax_rows_value(tp.value(il));
    Matrix<T>& gl = tp.adjoint(il);
    for (std::size_t j = 0; j < p.cols(); ++j) gl[j] += g * w * (p[j] - (j == gold ? T(1) : T(0)));
  });
}

}  // namespace mmfuse
