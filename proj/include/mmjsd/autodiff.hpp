#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied to its Vars in execution order. The
// only broadcasting is scalar-with-tensor; everything else must be aligned
// explicitly (tile_rows / tile_cols). relu has derivative 0 at exactly 0.

#include "mmjsd/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace mmjsd::ad {

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until the tape is reset.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  T item() const { return value().item(); }
  std::size_t id() const noexcept { return id_; }
  Tape<T>* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient map produced by Tape::backward, indexed by node id.
template <class T>
class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape<T>* tape, std::vector<Tensor<T>> grads) : tape_(tape), grads_(std::move(grads)) {}

  /// Gradient of the loss with respect to `v`; zeros for constants and nodes
  /// the loss does not depend on.
  const Tensor<T>& operator[](const Var<T>& v) const {
    if (v.tape() != tape_ || v.id() >= grads_.size())
      throw std::invalid_argument("gradient requested for a node that is not on this tape");
    return grads_[v.id()];
  }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  const Tape<T>* tape_ = nullptr;
  std::vector<Tensor<T>> grads_;
};

template <class T>
class Tape {
  static_assert(std::is_floating_point_v<T>);

 public:
  /// Receives the output gradient and output value; accumulates into input gradients.
  using BackwardFn = std::function<void(const Tensor<T>& out_grad, const Tensor<T>& out_value, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> variable(Tensor<T> value) { return push(std::move(value), true, nullptr); }
  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }
  Var<T> scalar_constant(T v) { return constant(Tensor<T>::scalar(v)); }

  /// Records a primitive result. `backward` may be empty when no input needs a gradient.
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    return push(std::move(value), requires_grad, std::move(backward));
  }

  const Tensor<T>& value(const Var<T>& v) const { return node(v).value; }
  bool requires_grad(const Var<T>& v) const { return node(v).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  /// Adds `g` into the gradient slot of `v` (no-op for nodes without gradient).
  void accumulate(const Var<T>& v, const Tensor<T>& g) {
    auto& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
      return;
    }
    T* dst = n.grad.data();
    const T* src = g.data();
    for (std::size_t i = 0, e = g.size(); i < e; ++i) dst[i] += src[i];
  }

  /// Mutable gradient slot of `v`, zero-initialised on first access.
  Tensor<T>& grad_slot(const Var<T>& v) {
    auto& n = node(v);
    if (n.grad.size() == 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  Gradients<T> backward(const Var<T>& loss) {
    if (consumed_) throw std::logic_error("backward already ran on this tape; reset it first");
    const auto& l = node(loss);
    if (l.value.size() != 1)
      throw ShapeError("backward requires a scalar loss, got shape " + to_string(l.value.shape()));
    consumed_ = true;
    if (l.requires_grad) {
      nodes_[loss.id()].grad = Tensor<T>(l.value.shape(), T{1});
      for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
        n.backward(n.grad, n.value, *this);
      }
    }
    std::vector<Tensor<T>> grads(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      auto& n = nodes_[i];
      grads[i] = n.grad.size() ? std::move(n.grad) : Tensor<T>(n.value.shape());
    }
    return Gradients<T>(this, std::move(grads));
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    if (consumed_) throw std::logic_error("tape was consumed by backward; reset it before recording");
    nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(backward)});
    return Var<T>(this, nodes_.size() - 1);
  }

  Node& node(const Var<T>& v) {
    if (v.tape() != this || v.id() >= nodes_.size()) throw std::invalid_argument("node is not on this tape");
    return nodes_[v.id()];
  }
  const Node& node(const Var<T>& v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) throw std::invalid_argument("node is not on this tape");
    return nodes_[v.id()];
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <class T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <class T>
Tape<T>& common_tape(std::initializer_list<Var<T>> vars) {
  Tape<T>* tape = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw std::invalid_argument("operation on an unbound Var");
    if (tape && v.tape() != tape) throw std::invalid_argument("operands live on different tapes");
    tape = v.tape();
  }
  return *tape;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <class T>
void require_matrix(const Var<T>& a, const char* op) {
  require(a.shape().size() == 2, std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
}

// Elementwise unary op: value = f(x), d/dx = df(x, y).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  auto& tape = common_tape<T>({a});
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a, df](const Tensor<T>& g, const Tensor<T>& y, Tape<T>& t) {
      const Tensor<T>& xv = t.value(a);
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], y[i]);
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

template <class T>
void check_finite(const Tensor<T>& x, const char* op) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i])) throw DomainError(std::string(op) + ": non-finite input");
}

// Sum of a gradient into a scalar slot (reverse of scalar broadcasting).
template <class T>
T total(const Tensor<T>& g) {
  T s{0};
  for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
  return s;
}

enum class BinaryKind { add, sub, mul };

template <class T>
Var<T> binary(const Var<T>& a, const Var<T>& b, BinaryKind kind) {
  auto& tape = common_tape<T>({a, b});
  const Tensor<T>& x = a.value();
  const Tensor<T>& z = b.value();
  const bool same = x.shape() == z.shape();
  const bool a_scalar = !same && x.size() == 1;
  const bool b_scalar = !same && z.size() == 1;
  require(same || a_scalar || b_scalar,
          "elementwise op: shapes " + to_string(x.shape()) + " and " + to_string(z.shape()) + " do not conform");
  const Shape out_shape = a_scalar ? z.shape() : x.shape();
  Tensor<T> y(out_shape);
  const std::size_t n = y.size();
  auto xa = [&](std::size_t i) { return a_scalar ? x[0] : x[i]; };
  auto zb = [&](std::size_t i) { return b_scalar ? z[0] : z[i]; };
  switch (kind) {
    case BinaryKind::add:
      for (std::size_t i = 0; i < n; ++i) y[i] = xa(i) + zb(i);
      break;
    case BinaryKind::sub:
      for (std::size_t i = 0; i < n; ++i) y[i] = xa(i) - zb(i);
      break;
    case BinaryKind::mul:
      for (std::size_t i = 0; i < n; ++i) y[i] = xa(i) * zb(i);
      break;
  }
  const bool rga = tape.requires_grad(a);
  const bool rgb = tape.requires_grad(b);
  typename Tape<T>::BackwardFn bw;
  if (rga || rgb) {
    bw = [a, b, kind, rga, rgb, a_scalar, b_scalar](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      const std::size_t n = g.size();
      if (rga) {
        Tensor<T>& ga = t.grad_slot(a);
        if (kind == BinaryKind::mul) {
          const Tensor<T>& zv = t.value(b);
          if (a_scalar) {
            T s{0};
            for (std::size_t i = 0; i < n; ++i) s += g[i] * zv[i];
            ga[0] += s;
          } else {
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (b_scalar ? zv[0] : zv[i]);
          }
        } else if (a_scalar) {
          ga[0] += total(g);
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (rgb) {
        Tensor<T>& gb = t.grad_slot(b);
        const T sign = kind == BinaryKind::sub ? T{-1} : T{1};
        if (kind == BinaryKind::mul) {
          const Tensor<T>& xv = t.value(a);
          if (b_scalar) {
            T s{0};
            for (std::size_t i = 0; i < n; ++i) s += g[i] * xv[i];
            gb[0] += s;
          } else {
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * (a_scalar ? xv[0] : xv[i]);
          }
        } else if (b_scalar) {
          gb[0] += sign * total(g);
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += sign * g[i];
        }
      }
    };
  }
  return tape.record(std::move(y), rga || rgb, std::move(bw));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::common_tape<T>({a, b});
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  detail::require(a.cols() == b.rows(),
                  "matmul: inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor<T> y({a.rows(), b.cols()});
  if (y.size() > 0) detail::as_matrix(y).noalias() = detail::as_matrix(a.value()) * detail::as_matrix(b.value());
  const bool rga = tape.requires_grad(a);
  const bool rgb = tape.requires_grad(b);
  typename Tape<T>::BackwardFn bw;
  if (rga || rgb) {
    bw = [a, b, rga, rgb](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      auto gm = detail::as_matrix(g);
      if (rga) {
        Tensor<T>& ga = t.grad_slot(a);
        detail::as_matrix(ga).noalias() += gm * detail::as_matrix(t.value(b)).transpose();
      }
      if (rgb) {
        Tensor<T>& gb = t.grad_slot(b);
        detail::as_matrix(gb).noalias() += detail::as_matrix(t.value(a)).transpose() * gm;
      }
    };
  }
  return tape.record(std::move(y), rga || rgb, std::move(bw));
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::add);
}
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::sub);
}
/// Elementwise product.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::mul);
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

/// a * c for a constant scalar c.
template <class T>
Var<T> scale(const Var<T>& a, T c) {
  return detail::unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}
/// a + c for a constant scalar c.
template <class T>
Var<T> shift(const Var<T>& a, T c) {
  return detail::unary(a, [c](T x) { return x + c; }, [](T, T) { return T{1}; });
}
template <class T>
Var<T> operator-(const Var<T>& a) { return scale(a, T{-1}); }

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var<T> softplus(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](T x, T) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  detail::check_finite(a.value(), "exp");
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(const Var<T>& a) {
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || x[i] <= T{0}) throw DomainError("log: input outside (0, inf)");
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <class T>
Var<T> abs(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return std::abs(x); }, [](T x, T) { return x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); });
}

/// Clamp into [lo, hi]; gradient passes only strictly inside the interval.
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T{1} : T{0}; });
}

/// Sum of all elements, as a rank-0 scalar.
template <class T>
Var<T> sum(const Var<T>& a) {
  auto& tape = detail::common_tape<T>({a});
  const T s = detail::total(a.value());
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      Tensor<T>& ga = t.grad_slot(a);
      const T gv = g[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
    };
  }
  return tape.record(Tensor<T>::scalar(s), rg, std::move(bw));
}

template <class T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.size();
  detail::require(n > 0, "mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

/// Sum of a matrix along `axis`, keeping it: axis 1 gives n x 1, axis 0 gives 1 x m.
template <class T>
Var<T> sum(const Var<T>& a, std::size_t axis) {
  auto& tape = detail::common_tape<T>({a});
  detail::require_matrix(a, "sum(axis)");
  detail::require(axis < 2, "sum(axis): axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor<T> y(axis == 1 ? Shape{r, 1} : Shape{1, c});
  const Tensor<T>& x = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[axis == 1 ? i : j] += x(i, j);
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a, axis, r, c](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga(i, j) += g[axis == 1 ? i : j];
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

template <class T>
Var<T> mean(const Var<T>& a, std::size_t axis) {
  detail::require_matrix(a, "mean(axis)");
  const std::size_t n = a.value().dim(axis);
  detail::require(n > 0, "mean(axis) over an empty axis");
  return scale(sum(a, axis), T{1} / static_cast<T>(n));
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  auto& tape = detail::common_tape<T>({a});
  Tensor<T> y = a.value().reshaped(std::move(shape));
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

/// Concatenates matrices along `axis` (0: stack rows, 1: join columns).
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat of zero tensors");
  detail::require(axis < 2, "concat: axis must be 0 or 1");
  Tape<T>* tape = parts.front().tape();
  bool rg = false;
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.tape() != tape) throw std::invalid_argument("concat operands live on different tapes");
    detail::require_matrix(p, "concat");
    rg = rg || tape->requires_grad(p);
    if (axis == 1) {
      detail::require(rows == 0 || p.rows() == rows || cols == 0, "concat: row counts differ");
      rows = p.rows();
      cols += p.cols();
    } else {
      detail::require(cols == 0 || p.cols() == cols || rows == 0, "concat: column counts differ");
      cols = p.cols();
      rows += p.rows();
    }
  }
  Tensor<T> y({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor<T>& x = p.value();
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) {
        if (axis == 1)
          y(i, offset + j) = x(i, j);
        else
          y(offset + i, j) = x(i, j);
      }
    offset += axis == 1 ? x.cols() : x.rows();
  }
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [parts, axis](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      std::size_t off = 0;
      for (const auto& p : parts) {
        const std::size_t pr = t.value(p).rows(), pc = t.value(p).cols();
        if (t.requires_grad(p)) {
          Tensor<T>& gp = t.grad_slot(p);
          for (std::size_t i = 0; i < pr; ++i)
            for (std::size_t j = 0; j < pc; ++j) gp(i, j) += axis == 1 ? g(i, off + j) : g(off + i, j);
        }
        off += axis == 1 ? pc : pr;
      }
    };
  }
  return tape->record(std::move(y), rg, std::move(bw));
}

/// Index range [begin, end) of a matrix along `axis`.
template <class T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  auto& tape = detail::common_tape<T>({a});
  detail::require_matrix(a, "slice");
  detail::require(axis < 2, "slice: axis must be 0 or 1");
  const std::size_t extent = a.value().dim(axis);
  detail::require(begin <= end && end <= extent, "slice: range out of bounds");
  const Tensor<T>& x = a.value();
  const std::size_t r = axis == 0 ? end - begin : x.rows();
  const std::size_t c = axis == 1 ? end - begin : x.cols();
  Tensor<T> y({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y(i, j) = axis == 0 ? x(begin + i, j) : x(i, begin + j);
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a, axis, begin, r, c](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (axis == 0 ? ga(begin + i, j) : ga(i, begin + j)) += g(i, j);
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

/// Numerically stable log-sum-exp of a matrix along `axis`, keeping it.
template <class T>
Var<T> logsumexp(const Var<T>& a, std::size_t axis) {
  auto& tape = detail::common_tape<T>({a});
  detail::require_matrix(a, "logsumexp");
  detail::require(axis < 2, "logsumexp: axis must be 0 or 1");
  const Tensor<T>& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  const std::size_t outer = axis == 1 ? r : c;
  const std::size_t inner = axis == 1 ? c : r;
  detail::require(inner > 0, "logsumexp over an empty axis");
  auto at = [&](std::size_t o, std::size_t k) { return axis == 1 ? x(o, k) : x(k, o); };
  Tensor<T> y(axis == 1 ? Shape{r, 1} : Shape{1, c});
  for (std::size_t o = 0; o < outer; ++o) {
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < inner; ++k) m = std::max(m, at(o, k));
    if (std::isnan(m) || m == std::numeric_limits<T>::infinity()) throw DomainError("logsumexp: non-finite input");
    if (m == -std::numeric_limits<T>::infinity()) {
      y[o] = m;
      continue;
    }
    T s{0};
    for (std::size_t k = 0; k < inner; ++k) s += std::exp(at(o, k) - m);
    y[o] = m + std::log(s);
  }
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a, axis, r, c](const Tensor<T>& g, const Tensor<T>& y, Tape<T>& t) {
      const Tensor<T>& xv = t.value(a);
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t o = axis == 1 ? i : j;
          if (y[o] == -std::numeric_limits<T>::infinity()) continue;
          ga(i, j) += g[o] * std::exp(xv(i, j) - y[o]);
        }
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

/// Repeats a 1 x m row `n` times.
template <class T>
Var<T> tile_rows(const Var<T>& a, std::size_t n) {
  auto& tape = detail::common_tape<T>({a});
  detail::require_matrix(a, "tile_rows");
  detail::require(a.rows() == 1, "tile_rows expects a single row, got " + to_string(a.shape()));
  const std::size_t c = a.cols();
  Tensor<T> y({n, c});
  const Tensor<T>& x = a.value();
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.data(), c, y.data() + i * c);
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a, n, c](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[j] += g(i, j);
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

/// Repeats an n x 1 column `m` times.
template <class T>
Var<T> tile_cols(const Var<T>& a, std::size_t m) {
  auto& tape = detail::common_tape<T>({a});
  detail::require_matrix(a, "tile_cols");
  detail::require(a.cols() == 1, "tile_cols expects a single column, got " + to_string(a.shape()));
  const std::size_t r = a.rows();
  Tensor<T> y({r, m});
  const Tensor<T>& x = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < m; ++j) y(i, j) = x[i];
  const bool rg = tape.requires_grad(a);
  typename Tape<T>::BackwardFn bw;
  if (rg) {
    bw = [a, r, m](const Tensor<T>& g, const Tensor<T>&, Tape<T>& t) {
      Tensor<T>& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < m; ++j) ga[i] += g(i, j);
    };
  }
  return tape.record(std::move(y), rg, std::move(bw));
}

// ---------------------------------------------------------------------------
// Uniform dispatch over the primitive set.

enum class Primitive {
  matmul, add, sub, mul, relu, softplus, sigmoid, exp, log, square,
  sum, mean, reshape, concat, slice, logsumexp
};

struct PrimitiveArgs {
  std::optional<std::size_t> axis;  // sum/mean (absent: all elements), concat, slice, logsumexp
  std::size_t begin = 0;            // slice
  std::size_t end = 0;              // slice
  Shape shape;                      // reshape
};

template <class T>
Var<T> apply_primitive(Primitive op, std::span<const Var<T>> in, const PrimitiveArgs& args = {}) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) throw ShapeError("primitive expects " + std::to_string(n) + " inputs");
  };
  switch (op) {
    case Primitive::matmul: arity(2); return matmul(in[0], in[1]);
    case Primitive::add: arity(2); return add(in[0], in[1]);
    case Primitive::sub: arity(2); return sub(in[0], in[1]);
    case Primitive::mul: arity(2); return mul(in[0], in[1]);
    case Primitive::relu: arity(1); return relu(in[0]);
    case Primitive::softplus: arity(1); return softplus(in[0]);
    case Primitive::sigmoid: arity(1); return sigmoid(in[0]);
    case Primitive::exp: arity(1); return exp(in[0]);
    case Primitive::log: arity(1); return log(in[0]);
    case Primitive::square: arity(1); return square(in[0]);
    case Primitive::sum: arity(1); return args.axis ? sum(in[0], *args.axis) : sum(in[0]);
    case Primitive::mean: arity(1); return args.axis ? mean(in[0], *args.axis) : mean(in[0]);
    case Primitive::reshape: arity(1); return reshape(in[0], args.shape);
    case Primitive::concat: return concat(std::vector<Var<T>>(in.begin(), in.end()), args.axis.value_or(0));
    case Primitive::slice: arity(1); return slice(in[0], args.axis.value_or(0), args.begin, args.end);
    case Primitive::logsumexp: arity(1); return logsumexp(in[0], args.axis.value_or(1));
  }
  throw std::invalid_argument("unknown primitive");
}

// ---------------------------------------------------------------------------
// Gradient checking (64-bit only).

using ScalarFn = std::function<Var<double>(Tape<double>&, const Var<double>&)>;

/// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12).
inline double grad_check(const ScalarFn& f, const Tensor<double>& x, double h = 1e-5) {
  auto eval = [&](const Tensor<double>& at) {
    Tape<double> tape;
    const double v = f(tape, tape.variable(at)).item();
    if (!std::isfinite(v)) throw DomainError("grad_check: objective is not finite");
    return v;
  };
  Tensor<double> analytic;
  {
    Tape<double> tape;
    auto xv = tape.variable(x);
    auto loss = f(tape, xv);
    if (!std::isfinite(loss.item())) throw DomainError("grad_check: objective is not finite");
    analytic = tape.backward(loss)[xv];
  }
  double worst = 0.0;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval(probe);
    probe[i] = x[i] - h;
    const double down = eval(probe);
    probe[i] = x[i];
    const double central = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mmjsd::ad
