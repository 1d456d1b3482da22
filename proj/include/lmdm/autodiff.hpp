//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every intermediate matrix together with a closure that
// pushes the adjoint of the node back to its inputs. Nodes are appended in
// evaluation order, so a single reverse sweep is a valid topological order.

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "lmdm/error.hpp"
#include "lmdm/rng.hpp"

namespace lmdm::ad {

using Index = std::shared_ptr<const std::vector<int>>;

inline Index make_index(std::vector<int> v) {
  return std::make_shared<const std::vector<int>>(std::move(v));
}

class Tape;

struct Var {
  Tape *tape = nullptr;
  int id = -1;

  const Matrix &value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
public:
  using Backward = std::function<void(Tape &, int)>;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }
  Var leaf(Matrix value) { return push(std::move(value), true, {}); }

  const Matrix &value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
  const Matrix &grad(int id) const { return nodes_[id].grad; }

  // Adjoint accumulator for node `id`, allocated on first use.
  Matrix &grad_ref(int id) {
    auto &n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back({std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Seeds d(out)/d(out) = 1 for a 1x1 node and sweeps backwards.
  void backward(Var out) {
    if (out.tape != this || value(out.id).size() != 1)
      throw ContractError("backward() requires a scalar node on this tape");
    grad_ref(out.id).setOnes();
    for (int id = out.id; id >= 0; --id) {
      auto &n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix &Var::value() const { return tape->value(id); }

namespace detail {

inline bool any_grad(std::initializer_list<Var> vs) {
  for (const Var &v : vs)
    if (v.tape->requires_grad(v.id)) return true;
  return false;
}

inline void check_same_tape(const Var &a, const Var &b) {
  if (a.tape != b.tape) throw ContractError("variables live on different tapes");
}

inline void check_shape(const Var &a, const Var &b, const char *op) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch");
}

inline void accumulate(Tape &t, const Var &v, const Matrix &g) {
  if (t.requires_grad(v.id)) t.grad_ref(v.id) += g;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  bool rg = detail::any_grad({a, b});
  return a.tape->push(std::move(out), rg, [a, b](Tape &t, int self) {
    const Matrix &g = t.grad(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id).noalias() += g * t.value(b.id).transpose();
    if (t.requires_grad(b.id)) t.grad_ref(b.id).noalias() += t.value(a.id).transpose() * g;
  });
}

inline Var add(Var a, Var b) {
  detail::check_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return a.tape->push(std::move(out), detail::any_grad({a, b}), [a, b](Tape &t, int self) {
    detail::accumulate(t, a, t.grad(self));
    detail::accumulate(t, b, t.grad(self));
  });
}

inline Var sub(Var a, Var b) {
  detail::check_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return a.tape->push(std::move(out), detail::any_grad({a, b}), [a, b](Tape &t, int self) {
    detail::accumulate(t, a, t.grad(self));
    if (t.requires_grad(b.id)) t.grad_ref(b.id) -= t.grad(self);
  });
}

inline Var mul(Var a, Var b) {
  detail::check_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), detail::any_grad({a, b}), [a, b](Tape &t, int self) {
    const Matrix &g = t.grad(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id) += g.cwiseProduct(t.value(b.id));
    if (t.requires_grad(b.id)) t.grad_ref(b.id) += g.cwiseProduct(t.value(a.id));
  });
}

// a (n x m) + row (1 x m) broadcast over rows.
inline Var add_row(Var a, Var row) {
  detail::check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ContractError("add_row: expected a 1 x cols row vector");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(out), detail::any_grad({a, row}), [a, row](Tape &t, int self) {
    const Matrix &g = t.grad(self);
    detail::accumulate(t, a, g);
    if (t.requires_grad(row.id)) t.grad_ref(row.id) += g.colwise().sum();
  });
}

// a (n x m) scaled row-wise by c (n x 1).
inline Var mul_col(Var a, Var c) {
  detail::check_same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows())
    throw ContractError("mul_col: expected an n x 1 column");
  Matrix out = a.value().array().colwise() * c.value().col(0).array();
  return a.tape->push(std::move(out), detail::any_grad({a, c}), [a, c](Tape &t, int self) {
    const Matrix &g = t.grad(self);
    if (t.requires_grad(a.id))
      t.grad_ref(a.id).array() += g.array().colwise() * t.value(c.id).col(0).array();
    if (t.requires_grad(c.id))
      t.grad_ref(c.id).col(0) += g.cwiseProduct(t.value(a.id)).rowwise().sum();
  });
}

inline Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, s](Tape &t, int self) {
    detail::accumulate(t, a, t.grad(self) * s);
  });
}

inline Var add_const(Var a, double c) {
  Matrix out = a.value().array() + c;
  return a.tape->push(std::move(out), detail::any_grad({a}), [a](Tape &t, int self) {
    detail::accumulate(t, a, t.grad(self));
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

namespace detail {

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Matrix out = a.value().unaryExpr(f);
  return a.tape->push(std::move(out), any_grad({a}), [a, df](Tape &t, int self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix &x = t.value(a.id);
    const Matrix &y = t.value(self);
    Matrix &ga = t.grad_ref(a.id);
    const Matrix &g = t.grad(self);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      ga.data()[i] += g.data()[i] * df(x.data()[i], y.data()[i]);
  });
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

} // namespace detail

inline Var silu(Var a) {
  return detail::unary(
      a, [](double x) { return x * detail::sigmoid(x); },
      [](double x, double) {
        double s = detail::sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a, [](double x) { return detail::sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(Var a) {
  return detail::unary(
      a, [](double x) { return detail::softplus(x); },
      [](double x, double) { return detail::sigmoid(x); });
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(Var a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var sqrt(Var a) {
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var reciprocal(Var a) {
  return detail::unary(
      a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

// ---------------------------------------------------------------------------
// Structural ops

inline Var concat_cols(const std::vector<Var> &parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape *tape = parts.front().tape;
  Eigen::Index rows = parts.front().rows(), cols = 0;
  bool rg = false;
  for (const Var &p : parts) {
    if (p.tape != tape || p.rows() != rows)
      throw ContractError("concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || tape->requires_grad(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var &p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return tape->push(std::move(out), rg, [parts](Tape &t, int self) {
    const Matrix &g = t.grad(self);
    Eigen::Index c = 0;
    for (const Var &p : parts) {
      Eigen::Index w = t.value(p.id).cols();
      if (t.requires_grad(p.id)) t.grad_ref(p.id) += g.middleCols(c, w);
      c += w;
    }
  });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw ContractError("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, start, count](Tape &t, int self) {
    if (t.requires_grad(a.id)) t.grad_ref(a.id).middleCols(start, count) += t.grad(self);
  });
}

// out[e] = a[idx[e]]
inline Var gather_rows(Var a, const Index &idx) {
  const Matrix &av = a.value();
  Matrix out(static_cast<Eigen::Index>(idx->size()), av.cols());
  for (std::size_t e = 0; e < idx->size(); ++e) {
    int r = (*idx)[e];
    if (r < 0 || r >= av.rows()) throw ContractError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(e)) = av.row(r);
  }
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, idx](Tape &t, int self) {
    if (!t.requires_grad(a.id)) return;
    Matrix &ga = t.grad_ref(a.id);
    const Matrix &g = t.grad(self);
    for (std::size_t e = 0; e < idx->size(); ++e)
      ga.row((*idx)[e]) += g.row(static_cast<Eigen::Index>(e));
  });
}

// out[idx[e]] += a[e], out has n_out rows.
inline Var scatter_add_rows(Var a, const Index &idx, Eigen::Index n_out) {
  if (static_cast<Eigen::Index>(idx->size()) != a.rows())
    throw ContractError("scatter_add_rows: index length mismatch");
  Matrix out = Matrix::Zero(n_out, a.cols());
  const Matrix &av = a.value();
  for (std::size_t e = 0; e < idx->size(); ++e) {
    int r = (*idx)[e];
    if (r < 0 || r >= n_out) throw ContractError("scatter_add_rows: index out of range");
    out.row(r) += av.row(static_cast<Eigen::Index>(e));
  }
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, idx](Tape &t, int self) {
    if (!t.requires_grad(a.id)) return;
    Matrix &ga = t.grad_ref(a.id);
    const Matrix &g = t.grad(self);
    for (std::size_t e = 0; e < idx->size(); ++e)
      ga.row(static_cast<Eigen::Index>(e)) += g.row((*idx)[e]);
  });
}

// Row-wise sum over columns: (n x m) -> (n x 1).
inline Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape->push(std::move(out), detail::any_grad({a}), [a](Tape &t, int self) {
    if (t.requires_grad(a.id))
      t.grad_ref(a.id).colwise() += t.grad(self).col(0);
  });
}

// (n x 1) -> (n x m) by repeating the column.
inline Var repeat_cols(Var c, Eigen::Index m) {
  if (c.cols() != 1) throw ContractError("repeat_cols: expected a column");
  Matrix out = c.value().replicate(1, m);
  return c.tape->push(std::move(out), detail::any_grad({c}), [c](Tape &t, int self) {
    if (t.requires_grad(c.id)) t.grad_ref(c.id).col(0) += t.grad(self).rowwise().sum();
  });
}

inline Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), detail::any_grad({a}), [a](Tape &t, int self) {
    if (t.requires_grad(a.id)) t.grad_ref(a.id).array() += t.grad(self)(0, 0);
  });
}

inline Var mean(Var a) {
  if (a.value().size() == 0) throw ContractError("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// Subtracts from every row the mean of the rows sharing its segment id.
inline Var center_segments(Var a, const Index &segment, int n_segments) {
  const Matrix &av = a.value();
  if (static_cast<Eigen::Index>(segment->size()) != av.rows())
    throw ContractError("center_segments: segment length mismatch");
  std::vector<double> counts(n_segments, 0.0);
  for (int s : *segment) counts[s] += 1.0;
  Matrix means = Matrix::Zero(n_segments, av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) means.row((*segment)[r]) += av.row(r);
  for (int s = 0; s < n_segments; ++s)
    if (counts[s] > 0) means.row(s) /= counts[s];
  Matrix out = av;
  for (Eigen::Index r = 0; r < av.rows(); ++r) out.row(r) -= means.row((*segment)[r]);
  return a.tape->push(std::move(out), detail::any_grad({a}),
                      [a, segment, counts, n_segments](Tape &t, int self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix &g = t.grad(self);
    Matrix gmean = Matrix::Zero(n_segments, g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) gmean.row((*segment)[r]) += g.row(r);
    for (int s = 0; s < n_segments; ++s)
      if (counts[s] > 0) gmean.row(s) /= counts[s];
    Matrix &ga = t.grad_ref(a.id);
    for (Eigen::Index r = 0; r < g.rows(); ++r) ga.row(r) += g.row(r) - gmean.row((*segment)[r]);
  });
}

// Row-wise log-softmax.
inline Var log_softmax(Var a) {
  const Matrix &av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    double m = av.row(r).maxCoeff();
    double lse = m + std::log((av.row(r).array() - m).exp().sum());
    out.row(r) = av.row(r).array() - lse;
  }
  return a.tape->push(std::move(out), detail::any_grad({a}), [a](Tape &t, int self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix &g = t.grad(self);
    const Matrix &y = t.value(self);
    Matrix &ga = t.grad_ref(a.id);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double gs = g.row(r).sum();
      ga.row(r).array() += g.row(r).array() - y.row(r).array().exp() * gs;
    }
  });
}

// out[r] = a[r, cols[r]] as an (n x 1) column.
inline Var pick(Var a, const Index &cols) {
  const Matrix &av = a.value();
  if (static_cast<Eigen::Index>(cols->size()) != av.rows())
    throw ContractError("pick: label count mismatch");
  Matrix out(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) out(r, 0) = av(r, (*cols)[r]);
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, cols](Tape &t, int self) {
    if (!t.requires_grad(a.id)) return;
    Matrix &ga = t.grad_ref(a.id);
    const Matrix &g = t.grad(self);
    for (Eigen::Index r = 0; r < g.rows(); ++r) ga(r, (*cols)[r]) += g(r, 0);
  });
}

} // namespace lmdm::ad
