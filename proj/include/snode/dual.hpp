#pragma once

#include <optional>
#include <stdexcept>
#include <utility>

#include "snode/graph.hpp"

namespace snode {

// Forward-mode value: primal Var plus an optional tangent Var. A missing
// tangent means an exact structural zero. Every tangent is built from tape
// primitives, so directional derivatives remain differentiable by backward().
struct Dual {
  Var v;
  std::optional<Var> t;
};

inline Dual dual_const(Var v) { return Dual{v, std::nullopt}; }

namespace detail {
inline std::optional<Var> tan_add(const std::optional<Var>& a,
                                  const std::optional<Var>& b) {
  if (a && b) return add(*a, *b);
  if (a) return a;
  return b;
}
}  // namespace detail

inline Dual add(const Dual& a, const Dual& b) {
  return {add(a.v, b.v), detail::tan_add(a.t, b.t)};
}

inline Dual sub(const Dual& a, const Dual& b) {
  std::optional<Var> t;
  if (a.t && b.t)
    t = sub(*a.t, *b.t);
  else if (a.t)
    t = *a.t;
  else if (b.t)
    t = neg(*b.t);
  return {sub(a.v, b.v), t};
}

inline Dual mul(const Dual& a, const Dual& b) {
  std::optional<Var> ta, tb;
  if (a.t) ta = mul(*a.t, b.v);
  if (b.t) tb = mul(a.v, *b.t);
  return {mul(a.v, b.v), detail::tan_add(ta, tb)};
}

inline Dual matmul(const Dual& a, const Dual& b) {
  std::optional<Var> ta, tb;
  if (a.t) ta = matmul(*a.t, b.v);
  if (b.t) tb = matmul(a.v, *b.t);
  return {matmul(a.v, b.v), detail::tan_add(ta, tb)};
}

inline Dual exp_(const Dual& a) {
  Var y = exp_(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, mul(y, *a.t)};
}

inline Dual log_(const Dual& a) {
  Var y = log_(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, mul(recip(a.v), *a.t)};
}

inline Dual tanh_(const Dual& a) {
  Var y = tanh_(a.v);
  if (!a.t) return {y, std::nullopt};
  Var one = a.v.graph->constant(
      Mat::Ones(a.v.graph->rows(y), a.v.graph->cols(y)));
  return {y, mul(sub(one, square(y)), *a.t)};
}

inline Dual sigmoid_(const Dual& a) {
  Var y = sigmoid_(a.v);
  if (!a.t) return {y, std::nullopt};
  Var one = a.v.graph->constant(
      Mat::Ones(a.v.graph->rows(y), a.v.graph->cols(y)));
  return {y, mul(mul(y, sub(one, y)), *a.t)};
}

inline Dual softplus(const Dual& a) {
  Var y = softplus(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, mul(sigmoid_(a.v), *a.t)};
}

inline Dual square(const Dual& a) {
  Var y = square(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, scale(mul(a.v, *a.t), 2.0)};
}

inline Dual sum(const Dual& a) {
  Var y = sum(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, sum(*a.t)};
}

inline Dual mean(const Dual& a) {
  Var y = mean(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, mean(*a.t)};
}

inline Dual concat(const Dual& a, const Dual& b) {
  Var y = concat(a.v, b.v);
  if (!a.t && !b.t) return {y, std::nullopt};
  Graph* g = a.v.graph;
  Var ta = a.t ? *a.t
               : g->constant(Mat::Zero(g->rows(a.v), g->cols(a.v)));
  Var tb = b.t ? *b.t
               : g->constant(Mat::Zero(g->rows(b.v), g->cols(b.v)));
  return {y, concat(ta, tb)};
}

inline Dual split(const Dual& a, int row0, int nrows) {
  Var y = split(a.v, row0, nrows);
  if (!a.t) return {y, std::nullopt};
  return {y, split(*a.t, row0, nrows)};
}

inline Dual scale(const Dual& a, double c) {
  Var y = scale(a.v, c);
  if (!a.t) return {y, std::nullopt};
  return {y, scale(*a.t, c)};
}

inline Dual neg(const Dual& a) {
  Var y = neg(a.v);
  if (!a.t) return {y, std::nullopt};
  return {y, neg(*a.t)};
}

inline Dual relu_smooth(const Dual& a, double d) {
  Var y = relu_smooth(a.v, d);
  if (!a.t) return {y, std::nullopt};
  return {y, mul(relu_smooth_deriv(a.v, d), *a.t)};
}

inline Dual dot(const Dual& a, const Dual& b) { return sum(mul(a, b)); }
inline Dual sumsq(const Dual& a) { return sum(square(a)); }

// Directional derivative D fn(x)[v], built entirely from primitives so the
// result can feed another backward pass.
template <class F>
Var jvp(F&& fn, Var x, const Mat& v) {
  Graph* g = x.graph;
  if (g == nullptr) throw std::invalid_argument("jvp input must be attached");
  if (v.rows() != g->rows(x) || v.cols() != g->cols(x))
    throw std::invalid_argument("jvp direction shape mismatch");
  Dual dx{x, g->constant(v)};
  Dual out = fn(dx);
  if (out.t) return *out.t;
  return g->constant(Mat::Zero(g->rows(out.v), g->cols(out.v)));
}

}  // namespace snode
