#include "snode/graph.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace snode {

namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_error(Op op, const Mat& a, const Mat* b) {
  std::ostringstream os;
  os << "shape mismatch in " << op_name(op) << ": " << shape_str(a);
  if (b != nullptr) os << " vs " << shape_str(*b);
  throw std::invalid_argument(os.str());
}

double softplus_s(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

double sigmoid_s(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double relu_smooth_s(double y, double d) {
  if (y <= 0) return 0.0;
  if (y < d) return y * y / (2.0 * d);
  return y - d / 2.0;
}

double relu_smooth_d1(double y, double d) {
  if (y <= 0) return 0.0;
  if (y < d) return y / d;
  return 1.0;
}

double relu_smooth_d2(double y, double d) {
  return (y > 0 && y < d) ? 1.0 / d : 0.0;
}

bool same_shape(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

bool is_scalar(const Mat& a) { return a.rows() == 1 && a.cols() == 1; }

// Forward evaluation of one primitive; shared by emit() and replay().
Mat compute(Op op, const Mat& a, const Mat* b, double c, int row0, int nrows,
            int* argmin) {
  switch (op) {
    case Op::Leaf:
      return a;
    case Op::Add:
      if (!same_shape(a, *b)) shape_error(op, a, b);
      return a + *b;
    case Op::Sub:
      if (!same_shape(a, *b)) shape_error(op, a, b);
      return a - *b;
    case Op::Mul:
      if (is_scalar(a)) return (a(0, 0) * b->array()).matrix();
      if (is_scalar(*b)) return ((*b)(0, 0) * a.array()).matrix();
      if (!same_shape(a, *b)) shape_error(op, a, b);
      return (a.array() * b->array()).matrix();
    case Op::Matmul:
      if (a.cols() != b->rows()) shape_error(op, a, b);
      return a * *b;
    case Op::Exp:
      return a.array().exp().matrix();
    case Op::Log:
      return a.array().log().matrix();
    case Op::Tanh:
      return a.array().tanh().matrix();
    case Op::Sigmoid:
      return a.unaryExpr([](double x) { return sigmoid_s(x); });
    case Op::Softplus:
      return a.unaryExpr([](double x) { return softplus_s(x); });
    case Op::Square:
      return a.array().square().matrix();
    case Op::Sqrt:
      return a.array().sqrt().matrix();
    case Op::Sum:
      return Mat::Constant(1, 1, a.sum());
    case Op::Mean:
      return Mat::Constant(1, 1, a.mean());
    case Op::MinOverAxis: {
      if (a.cols() != 1 || a.rows() < 1) shape_error(op, a, nullptr);
      int idx = 0;
      double best = a(0, 0);
      for (int i = 1; i < a.rows(); ++i) {
        if (a(i, 0) < best) {
          best = a(i, 0);
          idx = i;
        }
      }
      if (argmin != nullptr) *argmin = idx;
      return Mat::Constant(1, 1, best);
    }
    case Op::Concat:
      if (a.cols() != b->cols()) shape_error(op, a, b);
      {
        Mat out(a.rows() + b->rows(), a.cols());
        out.topRows(a.rows()) = a;
        out.bottomRows(b->rows()) = *b;
        return out;
      }
    case Op::Split:
      if (row0 < 0 || nrows <= 0 || row0 + nrows > a.rows())
        shape_error(op, a, nullptr);
      return a.middleRows(row0, nrows);
    case Op::Scale:
      return c * a;
    case Op::Neg:
      return -a;
    case Op::ReluSmooth:
      return a.unaryExpr([c](double x) { return relu_smooth_s(x, c); });
    case Op::ReluSmoothDeriv:
      return a.unaryExpr([c](double x) { return relu_smooth_d1(x, c); });
  }
  throw std::invalid_argument("unknown primitive kind");
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Matmul: return "matmul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::MinOverAxis: return "min_over_axis";
    case Op::Concat: return "concat";
    case Op::Split: return "split";
    case Op::Scale: return "scale";
    case Op::Neg: return "neg";
    case Op::ReluSmooth: return "relu_smooth";
    case Op::ReluSmoothDeriv: return "relu_smooth_deriv";
  }
  return "?";
}

int Graph::check(Var v) const {
  if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Var does not belong to this graph");
  return v.id;
}

Var Graph::constant(Mat value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const std::string& name, Mat value) {
  for (const auto& [pname, id] : params_)
    if (pname == name)
      throw std::invalid_argument("parameter already bound: " + name);
  Var v = constant(std::move(value));
  params_.emplace_back(name, v.id);
  return v;
}

const Mat& Graph::value(Var v) const { return nodes_[check(v)].value; }

double Graph::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.rows() != 1 || m.cols() != 1)
    throw std::invalid_argument("scalar() on non-scalar value");
  return m(0, 0);
}

Var Graph::emit(Op op, Var a, Var b, double c, int row0, int nrows) {
  Node n;
  n.op = op;
  n.a = check(a);
  const Mat* bm = nullptr;
  if (b.graph != nullptr) {
    n.b = check(b);
    bm = &nodes_[n.b].value;
  }
  n.c = c;
  n.row0 = row0;
  n.nrows = nrows;
  n.value = compute(op, nodes_[n.a].value, bm, c, row0, nrows, &n.argmin);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<Mat> Graph::replay() const {
  std::vector<Mat> vals;
  vals.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) {
      vals.push_back(n.value);
      continue;
    }
    const Mat* bm = (n.b >= 0) ? &vals[n.b] : nullptr;
    vals.push_back(compute(n.op, vals[n.a], bm, n.c, n.row0, n.nrows, nullptr));
  }
  return vals;
}

GradMap Graph::backward(Var root) {
  int r = check(root);
  const Mat& rv = nodes_[r].value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw std::invalid_argument("backward root must be scalar");
  if (grads_valid_)
    throw std::logic_error("backward called twice without clear_grads");

  grads_.assign(nodes_.size(), Mat());
  grads_[r] = Mat::Constant(1, 1, 1.0);
  grads_valid_ = true;

  auto accum = [&](int id, const Mat& g) {
    if (grads_[id].size() == 0)
      grads_[id] = g;
    else
      grads_[id] += g;
  };

  for (int i = r; i >= 0; --i) {
    if (grads_[i].size() == 0) continue;
    const Node& n = nodes_[i];
    if (n.op == Op::Leaf) continue;
    const Mat& g = grads_[i];
    const Mat& av = nodes_[n.a].value;
    switch (n.op) {
      case Op::Add:
        accum(n.a, g);
        accum(n.b, g);
        break;
      case Op::Sub:
        accum(n.a, g);
        accum(n.b, -g);
        break;
      case Op::Mul: {
        const Mat& bv = nodes_[n.b].value;
        if (is_scalar(av) && !is_scalar(bv)) {
          accum(n.a, Mat::Constant(1, 1, (g.array() * bv.array()).sum()));
          accum(n.b, (av(0, 0) * g.array()).matrix());
        } else if (is_scalar(bv) && !is_scalar(av)) {
          accum(n.a, (bv(0, 0) * g.array()).matrix());
          accum(n.b, Mat::Constant(1, 1, (g.array() * av.array()).sum()));
        } else {
          accum(n.a, (g.array() * bv.array()).matrix());
          accum(n.b, (g.array() * av.array()).matrix());
        }
        break;
      }
      case Op::Matmul: {
        const Mat& bv = nodes_[n.b].value;
        accum(n.a, g * bv.transpose());
        accum(n.b, av.transpose() * g);
        break;
      }
      case Op::Exp:
        accum(n.a, (g.array() * n.value.array()).matrix());
        break;
      case Op::Log:
        accum(n.a, (g.array() / av.array()).matrix());
        break;
      case Op::Tanh:
        accum(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::Sigmoid:
        accum(n.a, (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
        break;
      case Op::Softplus:
        accum(n.a,
              (g.array() *
               av.unaryExpr([](double x) { return sigmoid_s(x); }).array())
                  .matrix());
        break;
      case Op::Square:
        accum(n.a, (2.0 * g.array() * av.array()).matrix());
        break;
      case Op::Sqrt:
        // subgradient 0 at the origin so coincident points stay finite
        accum(n.a, (n.value.array() > 0.0)
                       .select(g.array() / (2.0 * n.value.array()), 0.0)
                       .matrix());
        break;
      case Op::Sum:
        accum(n.a, Mat::Constant(av.rows(), av.cols(), g(0, 0)));
        break;
      case Op::Mean:
        accum(n.a, Mat::Constant(av.rows(), av.cols(),
                                 g(0, 0) / static_cast<double>(av.size())));
        break;
      case Op::MinOverAxis: {
        Mat ga = Mat::Zero(av.rows(), av.cols());
        ga(n.argmin, 0) = g(0, 0);
        accum(n.a, ga);
        break;
      }
      case Op::Concat: {
        const Mat& bv = nodes_[n.b].value;
        accum(n.a, g.topRows(av.rows()));
        accum(n.b, g.bottomRows(bv.rows()));
        break;
      }
      case Op::Split: {
        Mat ga = Mat::Zero(av.rows(), av.cols());
        ga.middleRows(n.row0, n.nrows) = g;
        accum(n.a, ga);
        break;
      }
      case Op::Scale:
        accum(n.a, n.c * g);
        break;
      case Op::Neg:
        accum(n.a, -g);
        break;
      case Op::ReluSmooth:
        accum(n.a, (g.array() *
                    av.unaryExpr([d = n.c](double x) {
                        return relu_smooth_d1(x, d);
                      }).array())
                       .matrix());
        break;
      case Op::ReluSmoothDeriv:
        accum(n.a, (g.array() *
                    av.unaryExpr([d = n.c](double x) {
                        return relu_smooth_d2(x, d);
                      }).array())
                       .matrix());
        break;
      case Op::Leaf:
        break;
    }
  }

  GradMap out;
  for (const auto& [name, id] : params_) {
    if (grads_[id].size() == 0)
      out[name] = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    else
      out[name] = grads_[id];
  }
  return out;
}

const Mat& Graph::grad(Var v) const {
  int id = check(v);
  if (!grads_valid_ || grads_[id].size() == 0)
    throw std::logic_error("no gradient recorded for this Var");
  return grads_[id];
}

bool Graph::has_grad(Var v) const {
  int id = check(v);
  return grads_valid_ && grads_[id].size() != 0;
}

void Graph::clear_grads() {
  grads_.clear();
  grads_valid_ = false;
}

namespace {
Graph* common_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw std::invalid_argument("operands must share a graph");
  return a.graph;
}
}  // namespace

Var add(Var a, Var b) { return common_graph(a, b)->emit(Op::Add, a, b); }
Var sub(Var a, Var b) { return common_graph(a, b)->emit(Op::Sub, a, b); }
Var mul(Var a, Var b) { return common_graph(a, b)->emit(Op::Mul, a, b); }
Var matmul(Var a, Var b) { return common_graph(a, b)->emit(Op::Matmul, a, b); }
Var exp_(Var a) { return a.graph->emit(Op::Exp, a, {}); }
Var log_(Var a) { return a.graph->emit(Op::Log, a, {}); }
Var tanh_(Var a) { return a.graph->emit(Op::Tanh, a, {}); }
Var sigmoid_(Var a) { return a.graph->emit(Op::Sigmoid, a, {}); }
Var softplus(Var a) { return a.graph->emit(Op::Softplus, a, {}); }
Var square(Var a) { return a.graph->emit(Op::Square, a, {}); }
Var sqrt_(Var a) { return a.graph->emit(Op::Sqrt, a, {}); }
Var sum(Var a) { return a.graph->emit(Op::Sum, a, {}); }
Var mean(Var a) { return a.graph->emit(Op::Mean, a, {}); }
Var min_over_axis(Var a) { return a.graph->emit(Op::MinOverAxis, a, {}); }
Var concat(Var a, Var b) { return common_graph(a, b)->emit(Op::Concat, a, b); }
Var split(Var a, int row0, int nrows) {
  return a.graph->emit(Op::Split, a, {}, 0.0, row0, nrows);
}
Var scale(Var a, double c) { return a.graph->emit(Op::Scale, a, {}, c); }
Var neg(Var a) { return a.graph->emit(Op::Neg, a, {}); }
Var relu_smooth(Var a, double d) {
  if (d <= 0) throw std::invalid_argument("relu_smooth width must be > 0");
  return a.graph->emit(Op::ReluSmooth, a, {}, d);
}
Var relu_smooth_deriv(Var a, double d) {
  if (d <= 0) throw std::invalid_argument("relu_smooth width must be > 0");
  return a.graph->emit(Op::ReluSmoothDeriv, a, {}, d);
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }
Var sumsq(Var a) { return sum(square(a)); }
Var recip(Var a) { return exp_(neg(log_(a))); }

}  // namespace snode
