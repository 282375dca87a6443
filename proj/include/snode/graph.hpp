#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace snode {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Recorded primitive kinds. Column vectors are n-by-1 matrices.
enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,  // elementwise; a 1x1 operand broadcasts
  Matmul,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Softplus,
  Square,
  Sqrt,
  Sum,
  Mean,
  MinOverAxis,
  Concat,
  Split,
  Scale,
  Neg,
  ReluSmooth,
  ReluSmoothDeriv,
};

const char* op_name(Op op);

class Graph;

// Handle into a graph. A default-constructed Var is detached.
struct Var {
  Graph* graph = nullptr;
  int id = -1;
  bool attached() const { return graph != nullptr && id >= 0; }
};

struct Node {
  Op op = Op::Leaf;
  int a = -1;
  int b = -1;
  Mat value;
  double c = 0.0;  // scale factor or smoothing width
  int row0 = 0;    // split block start
  int nrows = 0;   // split block rows
  int argmin = -1; // first minimal index for MinOverAxis
};

using GradMap = std::map<std::string, Mat>;

// Append-only tape of primitive evaluations. Node inputs always reference
// earlier entries, so a single reverse sweep accumulates all adjoints.
class Graph {
 public:
  Var constant(Mat value);
  Var param(const std::string& name, Mat value);

  const Mat& value(Var v) const;
  double scalar(Var v) const;
  Mat::Index rows(Var v) const { return value(v).rows(); }
  Mat::Index cols(Var v) const { return value(v).cols(); }
  std::size_t size() const { return nodes_.size(); }

  // Reverse accumulation from a scalar root. Returns the gradient for every
  // named parameter. A second call without clear_grads() is an error.
  GradMap backward(Var root);
  const Mat& grad(Var v) const;
  bool has_grad(Var v) const;
  void clear_grads();

  // Re-executes every recorded primitive from the leaf values.
  std::vector<Mat> replay() const;

  const std::vector<std::pair<std::string, int>>& param_nodes() const {
    return params_;
  }
  const Node& node(int id) const { return nodes_[id]; }

  Var emit(Op op, Var a, Var b, double c = 0.0, int row0 = 0, int nrows = 0);

 private:
  int check(Var v) const;
  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::vector<std::pair<std::string, int>> params_;
  bool grads_valid_ = false;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
Var exp_(Var a);
Var log_(Var a);
Var tanh_(Var a);
Var sigmoid_(Var a);
Var softplus(Var a);
Var square(Var a);
Var sqrt_(Var a);
Var sum(Var a);
Var mean(Var a);
Var min_over_axis(Var a);
Var concat(Var a, Var b);
Var split(Var a, int row0, int nrows);
Var scale(Var a, double c);
Var neg(Var a);
Var relu_smooth(Var a, double d);
Var relu_smooth_deriv(Var a, double d);

// Composites built from the primitives above.
Var dot(Var a, Var b);    // sum(a .* b)
Var sumsq(Var a);         // sum(a .* a)
Var recip(Var a);         // exp(-log(a)), elementwise, a > 0

}  // namespace snode
