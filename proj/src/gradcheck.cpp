#include "snode/gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace snode {

GradCheckReport grad_check(const std::function<Var(Graph&, Var)>& fn,
                           const Mat& x, double step, double tol) {
  if (step <= 0 || tol <= 0)
    throw std::invalid_argument("grad_check: step and tol must be > 0");

  GradCheckReport rep;

  auto eval = [&](const Mat& xv) {
    Graph g;
    Var xp = g.param("x", xv);
    Var out = fn(g, xp);
    return std::make_pair(g.scalar(out), xp);
  };

  Graph g;
  Var xp = g.param("x", x);
  Var root = fn(g, xp);
  double f0 = g.scalar(root);
  if (!std::isfinite(f0)) {
    rep.failure = "non-finite value at base point";
    return rep;
  }
  GradMap grads = g.backward(root);
  const Mat& gx = grads.at("x");

  for (Mat::Index j = 0; j < x.cols(); ++j) {
    for (Mat::Index i = 0; i < x.rows(); ++i) {
      Mat xp_ = x, xm_ = x;
      xp_(i, j) += step;
      xm_(i, j) -= step;
      double fp = eval(xp_).first;
      double fm = eval(xm_).first;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        std::ostringstream os;
        os << "non-finite value perturbing component (" << i << "," << j << ")";
        rep.failure = os.str();
        return rep;
      }
      double fd = (fp - fm) / (2.0 * step);
      double denom = std::max(std::abs(fd), std::abs(gx(i, j)));
      denom = std::max(denom, 1e-10);
      double rel = std::abs(fd - gx(i, j)) / denom;
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
    }
  }
  rep.pass = rep.max_rel_error <= tol;
  return rep;
}

}  // namespace snode
