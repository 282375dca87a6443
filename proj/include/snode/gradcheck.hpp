#pragma once

#include <functional>
#include <string>

#include "snode/graph.hpp"

namespace snode {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::string failure;  // empty unless evaluation produced non-finite values
};

// Compares the backward-pass gradient of a scalar-valued graph function
// against central finite differences, component by component. The relative
// error denominator has an absolute floor of 1e-10.
GradCheckReport grad_check(const std::function<Var(Graph&, Var)>& fn,
                           const Mat& x, double step, double tol);

}  // namespace snode
