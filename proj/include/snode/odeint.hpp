#pragma once

#include <functional>
#include <string>
#include <vector>

#include "snode/graph.hpp"
#include "snode/params.hpp"

namespace snode {

enum class Method { Euler, RK4, Dopri5 };

struct SolverConfig {
  Method method = Method::Dopri5;
  double dt = 0.01;            // fixed-step methods
  double rtol = 1e-6;
  double atol = 1e-8;
  int max_steps = 10000;
  double t0 = 0.0;
  std::vector<double> sample_times;  // strictly increasing, first >= t0
  void validate() const;
};

// Differentiable integration: the field builds tape primitives, the whole
// rollout is one graph.
using FieldFn = std::function<Var(Var)>;

std::vector<Var> integrate_fixed(const FieldFn& field, Var x0,
                                 const SolverConfig& config);
std::vector<Var> integrate_dopri5(const FieldFn& field, Var x0,
                                  const SolverConfig& config);
std::vector<Var> integrate(const FieldFn& field, Var x0,
                           const SolverConfig& config);

// Detached numeric integration over plain vectors.
using NumField = std::function<Vec(const Vec&)>;

std::vector<Vec> integrate_fixed_num(const NumField& field, const Vec& x0,
                                     const SolverConfig& config);
std::vector<Vec> integrate_dopri5_num(const NumField& field, const Vec& x0,
                                      const SolverConfig& config);
std::vector<Vec> integrate_num(const NumField& field, const Vec& x0,
                               const SolverConfig& config);

// Loss over trajectory samples, differentiated by the caller: the value,
// the per-sample gradients and any parameter gradients picked up inside the
// loss graph (e.g. through an output map).
struct SampleLoss {
  double value = 0.0;
  std::vector<Vec> dsample;
  GradMap dparams;
};
using SampleLossFn = std::function<SampleLoss(const std::vector<Vec>&)>;

// Vector-Jacobian products of the field: given (x, a), the gradient of
// a . f(x) with respect to x and with respect to the parameters.
struct FieldVjp {
  Vec dx;
  GradMap dtheta;
};
using FieldVjpFn = std::function<FieldVjp(const Vec& x, const Vec& a)>;

struct AdjointResult {
  double loss = 0.0;
  GradMap grads;  // field parameter grads plus loss-graph parameter grads
  Vec dx0;        // gradient with respect to the initial state
};

// Continuous adjoint: state ODE forward, adjoint ODE backward with loss
// jumps at each sample time. Parameter gradients accumulate through
// vector-Jacobian products along the backward pass.
AdjointResult adjoint_gradients(const NumField& field, const FieldVjpFn& vjp,
                                const ParamMap& field_params, const Vec& x0,
                                const SampleLossFn& loss,
                                const SolverConfig& config);

}  // namespace snode
