#pragma once

#include <optional>
#include <vector>

#include "snode/nets.hpp"
#include "snode/params.hpp"

namespace snode {

// Constants of the corrective term: decay rate alpha, regularizer epsilon,
// branch threshold scale s.
struct CorrectiveParams {
  double alpha = 1e-3;
  double epsilon = 1e-5;
  double s = 20.0;
  void validate() const;
};

// Full stabilized latent model: input map phi (identity when absent),
// nominal field f, Lyapunov candidate, output diffeomorphism psi (identity
// when absent), corrective constants and output-space attractors (stored in
// the LyapunovSpec).
struct StableNodeModel {
  int n_x = 0;
  int n_z = 0;
  std::optional<MlpSpec> phi;
  MlpSpec f;
  LyapunovSpec lyap;
  std::optional<CouplingStackSpec> psi;
  CorrectiveParams corrective;
  ParamMap params;
  void validate() const;
};

// X_e = psi^{-1}(z*) for every output attractor, recomputed from the
// current psi parameters so gradients flow into the output map.
std::vector<Var> latent_attractors(const StableNodeModel& model,
                                   VarBinder& binder);

struct FieldParts {
  Var f_nominal;
  Var V;
  Var grad_V;
  Var L;      // grad_V . f + alpha V
  Var u;      // corrective term
  Var f_hat;  // f + u
};

// Builds the stabilized field at x. Branch selection reads the value of the
// same L node used inside the branch formulas.
FieldParts field_parts(const StableNodeModel& model, VarBinder& binder, Var x,
                       const std::vector<Var>& latent_attr);

Var l_value(const StableNodeModel& model, VarBinder& binder, Var x,
            const std::vector<Var>& latent_attr);
Var corrective(const StableNodeModel& model, VarBinder& binder, Var x,
               const std::vector<Var>& latent_attr);
Var f_hat(const StableNodeModel& model, VarBinder& binder, Var x,
          const std::vector<Var>& latent_attr);

// Detached evaluation over frozen parameters; latent attractors are cached
// once. Each call runs on a scratch graph.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const StableNodeModel& model);

  Vec f_hat(const Vec& x) const;
  double lyapunov(const Vec& x) const;
  double l_value(const Vec& x) const;
  Vec output(const Vec& x) const;        // psi(x)
  Vec latent_of_output(const Vec& z) const;  // psi^{-1}(z)
  const std::vector<Vec>& attractors_latent() const { return latent_; }

 private:
  const StableNodeModel& model_;
  std::vector<Vec> latent_;
};

}  // namespace snode
