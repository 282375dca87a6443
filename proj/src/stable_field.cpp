#include "snode/stable_field.hpp"

#include <stdexcept>

namespace snode {

void CorrectiveParams::validate() const {
  if (alpha <= 0 || epsilon <= 0 || s <= 0)
    throw std::invalid_argument(
        "CorrectiveParams: alpha, epsilon, s must all be > 0");
}

void StableNodeModel::validate() const {
  if (n_x < 1 || n_z < 1)
    throw std::invalid_argument("StableNodeModel: dimensions must be >= 1");
  corrective.validate();
  f.validate();
  lyap.validate();
  if (f.widths.front() != n_x || f.widths.back() != n_x)
    throw std::invalid_argument("StableNodeModel: f must map n_x -> n_x");
  if (psi) {
    psi->validate();
    if (psi->dim != n_x || n_x != n_z)
      throw std::invalid_argument(
          "StableNodeModel: coupling psi requires n_x == n_z == psi.dim");
  } else if (n_x != n_z) {
    throw std::invalid_argument(
        "StableNodeModel: identity psi requires n_x == n_z");
  }
  if (phi && phi->widths.back() != n_x)
    throw std::invalid_argument("StableNodeModel: phi must end at n_x");
  for (const Vec& z : lyap.attractors)
    if (z.size() != n_z)
      throw std::invalid_argument("StableNodeModel: attractor dim != n_z");
}

std::vector<Var> latent_attractors(const StableNodeModel& model,
                                   VarBinder& binder) {
  std::vector<Var> out;
  out.reserve(model.lyap.attractors.size());
  for (const Vec& z : model.lyap.attractors) {
    Var zc = binder.constant(z);
    out.push_back(model.psi ? coupling_inverse(*model.psi, binder, zc) : zc);
  }
  return out;
}

FieldParts field_parts(const StableNodeModel& model, VarBinder& binder, Var x,
                       const std::vector<Var>& latent_attr) {
  const CorrectiveParams& cp = model.corrective;
  FieldParts p;
  p.f_nominal = mlp_forward(model.f, binder, x);
  auto [V, gV] = lyapunov_value_and_grad(model.lyap, binder, x, latent_attr);
  p.V = V;
  p.grad_V = gV;
  p.L = add(dot(p.grad_V, p.f_nominal), scale(p.V, cp.alpha));

  double lval = binder.g.scalar(p.L);
  if (lval <= 0.0) {
    p.u = binder.constant(Mat::Zero(binder.g.rows(x), 1));
  } else {
    Var denom = add(sumsq(p.grad_V),
                    binder.constant(Mat::Constant(1, 1, cp.epsilon)));
    Var inv = recip(denom);
    Var numer =
        lval < 1.0 / cp.s
            ? add(mul(p.L, p.grad_V),
                  scale(mul(p.L, p.f_nominal), cp.epsilon * cp.s))
            : add(mul(p.L, p.grad_V), scale(p.f_nominal, cp.epsilon));
    p.u = neg(mul(inv, numer));
  }
  p.f_hat = add(p.f_nominal, p.u);
  return p;
}

Var l_value(const StableNodeModel& model, VarBinder& binder, Var x,
            const std::vector<Var>& latent_attr) {
  return field_parts(model, binder, x, latent_attr).L;
}

Var corrective(const StableNodeModel& model, VarBinder& binder, Var x,
               const std::vector<Var>& latent_attr) {
  return field_parts(model, binder, x, latent_attr).u;
}

Var f_hat(const StableNodeModel& model, VarBinder& binder, Var x,
          const std::vector<Var>& latent_attr) {
  return field_parts(model, binder, x, latent_attr).f_hat;
}

FieldEvaluator::FieldEvaluator(const StableNodeModel& model) : model_(model) {
  Graph g;
  VarBinder b{g, model.params};
  for (Var v : latent_attractors(model, b)) latent_.push_back(g.value(v));
}

Vec FieldEvaluator::f_hat(const Vec& x) const {
  Graph g;
  VarBinder b{g, model_.params};
  std::vector<Var> lat;
  for (const Vec& v : latent_) lat.push_back(b.constant(v));
  FieldParts p = field_parts(model_, b, b.constant(x), lat);
  return g.value(p.f_hat);
}

double FieldEvaluator::lyapunov(const Vec& x) const {
  Graph g;
  VarBinder b{g, model_.params};
  std::vector<Var> lat;
  for (const Vec& v : latent_) lat.push_back(b.constant(v));
  DualBinder db{b};
  std::vector<Dual> latd;
  for (Var v : lat) latd.push_back(dual_const(v));
  Dual vv = lyapunov_value(model_.lyap, db, dual_const(b.constant(x)), latd);
  return g.scalar(vv.v);
}

double FieldEvaluator::l_value(const Vec& x) const {
  Graph g;
  VarBinder b{g, model_.params};
  std::vector<Var> lat;
  for (const Vec& v : latent_) lat.push_back(b.constant(v));
  FieldParts p = field_parts(model_, b, b.constant(x), lat);
  return g.scalar(p.L);
}

Vec FieldEvaluator::output(const Vec& x) const {
  if (!model_.psi) return x;
  Graph g;
  VarBinder b{g, model_.params};
  return g.value(coupling_forward(*model_.psi, b, b.constant(x)));
}

Vec FieldEvaluator::latent_of_output(const Vec& z) const {
  if (!model_.psi) return z;
  Graph g;
  VarBinder b{g, model_.params};
  return g.value(coupling_inverse(*model_.psi, b, b.constant(z)));
}

}  // namespace snode
