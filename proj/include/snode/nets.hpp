#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "snode/params.hpp"

namespace snode {

enum class Act { Tanh, Softplus };

// Feedforward network y = W_L act(... act(W_0 x + b_0) ...) + b_L.
// Parameters live under "<name>.W<k>" / "<name>.b<k>".
struct MlpSpec {
  std::string name;
  std::vector<int> widths;  // first = input dim, last = output dim
  Act act = Act::Tanh;
  bool final_linear = true;
  void validate() const;
};

void init_mlp(const MlpSpec& spec, ParamMap& params, std::mt19937_64& rng);

// Input convex scalar network. The pass-through weights are stored raw and
// mapped through softplus, so the effective weights are nonnegative for any
// parameter values and the realized function stays convex.
//   z_1 = act(W_0 x + b_0)
//   z_k = act(softplus(U_k) z_{k-1} + W_k x + b_k)
// with the last width equal to 1. act is softplus by default; relu_smooth
// with width d is available as an alternative convex activation.
struct IcnnSpec {
  std::string name;
  std::vector<int> widths;
  double d = 0.1;
  bool relu_smooth_act = false;
  void validate() const;
};

void init_icnn(const IcnnSpec& spec, ParamMap& params, std::mt19937_64& rng);

enum class LyapMode { Single, SigmoidBlend, Product };

// Candidate Lyapunov construction. Each attractor contributes
//   V_i(x) = relu_smooth(g_i(x - x*_i) - g_i(0); d) + delta |x - x*_i|^2
// which is zero exactly at x*_i and strictly positive elsewhere. Modes:
//   Single       V = V_0
//   SigmoidBlend V = sigma V_0 + (1 - sigma) V_1, two attractors,
//                sigma = sigmoid(gamma (|x - x*_1|^2 - |x - x*_0|^2))
//   Product      V = prod_i V_i
// `attractors` are output-space points z*_i; the matching latent points are
// supplied per evaluation (they move with the output map during training).
struct LyapunovSpec {
  LyapMode mode = LyapMode::Single;
  std::vector<Vec> attractors;
  std::vector<IcnnSpec> icnns;  // one per attractor
  double gamma = 70.0;
  double delta = 1e-3;
  double d = 0.1;  // wrapper smoothing width
  void validate() const;
};

void init_lyapunov(const LyapunovSpec& spec, ParamMap& params,
                   std::mt19937_64& rng);

// Stack of invertible coupling layers on n >= 2 coordinates. Layer k keeps
// floor(n/2) coordinates fixed and rescales/translates the other ceil(n/2)
// as a function of them; the fixed block alternates between the front and
// the back of the vector. s/t nets are MLPs under "<name>.l<k>.s" / ".t".
struct CouplingStackSpec {
  std::string name;
  int dim = 2;
  int layers = 3;
  std::vector<int> hidden;  // hidden widths of each s/t net
  Act act = Act::Tanh;
  void validate() const;
  MlpSpec s_net(int layer) const;
  MlpSpec t_net(int layer) const;
};

void init_coupling(const CouplingStackSpec& spec, ParamMap& params,
                   std::mt19937_64& rng);

namespace detail {
template <class B>
typename B::value_type apply_act(Act act, const typename B::value_type& x) {
  return act == Act::Tanh ? tanh_(x) : softplus(x);
}
}  // namespace detail

template <class B>
typename B::value_type mlp_forward(const MlpSpec& spec, B& binder,
                                   const typename B::value_type& x) {
  spec.validate();
  using T = typename B::value_type;
  int nlayers = static_cast<int>(spec.widths.size()) - 1;
  T h = x;
  for (int k = 0; k < nlayers; ++k) {
    T w = binder(spec.name + ".W" + std::to_string(k));
    T b = binder(spec.name + ".b" + std::to_string(k));
    h = add(matmul(w, h), b);
    if (k + 1 < nlayers || !spec.final_linear)
      h = detail::apply_act<B>(spec.act, h);
  }
  return h;
}

template <class B>
typename B::value_type icnn_value(const IcnnSpec& spec, B& binder,
                                  const typename B::value_type& x) {
  spec.validate();
  using T = typename B::value_type;
  auto act = [&](const T& v) {
    return spec.relu_smooth_act ? relu_smooth(v, spec.d) : softplus(v);
  };
  int nlayers = static_cast<int>(spec.widths.size()) - 1;
  T w0 = binder(spec.name + ".W0");
  T b0 = binder(spec.name + ".b0");
  T z = act(add(matmul(w0, x), b0));
  for (int k = 1; k < nlayers; ++k) {
    T u = binder(spec.name + ".U" + std::to_string(k));
    T w = binder(spec.name + ".W" + std::to_string(k));
    T b = binder(spec.name + ".b" + std::to_string(k));
    z = act(add(add(matmul(softplus(u), z), matmul(w, x)), b));
  }
  return z;  // 1x1
}

// One positive-definite term of the Lyapunov candidate; x and the latent
// attractor are both graph values.
template <class B>
typename B::value_type lyapunov_term(const LyapunovSpec& spec, int i,
                                     B& binder,
                                     const typename B::value_type& x,
                                     const typename B::value_type& x_star) {
  using T = typename B::value_type;
  T off = sub(x, x_star);
  T g = icnn_value(spec.icnns[i], binder, off);
  T zero_in = binder.constant(Mat::Zero(spec.icnns[i].widths.front(), 1));
  T g0 = icnn_value(spec.icnns[i], binder, zero_in);
  T hinge = relu_smooth(sub(g, g0), spec.d);
  return add(hinge, scale(sumsq(off), spec.delta));
}

template <class B>
typename B::value_type lyapunov_value(
    const LyapunovSpec& spec, B& binder, const typename B::value_type& x,
    const std::vector<typename B::value_type>& latent_attractors) {
  spec.validate();
  using T = typename B::value_type;
  if (latent_attractors.size() != spec.attractors.size())
    throw std::invalid_argument(
        "lyapunov_value: latent attractor count mismatch");
  switch (spec.mode) {
    case LyapMode::Single:
      return lyapunov_term(spec, 0, binder, x, latent_attractors[0]);
    case LyapMode::SigmoidBlend: {
      T v0 = lyapunov_term(spec, 0, binder, x, latent_attractors[0]);
      T v1 = lyapunov_term(spec, 1, binder, x, latent_attractors[1]);
      T d0 = sumsq(sub(x, latent_attractors[0]));
      T d1 = sumsq(sub(x, latent_attractors[1]));
      T sig = sigmoid_(scale(sub(d1, d0), spec.gamma));
      T one = binder.constant(Mat::Ones(1, 1));
      return add(mul(sig, v0), mul(sub(one, sig), v1));
    }
    case LyapMode::Product: {
      T v = lyapunov_term(spec, 0, binder, x, latent_attractors[0]);
      for (std::size_t i = 1; i < latent_attractors.size(); ++i)
        v = mul(v, lyapunov_term(spec, static_cast<int>(i), binder, x,
                                 latent_attractors[i]));
      return v;
    }
  }
  throw std::invalid_argument("lyapunov_value: unknown mode");
}

// V and its gradient, the latter assembled coordinate by coordinate from
// forward-mode passes so it stays differentiable.
std::pair<Var, Var> lyapunov_value_and_grad(
    const LyapunovSpec& spec, VarBinder& binder, Var x,
    const std::vector<Var>& latent_attractors);

namespace detail {
struct CouplingBlocks {
  int passive0, passive_n, active0, active_n;
};
CouplingBlocks coupling_blocks(int dim, int layer);
}  // namespace detail

template <class B>
typename B::value_type coupling_forward(const CouplingStackSpec& spec,
                                        B& binder,
                                        const typename B::value_type& x) {
  spec.validate();
  using T = typename B::value_type;
  T h = x;
  for (int k = 0; k < spec.layers; ++k) {
    auto blk = detail::coupling_blocks(spec.dim, k);
    T pa = split(h, blk.passive0, blk.passive_n);
    T ab = split(h, blk.active0, blk.active_n);
    T s = mlp_forward(spec.s_net(k), binder, pa);
    T t = mlp_forward(spec.t_net(k), binder, pa);
    T zb = add(mul(ab, exp_(s)), t);
    h = blk.passive0 == 0 ? concat(pa, zb) : concat(zb, pa);
  }
  return h;
}

template <class B>
typename B::value_type coupling_inverse(const CouplingStackSpec& spec,
                                        B& binder,
                                        const typename B::value_type& z) {
  spec.validate();
  using T = typename B::value_type;
  T h = z;
  for (int k = spec.layers - 1; k >= 0; --k) {
    auto blk = detail::coupling_blocks(spec.dim, k);
    T pa = split(h, blk.passive0, blk.passive_n);
    T zb = split(h, blk.active0, blk.active_n);
    T s = mlp_forward(spec.s_net(k), binder, pa);
    T t = mlp_forward(spec.t_net(k), binder, pa);
    T xb = mul(sub(zb, t), exp_(neg(s)));
    h = blk.passive0 == 0 ? concat(pa, xb) : concat(xb, pa);
  }
  return h;
}

}  // namespace snode
