#include "snode/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace snode {

namespace {

Mat xavier(int rows, int cols, std::mt19937_64& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Mat w(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) w(i, j) = dist(rng);
  return w;
}

}  // namespace

void MlpSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("MlpSpec: empty name");
  if (widths.size() < 2)
    throw std::invalid_argument("MlpSpec: need at least two widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
}

void init_mlp(const MlpSpec& spec, ParamMap& params, std::mt19937_64& rng) {
  spec.validate();
  for (std::size_t k = 0; k + 1 < spec.widths.size(); ++k) {
    params[spec.name + ".W" + std::to_string(k)] =
        xavier(spec.widths[k + 1], spec.widths[k], rng);
    params[spec.name + ".b" + std::to_string(k)] =
        Mat::Zero(spec.widths[k + 1], 1);
  }
}

void IcnnSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("IcnnSpec: empty name");
  if (widths.size() < 2)
    throw std::invalid_argument("IcnnSpec: need at least two widths");
  if (widths.back() != 1)
    throw std::invalid_argument("IcnnSpec: output width must be 1");
  if (d <= 0) throw std::invalid_argument("IcnnSpec: d must be > 0");
}

void init_icnn(const IcnnSpec& spec, ParamMap& params, std::mt19937_64& rng) {
  spec.validate();
  int nin = spec.widths.front();
  std::uniform_real_distribution<double> raw(-3.0, -1.0);
  for (std::size_t k = 0; k + 1 < spec.widths.size(); ++k) {
    int out = spec.widths[k + 1];
    params[spec.name + ".W" + std::to_string(k)] = xavier(out, nin, rng);
    params[spec.name + ".b" + std::to_string(k)] = Mat::Zero(out, 1);
    if (k > 0) {
      Mat u(out, spec.widths[k]);
      for (int j = 0; j < u.cols(); ++j)
        for (int i = 0; i < u.rows(); ++i) u(i, j) = raw(rng);
      params[spec.name + ".U" + std::to_string(k)] = u;
    }
  }
}

void LyapunovSpec::validate() const {
  if (attractors.empty())
    throw std::invalid_argument("LyapunovSpec: need at least one attractor");
  if (mode == LyapMode::Single && attractors.size() != 1)
    throw std::invalid_argument("LyapunovSpec: single mode needs 1 attractor");
  if (mode == LyapMode::SigmoidBlend && attractors.size() != 2)
    throw std::invalid_argument(
        "LyapunovSpec: sigmoid_blend mode needs exactly 2 attractors");
  if (icnns.size() != attractors.size())
    throw std::invalid_argument("LyapunovSpec: one ICNN per attractor");
  if (delta <= 0) throw std::invalid_argument("LyapunovSpec: delta must be > 0");
  if (gamma <= 0) throw std::invalid_argument("LyapunovSpec: gamma must be > 0");
  if (d <= 0) throw std::invalid_argument("LyapunovSpec: d must be > 0");
}

void init_lyapunov(const LyapunovSpec& spec, ParamMap& params,
                   std::mt19937_64& rng) {
  spec.validate();
  for (const IcnnSpec& icnn : spec.icnns) init_icnn(icnn, params, rng);
}

void CouplingStackSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("CouplingStackSpec: empty name");
  if (dim < 2)
    throw std::invalid_argument(
        "CouplingStackSpec: dim must be >= 2 (configure an identity map "
        "instead)");
  if (layers < 1)
    throw std::invalid_argument("CouplingStackSpec: need at least one layer");
}

MlpSpec CouplingStackSpec::s_net(int layer) const {
  MlpSpec m;
  m.name = name + ".l" + std::to_string(layer) + ".s";
  m.widths.push_back(dim / 2);
  m.widths.insert(m.widths.end(), hidden.begin(), hidden.end());
  m.widths.push_back(dim - dim / 2);
  m.act = act;
  return m;
}

MlpSpec CouplingStackSpec::t_net(int layer) const {
  MlpSpec m = s_net(layer);
  m.name = name + ".l" + std::to_string(layer) + ".t";
  return m;
}

void init_coupling(const CouplingStackSpec& spec, ParamMap& params,
                   std::mt19937_64& rng) {
  spec.validate();
  for (int k = 0; k < spec.layers; ++k) {
    for (const MlpSpec& net : {spec.s_net(k), spec.t_net(k)}) {
      init_mlp(net, params, rng);
      // zero final layer: the stack starts as the identity map
      int last = static_cast<int>(net.widths.size()) - 2;
      params[net.name + ".W" + std::to_string(last)].setZero();
      params[net.name + ".b" + std::to_string(last)].setZero();
    }
  }
}

namespace detail {
CouplingBlocks coupling_blocks(int dim, int layer) {
  int h = dim / 2;
  if (layer % 2 == 0) return {0, h, h, dim - h};
  return {dim - h, h, 0, dim - h};
}
}  // namespace detail

std::pair<Var, Var> lyapunov_value_and_grad(
    const LyapunovSpec& spec, VarBinder& binder, Var x,
    const std::vector<Var>& latent_attractors) {
  int n = static_cast<int>(binder.g.rows(x));
  DualBinder db{binder};
  std::vector<Dual> lat;
  lat.reserve(latent_attractors.size());
  for (Var a : latent_attractors) lat.push_back(dual_const(a));

  Var value{}, grad{};
  for (int i = 0; i < n; ++i) {
    Mat e = Mat::Zero(n, 1);
    e(i, 0) = 1.0;
    Dual dx{x, binder.g.constant(e)};
    Dual out = lyapunov_value(spec, db, dx, lat);
    Var ti = out.t ? *out.t : binder.constant(Mat::Zero(1, 1));
    if (i == 0) {
      value = out.v;
      grad = ti;
    } else {
      grad = concat(grad, ti);
    }
  }
  return {value, grad};
}

}  // namespace snode
