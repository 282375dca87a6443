#include "snode/odeint.hpp"

#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace snode {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kE[7] = {71.0 / 57600,     0.0,        -71.0 / 16695,
                          71.0 / 1920,      -17253.0 / 339200,
                          22.0 / 525,       -1.0 / 40};
constexpr double kD[7] = {-12715105075.0 / 11282082432.0,
                          0.0,
                          87487479700.0 / 32700410799.0,
                          -10690763975.0 / 1880347072.0,
                          701980252875.0 / 199316789632.0,
                          -1453857185.0 / 822651844.0,
                          69997945.0 / 29380423.0};

constexpr double kSafety = 0.9;
constexpr double kExpo1 = 0.7 / 5.0;  // on the current error
constexpr double kExpo2 = 0.4 / 5.0;  // on the previous error
constexpr double kFacMin = 0.2;
constexpr double kFacMax = 10.0;

[[noreturn]] void blowup(double t) {
  std::ostringstream os;
  os << "non-finite state at t=" << t;
  throw std::runtime_error(os.str());
}

[[noreturn]] void too_many_steps(double lo, double hi) {
  std::ostringstream os;
  os << "max_steps exceeded on interval [" << lo << ", " << hi << "]";
  throw std::runtime_error(os.str());
}

// Minimal algebra over the state type so the tape and numeric integrators
// share one stepping core.
struct VecAlgebra {
  const NumField& field;
  using St = Vec;
  Vec f(const Vec& x) const { return field(x); }
  Vec lc(const Vec& base,
         const std::vector<std::pair<double, const Vec*>>& terms) const {
    Vec out = base;
    for (const auto& [c, v] : terms) out += c * *v;
    return out;
  }
  const Vec& val(const Vec& x) const { return x; }
};

struct VarAlgebra {
  const FieldFn& field;
  using St = Var;
  Var f(Var x) const { return field(x); }
  Var lc(Var base,
         const std::vector<std::pair<double, const Var*>>& terms) const {
    Var out = base;
    for (const auto& [c, v] : terms) out = add(out, scale(*v, c));
    return out;
  }
  Vec val(Var x) const { return x.graph->value(x); }
};

template <class A>
std::vector<typename A::St> run_fixed(A alg, typename A::St x0,
                                      const SolverConfig& cfg) {
  using St = typename A::St;
  std::vector<St> out;
  out.reserve(cfg.sample_times.size());
  St x = x0;
  double t = cfg.t0;
  const bool rk4 = cfg.method == Method::RK4;
  long steps = 0;
  for (double target : cfg.sample_times) {
    while (t < target - 1e-12 * std::max(1.0, std::abs(target))) {
      double h = std::min(cfg.dt, target - t);
      if (rk4) {
        St k1 = alg.f(x);
        St k2 = alg.f(alg.lc(x, {{h / 2, &k1}}));
        St k3 = alg.f(alg.lc(x, {{h / 2, &k2}}));
        St k4 = alg.f(alg.lc(x, {{h, &k3}}));
        x = alg.lc(x, {{h / 6, &k1}, {h / 3, &k2}, {h / 3, &k3}, {h / 6, &k4}});
      } else {
        St k1 = alg.f(x);
        x = alg.lc(x, {{h, &k1}});
      }
      t += h;
      if (!alg.val(x).allFinite()) blowup(t);
      if (++steps > cfg.max_steps) too_many_steps(cfg.t0, target);
    }
    out.push_back(x);
  }
  return out;
}

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, double atol,
                  double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    double q = err[i] / sc;
    acc += q * q;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

double initial_step(const NumField& f, const Vec& x0, double atol,
                    double rtol) {
  Vec f0 = f(x0);
  auto scnorm = [&](const Vec& v, const Vec& ref) {
    double acc = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      double sc = atol + rtol * std::abs(ref[i]);
      acc += (v[i] / sc) * (v[i] / sc);
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
  };
  double d0 = scnorm(x0, x0);
  double d1 = scnorm(f0, x0);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Vec x1 = x0 + h0 * f0;
  Vec f1 = f(x1);
  double d2 = scnorm(f1 - f0, x0) / h0;
  double h1 = (std::max(d1, d2) <= 1e-15)
                  ? std::max(1e-6, h0 * 1e-3)
                  : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min(100.0 * h0, h1);
}

template <class A>
std::vector<typename A::St> run_dopri5(A alg, typename A::St x0,
                                       const SolverConfig& cfg,
                                       const NumField& probe) {
  using St = typename A::St;
  std::vector<St> out;
  out.reserve(cfg.sample_times.size());

  double t_end = cfg.sample_times.back();
  std::size_t next_sample = 0;
  // samples at exactly t0 are the initial state
  while (next_sample < cfg.sample_times.size() &&
         cfg.sample_times[next_sample] <= cfg.t0) {
    out.push_back(x0);
    ++next_sample;
  }

  St x = x0;
  double t = cfg.t0;
  if (t >= t_end) return out;

  double h = initial_step(probe, alg.val(x0), cfg.atol, cfg.rtol);
  h = std::min(h, t_end - t);
  double errold = 1.0;
  St k1 = alg.f(x);  // FSAL
  long steps = 0;

  while (t < t_end) {
    if (++steps > cfg.max_steps) too_many_steps(cfg.t0, t_end);
    h = std::min(h, t_end - t);

    St k2 = alg.f(alg.lc(x, {{h * kA[1][0], &k1}}));
    St k3 = alg.f(alg.lc(x, {{h * kA[2][0], &k1}, {h * kA[2][1], &k2}}));
    St k4 = alg.f(alg.lc(
        x, {{h * kA[3][0], &k1}, {h * kA[3][1], &k2}, {h * kA[3][2], &k3}}));
    St k5 = alg.f(alg.lc(x, {{h * kA[4][0], &k1},
                             {h * kA[4][1], &k2},
                             {h * kA[4][2], &k3},
                             {h * kA[4][3], &k4}}));
    St k6 = alg.f(alg.lc(x, {{h * kA[5][0], &k1},
                             {h * kA[5][1], &k2},
                             {h * kA[5][2], &k3},
                             {h * kA[5][3], &k4},
                             {h * kA[5][4], &k5}}));
    St xnew = alg.lc(x, {{h * kA[6][0], &k1},
                         {h * kA[6][2], &k3},
                         {h * kA[6][3], &k4},
                         {h * kA[6][4], &k5},
                         {h * kA[6][5], &k6}});
    St k7 = alg.f(xnew);

    Vec xv = alg.val(x);
    Vec xnv = alg.val(xnew);
    if (!xnv.allFinite()) blowup(t + h);
    Vec errv = h * (kE[0] * alg.val(k1) + kE[2] * alg.val(k3) +
                    kE[3] * alg.val(k4) + kE[4] * alg.val(k5) +
                    kE[5] * alg.val(k6) + kE[6] * alg.val(k7));
    double err = error_norm(errv, xv, xnv, cfg.atol, cfg.rtol);

    if (err <= 1.0) {
      assert(err <= 1.0 && "accepted step exceeds mixed tolerance");
      // dense output over the accepted step (quartic interpolant)
      while (next_sample < cfg.sample_times.size() &&
             cfg.sample_times[next_sample] <= t + h + 1e-12) {
        double ts = std::min(cfg.sample_times[next_sample], t + h);
        double th = (ts - t) / h;
        double th1 = 1.0 - th;
        // rcont expansion in terms of x, xnew, k1, k7 and the kD combination
        St kd = alg.lc(alg.lc(x, {{-1.0, &x}}),  // zero state
                       {{h * kD[0], &k1},
                        {h * kD[2], &k3},
                        {h * kD[3], &k4},
                        {h * kD[4], &k5},
                        {h * kD[5], &k6},
                        {h * kD[6], &k7}});
        // y(th) = x + th*(dy + th1*(r3 + th*(r4 + th1*r5)))
        // dy = xnew - x, r3 = h k1 - dy, r4 = dy - h k7 - r3, r5 = kd
        double c_x = 1.0, c_new = 0.0, c_k1 = 0.0, c_k7 = 0.0, c_kd = 0.0;
        {
          double w_dy = th, w_r3 = th * th1, w_r4 = th * th1 * th,
                 w_r5 = th * th1 * th * th1;
          // dy = xnew - x; r3 = h k1 - dy; r4 = dy - h k7 - r3 = 2 dy - h k1 - h k7
          c_new += w_dy;
          c_x -= w_dy;
          c_k1 += w_r3 * h;
          c_new -= w_r3;
          c_x += w_r3;
          c_new += 2 * w_r4;
          c_x -= 2 * w_r4;
          c_k1 -= w_r4 * h;
          c_k7 -= w_r4 * h;
          c_kd += w_r5;
        }
        St xs = alg.lc(alg.lc(x, {{c_x - 1.0, &x}}),
                       {{c_new, &xnew}, {c_k1, &k1}, {c_k7, &k7}, {c_kd, &kd}});
        out.push_back(xs);
        ++next_sample;
      }
      t += h;
      x = xnew;
      k1 = k7;
      double fac = kSafety * std::pow(err > 0 ? err : 1e-16, -kExpo1) *
                   std::pow(errold, kExpo2);
      fac = std::min(kFacMax, std::max(kFacMin, fac));
      h *= fac;
      errold = std::max(err, 1e-4);
    } else {
      double fac = kSafety * std::pow(err, -kExpo1);
      fac = std::min(1.0, std::max(kFacMin, fac));
      h *= fac;
    }
  }
  return out;
}

}  // namespace

void SolverConfig::validate() const {
  if (sample_times.empty())
    throw std::invalid_argument("SolverConfig: sample_times must be nonempty");
  if (sample_times.front() < t0)
    throw std::invalid_argument("SolverConfig: first sample before t0");
  for (std::size_t i = 1; i < sample_times.size(); ++i)
    if (sample_times[i] <= sample_times[i - 1])
      throw std::invalid_argument(
          "SolverConfig: sample_times must be strictly increasing");
  if (method == Method::Dopri5) {
    if (rtol <= 0 || atol <= 0)
      throw std::invalid_argument("SolverConfig: rtol, atol must be > 0");
  } else if (dt <= 0) {
    throw std::invalid_argument("SolverConfig: dt must be > 0");
  }
  if (max_steps < 1)
    throw std::invalid_argument("SolverConfig: max_steps must be >= 1");
}

std::vector<Var> integrate_fixed(const FieldFn& field, Var x0,
                                 const SolverConfig& config) {
  config.validate();
  if (config.method == Method::Dopri5)
    throw std::invalid_argument("integrate_fixed: method must be euler or rk4");
  return run_fixed(VarAlgebra{field}, x0, config);
}

std::vector<Var> integrate_dopri5(const FieldFn& field, Var x0,
                                  const SolverConfig& config) {
  config.validate();
  Graph* g = x0.graph;
  NumField probe = [&](const Vec& x) -> Vec {
    // step-size heuristic only; values are read back off the tape
    return g->value(field(g->constant(x)));
  };
  return run_dopri5(VarAlgebra{field}, x0, config, probe);
}

std::vector<Var> integrate(const FieldFn& field, Var x0,
                           const SolverConfig& config) {
  return config.method == Method::Dopri5 ? integrate_dopri5(field, x0, config)
                                         : integrate_fixed(field, x0, config);
}

std::vector<Vec> integrate_fixed_num(const NumField& field, const Vec& x0,
                                     const SolverConfig& config) {
  config.validate();
  if (config.method == Method::Dopri5)
    throw std::invalid_argument("integrate_fixed: method must be euler or rk4");
  return run_fixed(VecAlgebra{field}, x0, config);
}

std::vector<Vec> integrate_dopri5_num(const NumField& field, const Vec& x0,
                                      const SolverConfig& config) {
  config.validate();
  return run_dopri5(VecAlgebra{field}, x0, config, field);
}

std::vector<Vec> integrate_num(const NumField& field, const Vec& x0,
                               const SolverConfig& config) {
  return config.method == Method::Dopri5
             ? integrate_dopri5_num(field, x0, config)
             : integrate_fixed_num(field, x0, config);
}

namespace {

// Flattens a named parameter set into one vector and back.
struct ParamPacker {
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>>
      entries;
  Eigen::Index total = 0;

  explicit ParamPacker(const ParamMap& params) {
    for (const auto& [name, m] : params) {
      entries.emplace_back(name, std::make_pair(m.rows(), m.cols()));
      total += m.size();
    }
  }

  void add_into(Vec& flat, const GradMap& grads) const {
    Eigen::Index off = 0;
    for (const auto& [name, shape] : entries) {
      Eigen::Index n = shape.first * shape.second;
      auto it = grads.find(name);
      if (it != grads.end())
        flat.segment(off, n) += Eigen::Map<const Vec>(it->second.data(), n);
      off += n;
    }
  }

  GradMap unpack(const Vec& flat) const {
    GradMap out;
    Eigen::Index off = 0;
    for (const auto& [name, shape] : entries) {
      Eigen::Index n = shape.first * shape.second;
      out[name] = Eigen::Map<const Mat>(flat.segment(off, n).data(),
                                        shape.first, shape.second);
      off += n;
    }
    return out;
  }
};

}  // namespace

AdjointResult adjoint_gradients(const NumField& field, const FieldVjpFn& vjp,
                                const ParamMap& field_params, const Vec& x0,
                                const SampleLossFn& loss,
                                const SolverConfig& config) {
  config.validate();
  std::vector<Vec> xs = integrate_num(field, x0, config);
  SampleLoss sl = loss(xs);
  if (sl.dsample.size() != xs.size())
    throw std::invalid_argument("adjoint: loss must return one gradient per sample");

  ParamPacker packer(field_params);
  const Eigen::Index n = x0.size();

  Vec a = Vec::Zero(n);
  Vec gtheta = Vec::Zero(packer.total);

  // backward-time augmented dynamics: q = [x; a; g], t = t_hi - tau
  NumField aug = [&](const Vec& q) -> Vec {
    Vec x = q.segment(0, n);
    Vec av = q.segment(n, n);
    FieldVjp j = vjp(x, av);
    Vec dq(q.size());
    dq.segment(0, n) = -field(x);
    dq.segment(n, n) = j.dx;
    Vec gflat = Vec::Zero(packer.total);
    packer.add_into(gflat, j.dtheta);
    dq.segment(2 * n, packer.total) = gflat;
    return dq;
  };

  std::vector<double> times = config.sample_times;
  a += sl.dsample.back();
  double t_hi = times.back();
  for (int k = static_cast<int>(times.size()) - 2; k >= -1; --k) {
    double t_lo = (k >= 0) ? times[k] : config.t0;
    double span = t_hi - t_lo;
    if (span > 0) {
      Vec q(2 * n + packer.total);
      // re-anchor x at the stored sample for the interval start
      q.segment(0, n) = (k >= 0) ? xs[k + 1] : xs.front();
      q.segment(n, n) = a;
      q.segment(2 * n, packer.total) = gtheta;
      SolverConfig sub;
      sub.method = Method::Dopri5;
      sub.rtol = config.rtol;
      sub.atol = config.atol;
      sub.max_steps = config.max_steps;
      sub.t0 = 0.0;
      sub.sample_times = {span};
      Vec qend = integrate_dopri5_num(aug, q, sub).back();
      a = qend.segment(n, n);
      gtheta = qend.segment(2 * n, packer.total);
    }
    if (k >= 0) a += sl.dsample[k];
    t_hi = t_lo;
  }

  AdjointResult res;
  res.loss = sl.value;
  res.dx0 = a;
  res.grads = packer.unpack(gtheta);
  for (const auto& [name, g] : sl.dparams) {
    auto it = res.grads.find(name);
    if (it == res.grads.end())
      res.grads[name] = g;
    else
      it->second += g;
  }
  return res;
}

}  // namespace snode
