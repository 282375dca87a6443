#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "snode/nets.hpp"
#include "snode/odeint.hpp"

using namespace snode;

namespace {

std::mt19937_64 rng(99);

Vec randv(int n, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

SolverConfig cfg(Method m, std::vector<double> samples) {
  SolverConfig c;
  c.method = m;
  c.sample_times = std::move(samples);
  return c;
}

}  // namespace

TEST_CASE("solver config validation") {
  SolverConfig c = cfg(Method::Euler, {1.0});
  c.dt = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.dt = 0.1;
  c.sample_times = {};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.sample_times = {1.0, 0.5};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.sample_times = {0.5, 1.0};
  CHECK_NOTHROW(c.validate());
  SolverConfig d = cfg(Method::Dopri5, {1.0});
  d.rtol = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("euler single step on xdot = -x") {
  SolverConfig c = cfg(Method::Euler, {0.1});
  c.dt = 0.1;
  NumField f = [](const Vec& x) { return Vec(-x); };
  auto out = integrate_num(f, Vec::Ones(1), c);
  CHECK(out[0][0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("rk4 reaches e^-1 on xdot = -x") {
  SolverConfig c = cfg(Method::RK4, {1.0});
  c.dt = 0.01;
  NumField f = [](const Vec& x) { return Vec(-x); };
  auto out = integrate_num(f, Vec::Ones(1), c);
  CHECK(out[0][0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("rk4 preserves the norm of a planar rotation over one period") {
  SolverConfig c = cfg(Method::RK4, {2.0 * M_PI});
  c.dt = 1e-3;
  c.max_steps = 100000;
  NumField f = [](const Vec& x) {
    Vec v(2);
    v << -x[1], x[0];
    return v;
  };
  Vec x0(2);
  x0 << 1.0, 0.5;
  auto out = integrate_num(f, x0, c);
  CHECK(std::abs(out[0].norm() - x0.norm()) < 1e-8);
  CHECK((out[0] - x0).norm() < 1e-8);
}

TEST_CASE("rk4 global error order: halving dt shrinks error by 8x to 32x") {
  NumField f = [](const Vec& x) { return Vec(-x); };
  auto error_at = [&](double dt) {
    SolverConfig c = cfg(Method::RK4, {1.0});
    c.dt = dt;
    auto out = integrate_num(f, Vec::Ones(1), c);
    return std::abs(out[0][0] - std::exp(-1.0));
  };
  double e1 = error_at(0.1), e2 = error_at(0.05);
  double ratio = e1 / e2;
  INFO("ratio " << ratio);
  CHECK(ratio >= 8.0);
  CHECK(ratio <= 32.0);
}

TEST_CASE("dopri5 hits e^-1 and error shrinks with rtol") {
  NumField f = [](const Vec& x) { return Vec(-x); };
  auto error_at = [&](double rtol) {
    SolverConfig c = cfg(Method::Dopri5, {1.0});
    c.rtol = rtol;
    c.atol = rtol * 1e-2;
    auto out = integrate_num(f, Vec::Ones(1), c);
    return std::abs(out[0][0] - std::exp(-1.0));
  };
  CHECK(error_at(1e-8) < 1e-6);
  CHECK(error_at(1e-8) < error_at(1e-5));
}

TEST_CASE("dopri5 is exact on a constant field regardless of tolerances") {
  Vec cvec(2);
  cvec << 0.3, -1.1;
  NumField f = [&](const Vec&) { return cvec; };
  SolverConfig c = cfg(Method::Dopri5, {0.37, 1.44, 2.0});
  c.rtol = 1e-3;
  c.atol = 1e-3;
  Vec x0(2);
  x0 << 1.0, 2.0;
  auto out = integrate_num(f, x0, c);
  for (std::size_t i = 0; i < out.size(); ++i) {
    Vec expect = x0 + c.sample_times[i] * cvec;
    CHECK((out[i] - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("sample times before t0 and between grid points are handled") {
  NumField f = [](const Vec& x) { return Vec(-x); };
  SolverConfig c = cfg(Method::RK4, {0.05, 0.125, 0.4});
  c.dt = 0.1;
  auto out = integrate_num(f, Vec::Ones(1), c);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i][0] ==
          doctest::Approx(std::exp(-c.sample_times[i])).epsilon(1e-6));
}

TEST_CASE("blow-up aborts with the time of failure") {
  NumField f = [](const Vec& x) { return Vec(x.array().square().matrix() * 1e8); };
  SolverConfig c = cfg(Method::Euler, {10.0});
  c.dt = 0.1;
  CHECK_THROWS_AS((void)integrate_num(f, Vec::Ones(1), c), std::runtime_error);
}

TEST_CASE("dopri5 max_steps exceeded is an error") {
  NumField f = [](const Vec& x) { return Vec(-1000.0 * x); };
  SolverConfig c = cfg(Method::Dopri5, {100.0});
  c.rtol = 1e-10;
  c.atol = 1e-12;
  c.max_steps = 20;
  CHECK_THROWS_AS((void)integrate_num(f, Vec::Ones(1), c), std::runtime_error);
}

TEST_CASE("tape and numeric integration agree exactly") {
  MlpSpec spec{"f", {2, 6, 2}, Act::Tanh, true};
  ParamMap params;
  init_mlp(spec, params, rng);
  Vec x0 = randv(2);
  for (Method m : {Method::Euler, Method::RK4, Method::Dopri5}) {
    SolverConfig c = cfg(m, {0.3, 0.9});
    c.dt = 0.05;
    Graph g;
    VarBinder b{g, params};
    FieldFn field = [&](Var x) { return mlp_forward(spec, b, x); };
    auto tape_out = integrate(field, b.constant(x0), c);
    NumField nfield = [&](const Vec& x) {
      Graph h;
      VarBinder hb{h, params};
      return h.value(mlp_forward(spec, hb, hb.constant(x)));
    };
    auto num_out = integrate_num(nfield, x0, c);
    for (std::size_t i = 0; i < num_out.size(); ++i)
      CHECK((g.value(tape_out[i]) - Mat(num_out[i])).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gradients through fixed-step rollouts match finite differences") {
  MlpSpec spec{"f", {2, 5, 2}, Act::Tanh, true};
  ParamMap params;
  init_mlp(spec, params, rng);
  SolverConfig c = cfg(Method::RK4, {0.2, 0.5});
  c.dt = 0.1;
  Vec x0 = randv(2);
  Vec target = randv(2);

  auto loss_at = [&](const ParamMap& p) {
    Graph g;
    VarBinder b{g, p};
    FieldFn field = [&](Var x) { return mlp_forward(spec, b, x); };
    auto out = integrate(field, b.constant(x0), c);
    return g.scalar(sumsq(sub(out.back(), b.constant(target))));
  };

  Graph g;
  VarBinder b{g, params};
  FieldFn field = [&](Var x) { return mlp_forward(spec, b, x); };
  auto out = integrate(field, b.constant(x0), c);
  GradMap grads = g.backward(sumsq(sub(out.back(), b.constant(target))));

  for (auto& [name, grad] : grads) {
    Mat& p = params[name];
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) {
        double h = 1e-6, orig = p(i, j);
        p(i, j) = orig + h;
        double fp = loss_at(params);
        p(i, j) = orig - h;
        double fm = loss_at(params);
        p(i, j) = orig;
        double fd = (fp - fm) / (2 * h);
        CHECK(std::abs(grad(i, j) - fd) / std::max(std::abs(fd), 1e-4) < 1e-4);
      }
  }
}

TEST_CASE("adjoint on the scalar linear ODE matches the analytic sensitivity") {
  // xdot = theta x, theta = -1, x0 = 1, loss = x(1)^2:
  // x(1) = e^theta, dL/dtheta = 2 e^{2 theta}
  ParamMap params{{"theta", Mat::Constant(1, 1, -1.0)}};
  NumField field = [&](const Vec& x) {
    return Vec(params.at("theta")(0, 0) * x);
  };
  FieldVjpFn vjp = [&](const Vec& x, const Vec& a) {
    FieldVjp out;
    out.dx = Vec(params.at("theta")(0, 0) * a);
    out.dtheta["theta"] = Mat::Constant(1, 1, a[0] * x[0]);
    return out;
  };
  SampleLossFn loss = [](const std::vector<Vec>& samples) {
    SampleLoss out;
    out.value = samples[0][0] * samples[0][0];
    out.dsample = {Vec(2.0 * samples[0])};
    return out;
  };
  SolverConfig c = cfg(Method::Dopri5, {1.0});
  c.rtol = 1e-10;
  c.atol = 1e-12;
  AdjointResult res = adjoint_gradients(field, vjp, params, Vec::Ones(1), loss, c);
  CHECK(res.loss == doctest::Approx(std::exp(-2.0)).epsilon(1e-8));
  CHECK(res.grads.at("theta")(0, 0) ==
        doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-6));
  // dL/dx0 = 2 e^{2 theta} x0
  CHECK(res.dx0[0] == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-6));
}

TEST_CASE("adjoint: zero loss gives zero gradients") {
  ParamMap params{{"theta", Mat::Constant(1, 1, -0.5)}};
  NumField field = [&](const Vec& x) {
    return Vec(params.at("theta")(0, 0) * x);
  };
  FieldVjpFn vjp = [&](const Vec& x, const Vec& a) {
    FieldVjp out;
    out.dx = Vec(params.at("theta")(0, 0) * a);
    out.dtheta["theta"] = Mat::Constant(1, 1, a[0] * x[0]);
    return out;
  };
  SampleLossFn loss = [](const std::vector<Vec>& samples) {
    SampleLoss out;
    out.value = 0.0;
    for (const Vec& s : samples) out.dsample.push_back(Vec::Zero(s.size()));
    return out;
  };
  SolverConfig c = cfg(Method::Dopri5, {0.5, 1.0});
  AdjointResult res = adjoint_gradients(field, vjp, params, Vec::Ones(1), loss, c);
  CHECK(res.loss == 0.0);
  CHECK(res.grads.at("theta").norm() == 0.0);
  CHECK(res.dx0.norm() == 0.0);
}

TEST_CASE("adjoint agrees with tape gradients on a random small model") {
  MlpSpec spec{"f", {2, 6, 2}, Act::Tanh, true};
  ParamMap params;
  init_mlp(spec, params, rng);
  Vec x0 = randv(2);
  Vec target = randv(2);
  std::vector<double> stamps = {0.25, 0.6, 1.0};

  // tape gradients via dopri5
  SolverConfig c = cfg(Method::Dopri5, stamps);
  c.rtol = 1e-9;
  c.atol = 1e-11;
  Graph g;
  VarBinder b{g, params};
  FieldFn field = [&](Var x) { return mlp_forward(spec, b, x); };
  auto out = integrate(field, b.constant(x0), c);
  Var l{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    Var e = sumsq(sub(out[i], b.constant(target)));
    l = (i == 0) ? e : add(l, e);
  }
  GradMap tape = g.backward(l);

  NumField nfield = [&](const Vec& x) {
    Graph h;
    VarBinder hb{h, params};
    return h.value(mlp_forward(spec, hb, hb.constant(x)));
  };
  FieldVjpFn vjp = [&](const Vec& x, const Vec& a) {
    Graph h;
    VarBinder hb{h, params};
    Var xp = h.param("__x", x);
    Var s = dot(mlp_forward(spec, hb, xp), hb.constant(a));
    GradMap grads = h.backward(s);
    FieldVjp res;
    res.dx = grads.at("__x");
    grads.erase("__x");
    res.dtheta = std::move(grads);
    return res;
  };
  SampleLossFn loss = [&](const std::vector<Vec>& samples) {
    SampleLoss res;
    for (const Vec& s : samples) {
      res.value += (s - target).squaredNorm();
      res.dsample.push_back(Vec(2.0 * (s - target)));
    }
    return res;
  };
  AdjointResult adj = adjoint_gradients(nfield, vjp, params, x0, loss, c);

  CHECK(adj.loss == doctest::Approx(g.scalar(l)).epsilon(1e-8));
  double dot_sum = 0.0, na = 0.0, nb = 0.0;
  double max_rel = 0.0;
  for (const auto& [name, gt] : tape) {
    const Mat& ga = adj.grads.at(name);
    dot_sum += (gt.array() * ga.array()).sum();
    na += gt.squaredNorm();
    nb += ga.squaredNorm();
    max_rel = std::max(max_rel,
                       (gt - ga).cwiseAbs().maxCoeff() /
                           std::max(gt.cwiseAbs().maxCoeff(), 1e-8));
  }
  double cosine = dot_sum / std::sqrt(na * nb);
  INFO("cosine " << cosine << " max_rel " << max_rel);
  CHECK(cosine > 0.999);
  CHECK(max_rel < 1e-2);
}
