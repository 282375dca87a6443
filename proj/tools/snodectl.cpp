// snodectl: train / rollout / eval / portrait / gradcheck / selftest
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "snode/dataset.hpp"
#include "snode/gradcheck.hpp"
#include "snode/portrait.hpp"
#include "snode/trainer.hpp"

using nlohmann::json;
using namespace snode;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
}

std::vector<double> parse_floats(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size())
      throw std::invalid_argument("bad float list: '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty float list");
  return out;
}

Method parse_method(const std::string& m) {
  if (m == "euler") return Method::Euler;
  if (m == "rk4") return Method::RK4;
  if (m == "dopri5") return Method::Dopri5;
  throw std::invalid_argument("unknown solver method '" + m + "'");
}

SolverConfig solver_from_json(const json& j) {
  check_keys(j, {"method", "dt", "rtol", "atol", "max_steps"}, "solver");
  SolverConfig sc;
  if (j.contains("method")) sc.method = parse_method(j.at("method"));
  if (j.contains("dt")) sc.dt = j.at("dt");
  if (j.contains("rtol")) sc.rtol = j.at("rtol");
  if (j.contains("atol")) sc.atol = j.at("atol");
  if (j.contains("max_steps")) sc.max_steps = j.at("max_steps");
  return sc;
}

Act parse_act(const json& j, const std::string& key) {
  if (!j.contains(key)) return Act::Tanh;
  std::string a = j.at(key);
  if (a == "tanh") return Act::Tanh;
  if (a == "softplus") return Act::Softplus;
  throw std::invalid_argument("unknown activation '" + a + "'");
}

// Architecture block of a training config; parameters are freshly
// initialized from init_seed.
StableNodeModel build_model(const json& j) {
  check_keys(j,
             {"n_x", "n_z", "phi", "f", "psi", "lyapunov", "attractors",
              "corrective", "init_seed"},
             "model");
  StableNodeModel m;
  m.n_x = j.at("n_x");
  m.n_z = j.contains("n_z") ? int(j.at("n_z")) : m.n_x;

  const json& f = j.at("f");
  check_keys(f, {"widths", "act", "final_linear"}, "model.f");
  m.f.name = "f";
  m.f.widths = f.at("widths").get<std::vector<int>>();
  m.f.act = parse_act(f, "act");
  if (f.contains("final_linear")) m.f.final_linear = f.at("final_linear");

  if (j.contains("phi") && !j.at("phi").is_null()) {
    const json& p = j.at("phi");
    check_keys(p, {"widths", "act", "final_linear"}, "model.phi");
    MlpSpec phi;
    phi.name = "phi";
    phi.widths = p.at("widths").get<std::vector<int>>();
    phi.act = parse_act(p, "act");
    if (p.contains("final_linear")) phi.final_linear = p.at("final_linear");
    m.phi = phi;
  }
  if (j.contains("psi") && !j.at("psi").is_null()) {
    const json& p = j.at("psi");
    check_keys(p, {"layers", "hidden", "act"}, "model.psi");
    CouplingStackSpec psi;
    psi.name = "psi";
    psi.dim = m.n_x;
    psi.layers = p.at("layers");
    psi.hidden = p.at("hidden").get<std::vector<int>>();
    psi.act = parse_act(p, "act");
    m.psi = psi;
  }

  const json& ly = j.at("lyapunov");
  check_keys(ly, {"mode", "icnn_widths", "gamma", "delta", "d",
                  "relu_smooth_act"},
             "model.lyapunov");
  std::string mode = ly.contains("mode") ? std::string(ly.at("mode")) : "single";
  m.lyap.mode = mode == "single" ? LyapMode::Single
                : mode == "sigmoid_blend" ? LyapMode::SigmoidBlend
                : mode == "product"
                    ? LyapMode::Product
                    : throw std::invalid_argument("unknown lyapunov mode '" +
                                                  mode + "'");
  if (ly.contains("gamma")) m.lyap.gamma = ly.at("gamma");
  if (ly.contains("delta")) m.lyap.delta = ly.at("delta");
  if (ly.contains("d")) m.lyap.d = ly.at("d");
  for (const json& a : j.at("attractors")) {
    Vec z(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) z[i] = a[i];
    m.lyap.attractors.push_back(z);
  }
  for (std::size_t i = 0; i < m.lyap.attractors.size(); ++i) {
    IcnnSpec ic;
    ic.name = "V" + std::to_string(i);
    ic.widths = ly.at("icnn_widths").get<std::vector<int>>();
    ic.d = m.lyap.d;
    if (ly.contains("relu_smooth_act")) ic.relu_smooth_act = ly.at("relu_smooth_act");
    m.lyap.icnns.push_back(ic);
  }

  if (j.contains("corrective")) {
    const json& c = j.at("corrective");
    check_keys(c, {"alpha", "epsilon", "s"}, "model.corrective");
    if (c.contains("alpha")) m.corrective.alpha = c.at("alpha");
    if (c.contains("epsilon")) m.corrective.epsilon = c.at("epsilon");
    if (c.contains("s")) m.corrective.s = c.at("s");
  }

  std::mt19937_64 rng(j.contains("init_seed") ? std::uint64_t(j.at("init_seed"))
                                              : 0);
  if (m.phi) init_mlp(*m.phi, m.params, rng);
  init_mlp(m.f, m.params, rng);
  init_lyapunov(m.lyap, m.params, rng);
  if (m.psi) init_coupling(*m.psi, m.params, rng);
  m.validate();
  return m;
}

int cmd_train(const std::string& config_path, std::string data_dir,
              std::string out_path) {
  std::ifstream in(config_path);
  if (!in) throw std::invalid_argument("cannot open " + config_path);
  json cfg = json::parse(in);
  check_keys(cfg,
             {"data", "out", "report", "model", "init_model", "iterations",
              "lr", "beta1", "beta2", "adam_eps", "n_b", "n_s", "loss", "k",
              "grad_path", "seed", "checkpoint_interval", "checkpoint_dir",
              "solver"},
             "config");

  if (data_dir.empty()) data_dir = cfg.value("data", "");
  if (out_path.empty()) out_path = cfg.value("out", "model.json");
  if (data_dir.empty())
    throw std::invalid_argument("no data directory (config 'data' or --data)");
  DemoSet demos = load_demos(data_dir);

  StableNodeModel model;
  if (cfg.contains("init_model"))
    model = load_model(std::string(cfg.at("init_model")));
  else if (cfg.contains("model"))
    model = build_model(cfg.at("model"));
  else
    throw std::invalid_argument("config needs 'model' or 'init_model'");

  TrainConfig tc;
  if (cfg.contains("iterations")) tc.iterations = cfg.at("iterations");
  if (cfg.contains("lr")) tc.lr = cfg.at("lr");
  if (cfg.contains("beta1")) tc.beta1 = cfg.at("beta1");
  if (cfg.contains("beta2")) tc.beta2 = cfg.at("beta2");
  if (cfg.contains("adam_eps")) tc.adam_eps = cfg.at("adam_eps");
  if (cfg.contains("n_b")) tc.n_b = cfg.at("n_b");
  if (cfg.contains("n_s")) tc.n_s = cfg.at("n_s");
  if (cfg.contains("loss")) {
    std::string l = cfg.at("loss");
    if (l == "mse") tc.loss = LossMode::Mse;
    else if (l == "ahd_composite") tc.loss = LossMode::AhdComposite;
    else throw std::invalid_argument("unknown loss '" + l + "'");
  }
  if (cfg.contains("k")) tc.k = cfg.at("k");
  if (cfg.contains("grad_path")) {
    std::string p = cfg.at("grad_path");
    if (p == "tape") tc.grad_path = GradPath::Tape;
    else if (p == "adjoint") tc.grad_path = GradPath::Adjoint;
    else throw std::invalid_argument("unknown grad_path '" + p + "'");
  }
  if (cfg.contains("seed")) tc.seed = cfg.at("seed");
  if (cfg.contains("checkpoint_interval"))
    tc.checkpoint_interval = cfg.at("checkpoint_interval");
  if (cfg.contains("checkpoint_dir"))
    tc.checkpoint_dir = std::string(cfg.at("checkpoint_dir"));
  if (cfg.contains("solver")) tc.solver = solver_from_json(cfg.at("solver"));

  TrainReport rep = fit(model, demos, tc);
  save_model(model, out_path);

  json jr;
  jr["loss_history"] = rep.loss_history;
  jr["wall_seconds"] = rep.wall_seconds;
  jr["events"] = rep.events;
  json cps = json::array();
  for (const auto& p : rep.checkpoints) cps.push_back(p.string());
  jr["checkpoints"] = cps;
  jr["model"] = out_path;
  std::string report_path = cfg.value("report", out_path + ".report.json");
  write_file_atomic(report_path, jr.dump(2) + "\n");

  std::cout << "trained " << tc.iterations << " iterations";
  if (!rep.loss_history.empty())
    std::cout << ", loss " << rep.loss_history.front() << " -> "
              << rep.loss_history.back();
  std::cout << "\nmodel:  " << out_path << "\nreport: " << report_path << "\n";
  return 0;
}

int cmd_rollout(const std::string& model_path, const std::string& x0_str,
                double horizon, const std::string& method, double dt,
                double rtol, double atol, const std::string& out_path) {
  if (horizon <= 0) throw std::invalid_argument("--horizon must be > 0");
  StableNodeModel model = load_model(model_path);
  std::vector<double> x0v = parse_floats(x0_str);
  if (static_cast<int>(x0v.size()) != model.n_z)
    throw std::invalid_argument("--x0 needs " + std::to_string(model.n_z) +
                                " components");
  Vec y = Eigen::Map<Vec>(x0v.data(), x0v.size());

  FieldEvaluator ev(model);
  Vec x0 = model.phi || !model.psi ? y : ev.latent_of_output(y);
  if (model.phi) {
    Graph g;
    VarBinder b{g, model.params};
    x0 = g.value(mlp_forward(*model.phi, b, b.constant(y)));
  }

  SolverConfig sc;
  sc.method = parse_method(method);
  sc.dt = dt;
  sc.rtol = rtol;
  sc.atol = atol;
  sc.t0 = 0.0;
  int nout = 200;
  for (int i = 1; i <= nout; ++i)
    sc.sample_times.push_back(horizon * i / nout);
  sc.max_steps = 100000;

  NumField field = [&](const Vec& x) { return ev.f_hat(x); };
  std::vector<Vec> latent = integrate_num(field, x0, sc);

  Trajectory traj;
  traj.name = "rollout";
  traj.times.push_back(0.0);
  traj.points.push_back(ev.output(x0));
  for (int i = 0; i < nout; ++i) {
    traj.times.push_back(sc.sample_times[i]);
    traj.points.push_back(ev.output(latent[i]));
  }
  write_file_atomic(out_path, trajectory_csv(traj));

  json jr;
  jr["model"] = model_path;
  jr["horizon"] = horizon;
  jr["samples"] = traj.times.size();
  jr["terminal"] = std::vector<double>(traj.points.back().data(),
                                       traj.points.back().data() +
                                           traj.points.back().size());
  jr["terminal_lyapunov"] = ev.lyapunov(latent.back());
  write_file_atomic(out_path + ".report.json", jr.dump(2) + "\n");
  std::cout << "rollout written to " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& out_path) {
  StableNodeModel model = load_model(model_path);
  DemoSet demos = load_demos(data_dir);
  SolverConfig sc;
  sc.max_steps = 100000;
  EvalReport rep = evaluate(model, demos, sc);

  json jr;
  jr["mean_ahd"] = rep.mean_ahd;
  jr["mean_dtwd"] = rep.mean_dtwd;
  jr["mean_frechet"] = rep.mean_frechet;
  json per = json::array();
  for (const DemoEval& d : rep.demos) {
    json e;
    e["name"] = d.name;
    e["solver_ok"] = d.solver_ok;
    if (d.solver_ok) {
      e["dtwd"] = d.dtwd_raw;
      e["dtwd_normalized"] = d.dtwd_norm;
      e["frechet"] = d.frechet;
      e["ahd"] = d.ahd;
      e["terminal_attractor_dist"] = d.terminal_attractor_dist;
      e["terminal_lyapunov"] = d.terminal_lyapunov;
    } else {
      e["solver_error"] = d.solver_error;
    }
    per.push_back(e);
  }
  jr["demos"] = per;
  write_file_atomic(out_path, jr.dump(2) + "\n");
  std::cout << "mean AHD " << rep.mean_ahd << ", mean DTWD " << rep.mean_dtwd
            << ", mean Frechet " << rep.mean_frechet << "\nreport: "
            << out_path << "\n";
  return 0;
}

int cmd_portrait(const std::string& model_path, const std::string& bounds_str,
                 int grid, const std::string& out_path) {
  StableNodeModel model = load_model(model_path);
  std::vector<double> b = parse_floats(bounds_str);
  if (b.size() != 4)
    throw std::invalid_argument("--bounds needs xmin,xmax,ymin,ymax");
  PortraitConfig pc;
  pc.xmin = b[0];
  pc.xmax = b[1];
  pc.ymin = b[2];
  pc.ymax = b[3];
  pc.grid = grid;
  write_file_atomic(out_path, render_portrait(model, pc));

  json jr;
  jr["model"] = model_path;
  jr["bounds"] = b;
  jr["grid"] = grid;
  write_file_atomic(out_path + ".report.json", jr.dump(2) + "\n");
  std::cout << "portrait written to " << out_path << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  auto randvec = [&](int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
  };

  StableNodeModel model;
  model.n_x = model.n_z = 2;
  model.f = {"f", {2, 8, 2}, Act::Tanh, true};
  model.lyap.mode = LyapMode::Single;
  model.lyap.attractors = {Vec::Zero(2)};
  model.lyap.icnns = {{"V0", {2, 6, 1}, 0.1, false}};
  CouplingStackSpec psi;
  psi.name = "psi";
  psi.dim = 2;
  psi.layers = 2;
  psi.hidden = {6};
  model.psi = psi;
  init_mlp(model.f, model.params, rng);
  init_lyapunov(model.lyap, model.params, rng);
  init_coupling(psi, model.params, rng);
  model.validate();

  struct Case {
    std::string name;
    std::function<Var(Graph&, Var)> fn;
  };
  std::vector<Case> cases;
  cases.push_back({"mlp", [&](Graph& g, Var x) {
                     VarBinder b{g, model.params};
                     return sumsq(mlp_forward(model.f, b, x));
                   }});
  cases.push_back({"icnn", [&](Graph& g, Var x) {
                     VarBinder b{g, model.params};
                     return icnn_value(model.lyap.icnns[0], b, x);
                   }});
  cases.push_back({"lyapunov", [&](Graph& g, Var x) {
                     VarBinder b{g, model.params};
                     std::vector<Var> lat = latent_attractors(model, b);
                     return lyapunov_value(model.lyap, b, x, lat);
                   }});
  cases.push_back({"coupling", [&](Graph& g, Var x) {
                     VarBinder b{g, model.params};
                     return sumsq(coupling_forward(*model.psi, b, x));
                   }});
  cases.push_back({"f_hat", [&](Graph& g, Var x) {
                     VarBinder b{g, model.params};
                     std::vector<Var> lat = latent_attractors(model, b);
                     return sumsq(f_hat(model, b, x, lat));
                   }});

  bool all_ok = true;
  for (const Case& c : cases) {
    Vec x = randvec(2) + Vec::Constant(2, 0.7);  // keep away from branch edges
    GradCheckReport rep = grad_check(c.fn, x, 1e-6, 1e-5);
    std::printf("%-10s max_rel_error %.3e  %s\n", c.name.c_str(),
                rep.max_rel_error, rep.pass ? "ok" : "FAIL");
    if (!rep.pass) {
      std::printf("  %s\n", rep.failure.c_str());
      all_ok = false;
    }
  }
  if (!all_ok) throw std::runtime_error("gradcheck failed");
  return 0;
}

int cmd_selftest() {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::printf("%-28s %s\n", name.c_str(), ok ? "ok" : "FAIL");
    if (!ok) ++failures;
  };

  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 0.5);
  auto randvec = [&](int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
  };

  // replay determinism
  {
    ParamMap params;
    MlpSpec mlp{"m", {3, 5, 2}, Act::Tanh, true};
    init_mlp(mlp, params, rng);
    Graph g;
    VarBinder b{g, params};
    Var y = sumsq(mlp_forward(mlp, b, b.constant(randvec(3))));
    double v1 = g.scalar(y);
    g.replay();
    check("graph replay", g.scalar(y) == v1);
  }

  // coupling inverse round trip
  {
    ParamMap params;
    CouplingStackSpec cs;
    cs.name = "c";
    cs.dim = 3;
    cs.layers = 3;
    cs.hidden = {6};
    init_coupling(cs, params, rng);
    for (auto& [k, v] : params) v = v.unaryExpr([&](double) { return nd(rng); });
    Graph g;
    VarBinder b{g, params};
    Vec x = randvec(3);
    Var z = coupling_forward(cs, b, b.constant(x));
    Var back = coupling_inverse(cs, b, z);
    check("coupling round trip", (g.value(back) - x).norm() < 1e-10);
  }

  // checkpoint round trip reproduces a rollout exactly
  {
    StableNodeModel m;
    m.n_x = m.n_z = 2;
    m.f = {"f", {2, 8, 2}, Act::Tanh, true};
    m.lyap.attractors = {Vec::Zero(2)};
    m.lyap.icnns = {{"V0", {2, 6, 1}, 0.1, false}};
    init_mlp(m.f, m.params, rng);
    init_lyapunov(m.lyap, m.params, rng);
    auto path = std::filesystem::temp_directory_path() / "snodectl_selftest.json";
    save_model(m, path);
    StableNodeModel m2 = load_model(path);
    std::filesystem::remove(path);
    FieldEvaluator e1(m), e2(m2);
    SolverConfig sc;
    sc.sample_times = {0.5, 1.0};
    Vec x0 = randvec(2);
    auto r1 = integrate_num([&](const Vec& x) { return e1.f_hat(x); }, x0, sc);
    auto r2 = integrate_num([&](const Vec& x) { return e2.f_hat(x); }, x0, sc);
    check("checkpoint round trip",
          r1.back() == r2.back() && r1.front() == r2.front());
  }

  // CSV round trip
  {
    Trajectory t;
    t.name = "rt";
    for (int i = 0; i < 5; ++i) {
      t.times.push_back(0.1 * i + 1e-3 * nd(rng) * 0);
      t.points.push_back(randvec(2));
    }
    auto path = std::filesystem::temp_directory_path() / "snodectl_rt.csv";
    save_trajectory_csv(path, t);
    Trajectory t2 = load_trajectory_csv(path);
    std::filesystem::remove(path);
    bool ok = t2.times == t.times && t2.points.size() == t.points.size();
    for (std::size_t i = 0; ok && i < t.points.size(); ++i)
      ok = t.points[i] == t2.points[i];
    check("csv round trip", ok);
  }

  // V non-increasing along a rollout where V > 1/(s alpha)
  {
    StableNodeModel m;
    m.n_x = m.n_z = 2;
    m.f = {"f", {2, 8, 2}, Act::Tanh, true};
    m.lyap.attractors = {Vec::Zero(2)};
    m.lyap.icnns = {{"V0", {2, 6, 1}, 0.1, false}};
    m.corrective = {1.0, 1e-4, 10.0};
    init_mlp(m.f, m.params, rng);
    init_lyapunov(m.lyap, m.params, rng);
    FieldEvaluator ev(m);
    SolverConfig sc;
    for (int i = 1; i <= 40; ++i) sc.sample_times.push_back(0.05 * i);
    Vec x0 = Vec::Constant(2, 1.2);
    auto xs = integrate_num([&](const Vec& x) { return ev.f_hat(x); }, x0, sc);
    double thresh = 1.0 / (m.corrective.s * m.corrective.alpha);
    bool ok = true;
    double prev = ev.lyapunov(x0);
    for (const Vec& x : xs) {
      double v = ev.lyapunov(x);
      if (prev > thresh && v > prev + 1e-6) ok = false;
      prev = v;
    }
    check("lyapunov descent", ok);
  }

  if (failures > 0) throw std::runtime_error("selftest failed");
  std::printf("all selftests passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stable neural ODE toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, model_path, x0_str, bounds_str;
  std::string method = "dopri5";
  double horizon = 5.0, dt = 0.01, rtol = 1e-6, atol = 1e-8;
  int grid = 40;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train a model from demonstrations");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--data", data_dir, "demo directory (overrides config)");
  train->add_option("--out", out_path, "model output path (overrides config)");

  auto* rollout = app.add_subcommand("rollout", "integrate from an initial point");
  rollout->add_option("--model", model_path)->required();
  rollout->add_option("--x0", x0_str, "comma-separated initial point")->required();
  rollout->add_option("--horizon", horizon, "integration time")->required();
  rollout->add_option("--method", method, "euler|rk4|dopri5");
  rollout->add_option("--dt", dt);
  rollout->add_option("--rtol", rtol);
  rollout->add_option("--atol", atol);
  rollout->add_option("--out", out_path)->required();

  auto* eval = app.add_subcommand("eval", "metrics against demonstrations");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--out", out_path)->required();

  auto* portrait = app.add_subcommand("portrait", "SVG phase portrait");
  portrait->add_option("--model", model_path)->required();
  portrait->add_option("--bounds", bounds_str, "xmin,xmax,ymin,ymax")->required();
  portrait->add_option("--grid", grid);
  portrait->add_option("--out", out_path)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks");
  gradcheck->add_option("--seed", seed);

  app.add_subcommand("selftest", "run the invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(config_path, data_dir, out_path);
    if (app.got_subcommand("rollout"))
      return cmd_rollout(model_path, x0_str, horizon, method, dt, rtol, atol,
                         out_path);
    if (app.got_subcommand("eval")) return cmd_eval(model_path, data_dir, out_path);
    if (app.got_subcommand("portrait"))
      return cmd_portrait(model_path, bounds_str, grid, out_path);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(seed);
    if (app.got_subcommand("selftest")) return cmd_selftest();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
