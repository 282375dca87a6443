#include "snode/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace snode {

using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t iter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (iter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool all_finite(const GradMap& grads) {
  for (const auto& [name, g] : grads)
    if (!g.allFinite()) return false;
  return true;
}

// x(t0) = phi(y); with an identity input map and a coupling output map the
// observation is pulled back through psi so rollouts start on the demo.
Var initial_latent(const StableNodeModel& model, VarBinder& binder,
                   const Vec& y) {
  Var yc = binder.constant(y);
  if (model.phi) return mlp_forward(*model.phi, binder, yc);
  if (model.psi) return coupling_inverse(*model.psi, binder, yc);
  return yc;
}

Vec initial_latent_num(const StableNodeModel& model, const Vec& y) {
  Graph g;
  VarBinder b{g, model.params};
  return g.value(initial_latent(model, b, y));
}

void accumulate(GradMap& into, const GradMap& from, double w) {
  for (const auto& [name, g] : from) {
    auto it = into.find(name);
    if (it == into.end())
      into[name] = w * g;
    else
      it->second += w * g;
  }
}

// Tape path: one graph per window, loss and gradients off the same tape.
double window_grads_tape(const StableNodeModel& model, const Trajectory& traj,
                         const Window& w, const TrainConfig& config,
                         GradMap& grads_accum) {
  Graph g;
  VarBinder binder{g, model.params};
  std::vector<Var> lat = latent_attractors(model, binder);
  FieldFn field = [&](Var x) {
    return field_parts(model, binder, x, lat).f_hat;
  };

  SolverConfig sc = config.solver;
  sc.t0 = traj.times[w.start];
  sc.sample_times.assign(traj.times.begin() + w.start,
                         traj.times.begin() + w.start + w.length);

  Var x0 = initial_latent(model, binder, traj.points[w.start]);
  std::vector<Var> states = integrate(field, x0, sc);
  std::vector<Var> rollout;
  rollout.reserve(states.size());
  for (Var x : states)
    rollout.push_back(model.psi ? coupling_forward(*model.psi, binder, x) : x);

  std::vector<Vec> demo(traj.points.begin() + w.start,
                        traj.points.begin() + w.start + w.length);
  Var loss = training_loss(rollout, demo, config.k, config.loss);
  double lv = g.scalar(loss);
  if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
  accumulate(grads_accum, g.backward(loss), 1.0);
  return lv;
}

// Adjoint path: numeric forward solve, adjoint ODE backward, loss jumps at
// the sample times.
double window_grads_adjoint(const StableNodeModel& model,
                            const Trajectory& traj, const Window& w,
                            const TrainConfig& config, GradMap& grads_accum) {
  FieldEvaluator ev(model);
  NumField field = [&](const Vec& x) { return ev.f_hat(x); };
  FieldVjpFn vjp = [&](const Vec& x, const Vec& a) {
    Graph g;
    VarBinder b{g, model.params};
    std::vector<Var> lat = latent_attractors(model, b);
    Var xp = g.param("__x", x);
    FieldParts p = field_parts(model, b, xp, lat);
    Var s = dot(p.f_hat, b.constant(a));
    GradMap grads = g.backward(s);
    FieldVjp out;
    out.dx = grads.at("__x");
    grads.erase("__x");
    out.dtheta = std::move(grads);
    return out;
  };

  std::vector<Vec> demo(traj.points.begin() + w.start,
                        traj.points.begin() + w.start + w.length);
  SampleLossFn loss_fn = [&](const std::vector<Vec>& samples) {
    Graph g;
    VarBinder b{g, model.params};
    std::vector<Var> rollout;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Var xi = g.param("__s" + std::to_string(i), samples[i]);
      rollout.push_back(model.psi ? coupling_forward(*model.psi, b, xi) : xi);
    }
    Var loss = training_loss(rollout, demo, config.k, config.loss);
    SampleLoss out;
    out.value = g.scalar(loss);
    GradMap grads = g.backward(loss);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::string key = "__s" + std::to_string(i);
      out.dsample.push_back(grads.at(key));
      grads.erase(key);
    }
    out.dparams = std::move(grads);
    return out;
  };

  SolverConfig sc = config.solver;
  sc.t0 = traj.times[w.start];
  sc.sample_times.assign(traj.times.begin() + w.start,
                         traj.times.begin() + w.start + w.length);

  Vec x0 = initial_latent_num(model, traj.points[w.start]);
  AdjointResult res =
      adjoint_gradients(field, vjp, model.params, x0, loss_fn, sc);
  if (!std::isfinite(res.loss)) throw std::runtime_error("non-finite loss");
  accumulate(grads_accum, res.grads, 1.0);

  // chain dL/dx0 through the input (or pulled-back output) map
  if (model.phi || model.psi) {
    Graph g;
    VarBinder b{g, model.params};
    Var x0v = initial_latent(model, b, traj.points[w.start]);
    Var s = dot(x0v, b.constant(res.dx0));
    accumulate(grads_accum, g.backward(s), 1.0);
  }
  return res.loss;
}

json mlp_descriptor(const MlpSpec& m) {
  return {{"type", "mlp"},
          {"name", m.name},
          {"widths", m.widths},
          {"act", m.act == Act::Tanh ? "tanh" : "softplus"},
          {"final_linear", m.final_linear}};
}

MlpSpec mlp_from_json(const json& j) {
  MlpSpec m;
  m.name = j.at("name");
  m.widths = j.at("widths").get<std::vector<int>>();
  m.act = j.at("act") == "tanh" ? Act::Tanh : Act::Softplus;
  m.final_linear = j.at("final_linear");
  return m;
}

}  // namespace

bool adam_step(ParamMap& params, const GradMap& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (!all_finite(grads)) return false;
  ++state.t;
  double bc1 = 1.0 - std::pow(beta1, state.t);
  double bc2 = 1.0 - std::pow(beta2, state.t);
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end())
      throw std::invalid_argument("adam_step: unknown parameter " + name);
    Mat& m = state.m.try_emplace(name, Mat::Zero(g.rows(), g.cols()))
                 .first->second;
    Mat& v = state.v.try_emplace(name, Mat::Zero(g.rows(), g.cols()))
                 .first->second;
    m = beta1 * m + (1.0 - beta1) * g;
    v = (beta2 * v.array() + (1.0 - beta2) * g.array().square()).matrix();
    pit->second.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
  return true;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations < 0");
  if (lr <= 0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (n_b < 1 || n_s < 2)
    throw std::invalid_argument("TrainConfig: n_b >= 1 and n_s >= 2 required");
}

TrainReport fit(StableNodeModel& model, const DemoSet& demos,
                const TrainConfig& config) {
  config.validate();
  model.validate();
  demos.validate();

  TrainReport report;
  AdamState adam;
  auto t_start = std::chrono::steady_clock::now();
  int consecutive_failures = 0;

  for (int iter = 0; iter < config.iterations; ++iter) {
    std::vector<Window> windows =
        make_windows(demos, config.n_s, config.n_b, mix_seed(config.seed, iter));
    try {
      GradMap grads;
      double loss = 0.0;
      for (const Window& w : windows) {
        const Trajectory& traj = demos.trajectories[w.demo];
        loss += config.grad_path == GradPath::Tape
                    ? window_grads_tape(model, traj, w, config, grads)
                    : window_grads_adjoint(model, traj, w, config, grads);
      }
      double inv = 1.0 / static_cast<double>(windows.size());
      loss *= inv;
      for (auto& [name, g] : grads) g *= inv;
      if (!adam_step(model.params, grads, adam, config.lr, config.beta1,
                     config.beta2, config.adam_eps)) {
        report.events.push_back("iteration " + std::to_string(iter) +
                                ": non-finite gradient, step skipped");
      }
      report.loss_history.push_back(loss);
      consecutive_failures = 0;
    } catch (const std::runtime_error& e) {
      report.events.push_back("iteration " + std::to_string(iter) +
                              ": skipped (" + e.what() + ")");
      if (++consecutive_failures > 10)
        throw std::runtime_error("training aborted: " +
                                 std::to_string(consecutive_failures) +
                                 " consecutive solver failures");
    }
    if (config.checkpoint_interval > 0 &&
        (iter + 1) % config.checkpoint_interval == 0 &&
        !config.checkpoint_dir.empty()) {
      auto path = config.checkpoint_dir /
                  ("checkpoint_" + std::to_string(iter + 1) + ".json");
      save_model(model, path);
      report.checkpoints.push_back(path);
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

EvalReport evaluate(const StableNodeModel& model, const DemoSet& demos,
                    const SolverConfig& solver) {
  model.validate();
  demos.validate();
  if (demos.trajectories.empty())
    throw std::invalid_argument("evaluate: no demonstrations");

  FieldEvaluator ev(model);
  NumField field = [&](const Vec& x) { return ev.f_hat(x); };

  EvalReport report;
  for (const Trajectory& traj : demos.trajectories) {
    DemoEval de;
    de.name = traj.name;
    try {
      SolverConfig sc = solver;
      sc.t0 = traj.times.front();
      sc.sample_times = traj.times;
      Vec x0 = initial_latent_num(model, traj.points.front());
      std::vector<Vec> latent = integrate_num(field, x0, sc);
      std::vector<Vec> rollout;
      rollout.reserve(latent.size());
      for (const Vec& x : latent) rollout.push_back(ev.output(x));

      de.dtwd_raw = dtwd(rollout, traj.points).raw;
      de.dtwd_norm = dtwd(rollout, traj.points).normalized;
      de.frechet = discrete_frechet(rollout, traj.points);
      de.ahd = ahd(rollout, traj.points);

      SolverConfig ext = sc;
      ext.sample_times = {traj.times.front() + 3.0 * traj.duration()};
      ext.max_steps = solver.max_steps * 3;
      Vec x_end = integrate_num(field, x0, ext).back();
      Vec z_end = ev.output(x_end);
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& z : model.lyap.attractors)
        best = std::min(best, (z_end - z).norm());
      de.terminal_attractor_dist = best;
      de.terminal_lyapunov = ev.lyapunov(x_end);
    } catch (const std::runtime_error& e) {
      de.solver_ok = false;
      de.solver_error = e.what();
    }
    report.demos.push_back(de);
  }

  int ok = 0;
  for (const DemoEval& d : report.demos) {
    if (!d.solver_ok) continue;
    report.mean_ahd += d.ahd;
    report.mean_dtwd += d.dtwd_raw;
    report.mean_frechet += d.frechet;
    ++ok;
  }
  if (ok > 0) {
    report.mean_ahd /= ok;
    report.mean_dtwd /= ok;
    report.mean_frechet /= ok;
  }
  return report;
}

void write_file_atomic(const std::filesystem::path& file,
                       const std::string& content) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, file);
}

void save_model(const StableNodeModel& model,
                const std::filesystem::path& file) {
  model.validate();
  json j;
  j["version"] = 1;
  j["n_x"] = model.n_x;
  j["n_z"] = model.n_z;
  j["corrective"] = {{"alpha", model.corrective.alpha},
                     {"epsilon", model.corrective.epsilon},
                     {"s", model.corrective.s}};
  json maps;
  maps["phi"] = model.phi ? mlp_descriptor(*model.phi)
                          : json{{"type", "identity"}};
  if (model.psi) {
    maps["psi"] = {{"type", "coupling"},
                   {"name", model.psi->name},
                   {"dim", model.psi->dim},
                   {"layers", model.psi->layers},
                   {"hidden", model.psi->hidden},
                   {"act", model.psi->act == Act::Tanh ? "tanh" : "softplus"}};
  } else {
    maps["psi"] = {{"type", "identity"}};
  }
  j["maps"] = maps;
  j["f"] = mlp_descriptor(model.f);

  json lyap;
  switch (model.lyap.mode) {
    case LyapMode::Single: lyap["mode"] = "single"; break;
    case LyapMode::SigmoidBlend: lyap["mode"] = "sigmoid_blend"; break;
    case LyapMode::Product: lyap["mode"] = "product"; break;
  }
  lyap["gamma"] = model.lyap.gamma;
  lyap["delta"] = model.lyap.delta;
  lyap["d"] = model.lyap.d;
  json icnns = json::array();
  for (const IcnnSpec& ic : model.lyap.icnns)
    icnns.push_back({{"name", ic.name},
                     {"widths", ic.widths},
                     {"d", ic.d},
                     {"relu_smooth_act", ic.relu_smooth_act}});
  lyap["icnns"] = icnns;
  j["lyapunov"] = lyap;

  json attractors = json::array();
  for (const Vec& z : model.lyap.attractors) {
    json a = json::array();
    for (Eigen::Index i = 0; i < z.size(); ++i) a.push_back(z[i]);
    attractors.push_back(a);
  }
  j["attractors"] = attractors;

  json params;
  for (const auto& [name, m] : model.params) {
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    params[name] = {{"shape", {m.rows(), m.cols()}}, {"data", data}};
  }
  j["params"] = params;

  write_file_atomic(file, j.dump(2) + "\n");
}

StableNodeModel load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::invalid_argument("cannot open " + file.string());
  json j = json::parse(in);
  if (j.at("version") != 1)
    throw std::invalid_argument("unsupported checkpoint version");

  StableNodeModel m;
  m.n_x = j.at("n_x");
  m.n_z = j.at("n_z");
  m.corrective.alpha = j.at("corrective").at("alpha");
  m.corrective.epsilon = j.at("corrective").at("epsilon");
  m.corrective.s = j.at("corrective").at("s");
  const json& maps = j.at("maps");
  if (maps.at("phi").at("type") == "mlp") m.phi = mlp_from_json(maps.at("phi"));
  if (maps.at("psi").at("type") == "coupling") {
    CouplingStackSpec cs;
    cs.name = maps.at("psi").at("name");
    cs.dim = maps.at("psi").at("dim");
    cs.layers = maps.at("psi").at("layers");
    cs.hidden = maps.at("psi").at("hidden").get<std::vector<int>>();
    cs.act = maps.at("psi").at("act") == "tanh" ? Act::Tanh : Act::Softplus;
    m.psi = cs;
  }
  m.f = mlp_from_json(j.at("f"));

  const json& lyap = j.at("lyapunov");
  std::string mode = lyap.at("mode");
  m.lyap.mode = mode == "single" ? LyapMode::Single
                : mode == "sigmoid_blend" ? LyapMode::SigmoidBlend
                                          : LyapMode::Product;
  m.lyap.gamma = lyap.at("gamma");
  m.lyap.delta = lyap.at("delta");
  m.lyap.d = lyap.at("d");
  for (const json& ic : lyap.at("icnns")) {
    IcnnSpec spec;
    spec.name = ic.at("name");
    spec.widths = ic.at("widths").get<std::vector<int>>();
    spec.d = ic.at("d");
    spec.relu_smooth_act = ic.at("relu_smooth_act");
    m.lyap.icnns.push_back(spec);
  }
  for (const json& a : j.at("attractors")) {
    Vec z(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) z[i] = a[i];
    m.lyap.attractors.push_back(z);
  }
  for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
    const json& e = it.value();
    Eigen::Index rows = e.at("shape")[0], cols = e.at("shape")[1];
    Mat mat(rows, cols);
    const json& data = e.at("data");
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) mat(r, c) = data[idx++];
    m.params[it.key()] = mat;
  }
  m.validate();
  return m;
}

}  // namespace snode
