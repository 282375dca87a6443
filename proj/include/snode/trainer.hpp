#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snode/dataset.hpp"
#include "snode/metrics.hpp"
#include "snode/odeint.hpp"
#include "snode/stable_field.hpp"

namespace snode {

struct AdamState {
  ParamMap m, v;
  long t = 0;
};

// Bias-corrected Adam update on a fresh snapshot of the parameters.
// Non-finite gradients skip the step and report false.
bool adam_step(ParamMap& params, const GradMap& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

enum class GradPath { Tape, Adjoint };

struct TrainConfig {
  int iterations = 200;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int n_b = 120;
  int n_s = 25;
  SolverConfig solver;  // sample_times are taken from each window's stamps
  LossMode loss = LossMode::AhdComposite;
  double k = 15.0;
  GradPath grad_path = GradPath::Tape;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // 0: no intermediate checkpoints
  std::filesystem::path checkpoint_dir;
  void validate() const;
};

struct TrainReport {
  std::vector<double> loss_history;
  double wall_seconds = 0.0;
  std::vector<std::string> events;
  std::vector<std::filesystem::path> checkpoints;
};

// Eq.-8-style loop: sample windows, set x0 = phi(y), integrate the
// stabilized field over the window times, map through psi, evaluate the
// loss, backpropagate, Adam step. Deterministic given seed.
TrainReport fit(StableNodeModel& model, const DemoSet& demos,
                const TrainConfig& config);

struct DemoEval {
  std::string name;
  double dtwd_raw = 0.0;
  double dtwd_norm = 0.0;
  double frechet = 0.0;
  double ahd = 0.0;
  double terminal_attractor_dist = 0.0;  // extended horizon, nearest attractor
  double terminal_lyapunov = 0.0;        // extended horizon, latent V
  bool solver_ok = true;
  std::string solver_error;
};

struct EvalReport {
  std::vector<DemoEval> demos;
  double mean_ahd = 0.0;
  double mean_dtwd = 0.0;
  double mean_frechet = 0.0;
};

// Rollout from each demo's initial point over its duration (metrics) and a
// 3x extended horizon (convergence checks), all in output space.
EvalReport evaluate(const StableNodeModel& model, const DemoSet& demos,
                    const SolverConfig& solver);

// Single-document JSON checkpoint, float64-exact round trip.
void save_model(const StableNodeModel& model, const std::filesystem::path& file);
StableNodeModel load_model(const std::filesystem::path& file);

// Atomic write helper shared with the CLI (temp file + rename).
void write_file_atomic(const std::filesystem::path& file,
                       const std::string& content);

}  // namespace snode
