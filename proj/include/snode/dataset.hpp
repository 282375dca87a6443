#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snode/graph.hpp"

namespace snode {

// Time-stamped sequence of output-space points.
struct Trajectory {
  std::string name;
  std::vector<double> times;
  std::vector<Vec> points;
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  double duration() const { return times.back() - times.front(); }
  void validate() const;
};

struct DemoSet {
  std::vector<Trajectory> trajectories;
  int dim = 0;
  std::vector<Vec> attractors;  // optional annotations
  void validate() const;
};

// CSV schema per demonstration: header `t,z1,...,zn`, one row per sample,
// float64 decimal text, LF line endings. Files are read in name order.
DemoSet load_demos(const std::filesystem::path& dir);
Trajectory load_trajectory_csv(const std::filesystem::path& file);
std::string trajectory_csv(const Trajectory& traj);
void save_trajectory_csv(const std::filesystem::path& file,
                         const Trajectory& traj);

struct Window {
  int demo = 0;
  int start = 0;
  int length = 0;
};

// N_B windows of N_S consecutive samples with uniformly drawn start indices.
// The first sample of each window doubles as the observation y when the
// input map is the identity.
std::vector<Window> make_windows(const DemoSet& demos, int n_s, int n_b,
                                 std::uint64_t seed);

// Translates each group so every trajectory's final point coincides with the
// group's declared attractor, and returns the union with annotations.
DemoSet synth_multimodal(const std::vector<DemoSet>& groups,
                         const std::vector<Vec>& attractors);

}  // namespace snode
