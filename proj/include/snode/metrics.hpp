#pragma once

#include <vector>

#include "snode/graph.hpp"

namespace snode {

struct DtwResult {
  double raw = 0.0;         // cumulative alignment cost
  double normalized = 0.0;  // raw / alignment path length
};

// Classic DP time warping with unit steps {(1,0),(0,1),(1,1)} and Euclidean
// point cost.
DtwResult dtwd(const std::vector<Vec>& p, const std::vector<Vec>& q);

// Max-of-mins over monotone couplings, Euclidean point cost.
double discrete_frechet(const std::vector<Vec>& p, const std::vector<Vec>& q);

// Average Hausdorff distance between two point sets; symmetric, works on
// sets of different sizes.
double ahd(const std::vector<Vec>& a, const std::vector<Vec>& b);

// Differentiable AHD over graph-attached points. Gradient flows only into
// the realized nearest-neighbour pairs (first minimal index on ties).
Var ahd(const std::vector<Var>& a, const std::vector<Var>& b);

enum class LossMode { AhdComposite, Mse };

// AhdComposite: L_H(rollout, demo) + k |z(t0) - z_demo(t0)|^2 (k = 0 gives
// the plain set loss). Mse: mean squared componentwise error, equal lengths.
Var training_loss(const std::vector<Var>& rollout,
                  const std::vector<Vec>& demo, double k, LossMode mode);

}  // namespace snode
