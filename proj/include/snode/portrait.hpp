#pragma once

#include <string>

#include "snode/stable_field.hpp"

namespace snode {

struct PortraitConfig {
  double xmin = -1.0, xmax = 1.0;
  double ymin = -1.0, ymax = 1.0;
  int grid = 40;       // quiver resolution per axis
  int size_px = 800;   // square canvas
  void validate() const;
};

// SVG phase portrait of the stabilized latent field (2-D models): quiver on
// the grid, cells with L(x) > 0 shaded, latent attractors marked.
std::string render_portrait(const StableNodeModel& model,
                            const PortraitConfig& config);

}  // namespace snode
