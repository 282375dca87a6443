#include "snode/portrait.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace snode {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void PortraitConfig::validate() const {
  if (!(xmin < xmax) || !(ymin < ymax))
    throw std::invalid_argument("PortraitConfig: bounds must satisfy min < max");
  if (grid < 2) throw std::invalid_argument("PortraitConfig: grid must be >= 2");
  if (size_px < 16) throw std::invalid_argument("PortraitConfig: size_px too small");
}

std::string render_portrait(const StableNodeModel& model,
                            const PortraitConfig& config) {
  config.validate();
  model.validate();
  if (model.n_x != 2)
    throw std::invalid_argument("render_portrait: 2-D latent state required");

  FieldEvaluator ev(model);
  const int n = config.grid;
  const double w = config.size_px;
  const double cw = w / n;
  auto px = [&](double x) {
    return (x - config.xmin) / (config.xmax - config.xmin) * w;
  };
  // SVG y grows downward
  auto py = [&](double y) {
    return (config.ymax - y) / (config.ymax - config.ymin) * w;
  };

  std::vector<Vec> centers;
  std::vector<Vec> arrows;
  std::vector<bool> active;
  double max_norm = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Vec c(2);
      c[0] = config.xmin + (i + 0.5) * (config.xmax - config.xmin) / n;
      c[1] = config.ymin + (j + 0.5) * (config.ymax - config.ymin) / n;
      Vec f = ev.f_hat(c);
      centers.push_back(c);
      arrows.push_back(f);
      active.push_back(ev.l_value(c) > 0.0);
      max_norm = std::max(max_norm, f.norm());
    }
  }
  if (max_norm == 0.0) max_norm = 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << config.size_px
      << "\" height=\"" << config.size_px << "\" viewBox=\"0 0 "
      << config.size_px << " " << config.size_px << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // corrective-active region
  svg << "<g fill=\"#1b6b3a\" fill-opacity=\"0.35\" stroke=\"none\">\n";
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (!active[k]) continue;
    double x = px(centers[k][0]) - cw / 2;
    double y = py(centers[k][1]) - cw / 2;
    svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\""
        << fmt(cw) << "\" height=\"" << fmt(cw) << "\"/>\n";
  }
  svg << "</g>\n";

  // quiver: arrow length proportional to |f|, capped at one cell
  svg << "<g stroke=\"#333333\" stroke-width=\"1\">\n";
  for (std::size_t k = 0; k < centers.size(); ++k) {
    double nrm = arrows[k].norm();
    if (nrm == 0.0) continue;
    double len = 0.9 * cw * nrm / max_norm;
    double ux = arrows[k][0] / nrm, uy = arrows[k][1] / nrm;
    double x0 = px(centers[k][0]) - 0.5 * len * ux;
    double y0 = py(centers[k][1]) + 0.5 * len * uy;
    double x1 = px(centers[k][0]) + 0.5 * len * ux;
    double y1 = py(centers[k][1]) - 0.5 * len * uy;
    svg << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y0) << "\" x2=\""
        << fmt(x1) << "\" y2=\"" << fmt(y1) << "\"/>\n";
    // head: two short back-strokes
    double hx = -0.3 * len * ux, hy = 0.3 * len * uy;
    double pxn = -0.15 * len * uy, pyn = -0.15 * len * ux;
    svg << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\""
        << fmt(x1 + hx + pxn) << "\" y2=\"" << fmt(y1 + hy + pyn) << "\"/>\n";
    svg << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\""
        << fmt(x1 + hx - pxn) << "\" y2=\"" << fmt(y1 + hy - pyn) << "\"/>\n";
  }
  svg << "</g>\n";

  for (const Vec& a : ev.attractors_latent()) {
    svg << "<circle cx=\"" << fmt(px(a[0])) << "\" cy=\"" << fmt(py(a[1]))
        << "\" r=\"6\" fill=\"#c0392b\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  }

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace snode
