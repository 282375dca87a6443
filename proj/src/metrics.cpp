#include "snode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace snode {

namespace {

void check_nonempty(const std::size_t a, const std::size_t b) {
  if (a == 0 || b == 0)
    throw std::invalid_argument("metric input must be nonempty");
}

double euclid(const Vec& a, const Vec& b) { return (a - b).norm(); }

}  // namespace

DtwResult dtwd(const std::vector<Vec>& p, const std::vector<Vec>& q) {
  check_nonempty(p.size(), q.size());
  const std::size_t n = p.size(), m = q.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // cost and path length of the best alignment ending at (i, j)
  std::vector<std::vector<double>> cost(n, std::vector<double>(m, inf));
  std::vector<std::vector<int>> len(n, std::vector<int>(m, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double d = euclid(p[i], q[j]);
      if (i == 0 && j == 0) {
        cost[i][j] = d;
        len[i][j] = 1;
        continue;
      }
      double best = inf;
      int blen = 0;
      if (i > 0 && cost[i - 1][j] < best) { best = cost[i - 1][j]; blen = len[i - 1][j]; }
      if (j > 0 && cost[i][j - 1] < best) { best = cost[i][j - 1]; blen = len[i][j - 1]; }
      if (i > 0 && j > 0 && cost[i - 1][j - 1] < best) {
        best = cost[i - 1][j - 1];
        blen = len[i - 1][j - 1];
      }
      cost[i][j] = best + d;
      len[i][j] = blen + 1;
    }
  }
  return {cost[n - 1][m - 1],
          cost[n - 1][m - 1] / static_cast<double>(len[n - 1][m - 1])};
}

double discrete_frechet(const std::vector<Vec>& p, const std::vector<Vec>& q) {
  check_nonempty(p.size(), q.size());
  const std::size_t n = p.size(), m = q.size();
  std::vector<std::vector<double>> ca(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double d = euclid(p[i], q[j]);
      if (i == 0 && j == 0)
        ca[i][j] = d;
      else if (i == 0)
        ca[i][j] = std::max(ca[i][j - 1], d);
      else if (j == 0)
        ca[i][j] = std::max(ca[i - 1][j], d);
      else
        ca[i][j] = std::max(
            std::min({ca[i - 1][j], ca[i][j - 1], ca[i - 1][j - 1]}), d);
    }
  }
  return ca[n - 1][m - 1];
}

double ahd(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  check_nonempty(a.size(), b.size());
  double sa = 0.0, sb = 0.0;
  for (const Vec& x : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& y : b) best = std::min(best, euclid(x, y));
    sa += best;
  }
  for (const Vec& y : b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& x : a) best = std::min(best, euclid(x, y));
    sb += best;
  }
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

Var ahd(const std::vector<Var>& a, const std::vector<Var>& b) {
  check_nonempty(a.size(), b.size());
  // shared pairwise distances keep the two directional terms exactly symmetric
  std::vector<std::vector<Var>> d(a.size(), std::vector<Var>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      d[i][j] = sqrt_(sumsq(sub(a[i], b[j])));

  Var acc_a{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    Var col = d[i][0];
    for (std::size_t j = 1; j < b.size(); ++j) col = concat(col, d[i][j]);
    Var m = min_over_axis(col);
    acc_a = (i == 0) ? m : add(acc_a, m);
  }
  Var acc_b{};
  for (std::size_t j = 0; j < b.size(); ++j) {
    Var col = d[0][j];
    for (std::size_t i = 1; i < a.size(); ++i) col = concat(col, d[i][j]);
    Var m = min_over_axis(col);
    acc_b = (j == 0) ? m : add(acc_b, m);
  }
  return add(scale(acc_a, 1.0 / static_cast<double>(a.size())),
             scale(acc_b, 1.0 / static_cast<double>(b.size())));
}

Var training_loss(const std::vector<Var>& rollout,
                  const std::vector<Vec>& demo, double k, LossMode mode) {
  check_nonempty(rollout.size(), demo.size());
  Graph* g = rollout.front().graph;
  if (mode == LossMode::Mse) {
    if (rollout.size() != demo.size())
      throw std::invalid_argument("mse loss requires equal lengths");
    Var acc{};
    for (std::size_t i = 0; i < rollout.size(); ++i) {
      Var e = mean(square(sub(rollout[i], g->constant(demo[i]))));
      acc = (i == 0) ? e : add(acc, e);
    }
    return scale(acc, 1.0 / static_cast<double>(rollout.size()));
  }
  std::vector<Var> demo_vars;
  demo_vars.reserve(demo.size());
  for (const Vec& p : demo) demo_vars.push_back(g->constant(p));
  Var loss = ahd(rollout, demo_vars);
  if (k != 0.0) {
    Var anchor = sumsq(sub(rollout.front(), demo_vars.front()));
    loss = add(loss, scale(anchor, k));
  }
  return loss;
}

}  // namespace snode
