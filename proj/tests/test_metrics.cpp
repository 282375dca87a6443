#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "snode/metrics.hpp"

using namespace snode;

namespace {

std::mt19937_64 rng(31337);

Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}

std::vector<Vec> randset(int n, int dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) {
    Vec v(dim);
    for (int j = 0; j < dim; ++j) v[j] = nd(rng);
    out.push_back(v);
  }
  return out;
}

// brute force over explicit monotone paths: each path is a sequence of
// moves from {(1,0),(0,1),(1,1)} from (0,0) to (n-1,m-1)
void enumerate_paths(std::size_t i, std::size_t j, std::size_t n, std::size_t m,
                     const std::function<double(std::size_t, std::size_t)>& d,
                     double sum_so_far, double max_so_far, double& best_sum,
                     double& best_max) {
  sum_so_far += d(i, j);
  max_so_far = std::max(max_so_far, d(i, j));
  if (i == n - 1 && j == m - 1) {
    best_sum = std::min(best_sum, sum_so_far);
    best_max = std::min(best_max, max_so_far);
    return;
  }
  if (i + 1 < n)
    enumerate_paths(i + 1, j, n, m, d, sum_so_far, max_so_far, best_sum, best_max);
  if (j + 1 < m)
    enumerate_paths(i, j + 1, n, m, d, sum_so_far, max_so_far, best_sum, best_max);
  if (i + 1 < n && j + 1 < m)
    enumerate_paths(i + 1, j + 1, n, m, d, sum_so_far, max_so_far, best_sum,
                    best_max);
}

}  // namespace

TEST_CASE("ahd hand values") {
  std::vector<Vec> a = {v1(0)}, b = {v1(1)};
  CHECK(ahd(a, a) == 0.0);
  CHECK(ahd(a, b) == doctest::Approx(2.0).epsilon(1e-15));
  std::vector<Vec> c = {v1(0), v1(1)};
  CHECK(ahd(c, a) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("ahd symmetry, nonnegativity, permutation and duplication invariance") {
  for (int trial = 0; trial < 20; ++trial) {
    auto a = randset(5, 2), b = randset(8, 2);
    double ab = ahd(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab == ahd(b, a));  // exact symmetry

    auto ap = a;
    std::shuffle(ap.begin(), ap.end(), rng);
    CHECK(ahd(ap, b) == doctest::Approx(ab).epsilon(1e-14));

    std::vector<Vec> a2, b2;
    for (const Vec& p : a) {
      a2.push_back(p);
      a2.push_back(p);
    }
    for (const Vec& p : b) {
      b2.push_back(p);
      b2.push_back(p);
    }
    CHECK(ahd(a2, b2) == doctest::Approx(ab).epsilon(1e-14));
  }
}

TEST_CASE("ahd rejects empty sets") {
  std::vector<Vec> empty, one = {v1(0)};
  CHECK_THROWS_AS((void)ahd(empty, one), std::invalid_argument);
  CHECK_THROWS_AS((void)ahd(one, empty), std::invalid_argument);
}

TEST_CASE("differentiable ahd matches the numeric value and finite differences") {
  auto a = randset(4, 2), b = randset(6, 2);
  Graph g;
  std::vector<Var> av, bv;
  Vec flat(4 * 2);
  for (int i = 0; i < 4; ++i) flat.segment(i * 2, 2) = a[i];
  Var pa = g.param("a", flat);
  for (int i = 0; i < 4; ++i) av.push_back(split(pa, i * 2, 2));
  for (const Vec& p : b) bv.push_back(g.constant(p));
  Var loss = ahd(av, bv);
  CHECK(g.scalar(loss) == doctest::Approx(ahd(a, b)).epsilon(1e-14));

  GradMap grads = g.backward(loss);
  const Mat& grad = grads.at("a");
  for (int i = 0; i < flat.size(); ++i) {
    double h = 1e-6;
    auto perturbed = [&](double delta) {
      auto ap = a;
      ap[i / 2][i % 2] += delta;
      return ahd(ap, b);
    };
    double fd = (perturbed(h) - perturbed(-h)) / (2 * h);
    CHECK(grad(i, 0) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("ahd of identical Var sets is exactly zero with finite gradient") {
  auto a = randset(3, 2);
  Graph g;
  std::vector<Var> av;
  for (const Vec& p : a) av.push_back(g.param("p" + std::to_string(av.size()), p));
  Var loss = ahd(av, av);
  CHECK(g.scalar(loss) == 0.0);
  GradMap grads = g.backward(loss);  // sqrt at 0 uses the zero subgradient
  for (const auto& [k, v] : grads) CHECK(v.allFinite());
}

TEST_CASE("dtwd hand values") {
  std::vector<Vec> p = {v1(0), v1(0)}, q = {v1(1)};
  CHECK(dtwd(p, p).raw == 0.0);
  CHECK(dtwd(p, q).raw == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(dtwd(p, q).normalized == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("discrete frechet hand values") {
  std::vector<Vec> p = {v1(0)}, q = {v1(1)};
  CHECK(discrete_frechet(p, q) == 1.0);
  std::vector<Vec> p2 = {v1(0), v1(2)}, q2 = {v1(1)};
  CHECK(discrete_frechet(p2, q2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dtwd and discrete frechet match brute-force enumeration") {
  std::uniform_int_distribution<int> len(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = randset(len(rng), 2), q = randset(len(rng), 2);
    auto d = [&](std::size_t i, std::size_t j) {
      return (p[i] - q[j]).norm();
    };
    double best_sum = std::numeric_limits<double>::infinity();
    double best_max = std::numeric_limits<double>::infinity();
    enumerate_paths(0, 0, p.size(), q.size(), d, 0.0, 0.0, best_sum, best_max);
    CHECK(dtwd(p, q).raw == doctest::Approx(best_sum).epsilon(1e-12));
    CHECK(discrete_frechet(p, q) == doctest::Approx(best_max).epsilon(1e-12));
  }
}

TEST_CASE("training loss: ahd composite hand value and anchor term") {
  Graph g;
  std::vector<Var> rollout = {g.constant(v1(0)), g.constant(v1(1))};
  std::vector<Vec> demo = {v1(0)};
  // matching initial point: anchor contributes 0, AHD contributes 0.5
  CHECK(g.scalar(training_loss(rollout, demo, 15.0, LossMode::AhdComposite)) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // k = 0 reduces to plain AHD
  CHECK(g.scalar(training_loss(rollout, demo, 0.0, LossMode::AhdComposite)) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // shifted initial point: anchor k * 0.04
  std::vector<Var> shifted = {g.constant(v1(0.2)), g.constant(v1(1))};
  double base = g.scalar(training_loss(shifted, demo, 0.0, LossMode::AhdComposite));
  CHECK(g.scalar(training_loss(shifted, demo, 15.0, LossMode::AhdComposite)) ==
        doctest::Approx(base + 15.0 * 0.04).epsilon(1e-12));
}

TEST_CASE("training loss: identical trajectories give zero for any k") {
  auto pts = randset(5, 2);
  Graph g;
  std::vector<Var> rollout;
  for (const Vec& p : pts) rollout.push_back(g.constant(p));
  CHECK(g.scalar(training_loss(rollout, pts, 15.0, LossMode::AhdComposite)) == 0.0);
  CHECK(g.scalar(training_loss(rollout, pts, 15.0, LossMode::Mse)) == 0.0);
}

TEST_CASE("training loss: mse equals mean pointwise squared error") {
  auto a = randset(4, 3), b = randset(4, 3);
  Graph g;
  std::vector<Var> rollout;
  for (const Vec& p : a) rollout.push_back(g.constant(p));
  double expect = 0.0;
  for (int i = 0; i < 4; ++i) expect += (a[i] - b[i]).squaredNorm() / 3.0;
  expect /= 4.0;
  CHECK(g.scalar(training_loss(rollout, b, 0.0, LossMode::Mse)) ==
        doctest::Approx(expect).epsilon(1e-14));
  // length mismatch rejected in mse mode
  std::vector<Vec> shorter(b.begin(), b.end() - 1);
  CHECK_THROWS_AS(
      (void)training_loss(rollout, shorter, 0.0, LossMode::Mse),
      std::invalid_argument);
  CHECK_NOTHROW(
      (void)training_loss(rollout, shorter, 0.0, LossMode::AhdComposite));
}
