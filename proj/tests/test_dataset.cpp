#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "snode/dataset.hpp"

using namespace snode;
namespace fs = std::filesystem;

namespace {

std::mt19937_64 rng(2024);

Trajectory random_traj(const std::string& name, int n, int dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> dt(0.01, 0.2);
  Trajectory t;
  t.name = name;
  double time = 0.0;
  for (int i = 0; i < n; ++i) {
    t.times.push_back(time);
    time += dt(rng);
    Vec p(dim);
    for (int j = 0; j < dim; ++j) p[j] = nd(rng);
    t.points.push_back(p);
  }
  return t;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("snode_test_" + std::to_string(rng()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("trajectory validation") {
  Trajectory t = random_traj("x", 5, 2);
  CHECK_NOTHROW(t.validate());
  Trajectory one = t;
  one.times.resize(1);
  one.points.resize(1);
  CHECK_THROWS_AS(one.validate(), std::invalid_argument);
  Trajectory dec = t;
  dec.times[2] = dec.times[1];
  CHECK_THROWS_AS(dec.validate(), std::invalid_argument);
  Trajectory ragged = t;
  ragged.points[3] = Vec::Zero(3);
  CHECK_THROWS_AS(ragged.validate(), std::invalid_argument);
}

TEST_CASE("csv round trip is bit exact") {
  TempDir dir;
  Trajectory t = random_traj("demo", 20, 3);
  // awkward values that expose precision loss
  t.points[0][0] = 1.0 / 3.0;
  t.points[1][1] = 1e-17;
  t.points[2][2] = -123456.789012345678;
  fs::path file = dir.path / "demo.csv";
  save_trajectory_csv(file, t);
  Trajectory back = load_trajectory_csv(file);
  CHECK(back.name == "demo");
  REQUIRE(back.times.size() == t.times.size());
  for (std::size_t i = 0; i < t.times.size(); ++i) {
    CHECK(back.times[i] == t.times[i]);
    CHECK(back.points[i] == t.points[i]);
  }
}

TEST_CASE("malformed csv files are rejected with location") {
  TempDir dir;
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir.path / name) << text;
    return dir.path / name;
  };
  // bad header
  CHECK_THROWS_WITH_AS(
      (void)load_trajectory_csv(write("h.csv", "time,z1\n0,1\n1,2\n")),
      doctest::Contains("header"), std::invalid_argument);
  CHECK_THROWS_AS(
      (void)load_trajectory_csv(write("h2.csv", "t,z1,z3\n0,1,1\n1,2,2\n")),
      std::invalid_argument);
  // decreasing time
  CHECK_THROWS_WITH_AS(
      (void)load_trajectory_csv(write("d.csv", "t,z1\n0,1\n1,2\n0.5,3\n")),
      doctest::Contains("increasing"), std::invalid_argument);
  // ragged row
  CHECK_THROWS_WITH_AS(
      (void)load_trajectory_csv(write("r.csv", "t,z1,z2\n0,1,2\n1,3\n")),
      doctest::Contains("ragged"), std::invalid_argument);
  // non-numeric cell names file and line
  try {
    (void)load_trajectory_csv(write("n.csv", "t,z1\n0,1\n1,abc\n"));
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("n.csv") != std::string::npos);
    CHECK(msg.find(":3") != std::string::npos);
  }
}

TEST_CASE("load_demos reads a directory in name order") {
  TempDir dir;
  for (int i = 0; i < 7; ++i)
    save_trajectory_csv(dir.path / ("demo" + std::to_string(i) + ".csv"),
                        random_traj("x", 10, 2));
  std::ofstream(dir.path / "notes.txt") << "ignored";
  DemoSet set = load_demos(dir.path);
  CHECK(set.trajectories.size() == 7);
  CHECK(set.dim == 2);
  for (int i = 0; i < 7; ++i)
    CHECK(set.trajectories[i].name == "demo" + std::to_string(i));
  CHECK_THROWS_AS((void)load_demos(dir.path / "missing"), std::invalid_argument);
}

TEST_CASE("make_windows: bounds, determinism, full-length window") {
  DemoSet set;
  set.dim = 2;
  set.trajectories = {random_traj("a", 30, 2), random_traj("b", 12, 2)};
  auto w1 = make_windows(set, 10, 50, 42);
  auto w2 = make_windows(set, 10, 50, 42);
  REQUIRE(w1.size() == 50);
  for (std::size_t i = 0; i < w1.size(); ++i) {
    CHECK(w1[i].demo == w2[i].demo);
    CHECK(w1[i].start == w2[i].start);
    int len = static_cast<int>(set.trajectories[w1[i].demo].points.size());
    CHECK(w1[i].start >= 0);
    CHECK(w1[i].start <= len - 10);
  }
  auto w3 = make_windows(set, 10, 50, 43);
  bool differs = false;
  for (std::size_t i = 0; i < w3.size(); ++i)
    differs = differs || w3[i].demo != w1[i].demo || w3[i].start != w1[i].start;
  CHECK(differs);

  // window of exactly the demo length has start 0
  DemoSet single;
  single.dim = 2;
  single.trajectories = {random_traj("a", 12, 2)};
  for (const Window& w : make_windows(single, 12, 10, 1)) {
    CHECK(w.start == 0);
    CHECK(w.length == 12);
  }
  CHECK_THROWS_AS((void)make_windows(single, 13, 10, 1), std::invalid_argument);
}

TEST_CASE("synth_multimodal translates groups onto their attractors") {
  DemoSet g1, g2;
  g1.dim = g2.dim = 2;
  for (int i = 0; i < 3; ++i) g1.trajectories.push_back(random_traj("a", 8, 2));
  for (int i = 0; i < 2; ++i) g2.trajectories.push_back(random_traj("b", 8, 2));
  Vec z1 = Vec::Zero(2);
  Vec z2(2);
  z2 << 0.0, -0.2;

  // single group with attractor equal to its own endpoint: identity
  DemoSet same = g1;
  Vec endpoint = g1.trajectories[0].points.back();
  DemoSet out1 = synth_multimodal({same}, {endpoint});
  CHECK((out1.trajectories[0].points[3] -
         (g1.trajectories[0].points[3] +
          (endpoint - g1.trajectories[0].points.back())))
            .norm() == 0.0);

  DemoSet out = synth_multimodal({g1, g2}, {z1, z2});
  CHECK(out.trajectories.size() == 5);
  REQUIRE(out.attractors.size() == 2);
  for (int i = 0; i < 3; ++i)
    CHECK((out.trajectories[i].points.back() - z1).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 3; i < 5; ++i)
    CHECK((out.trajectories[i].points.back() - z2).cwiseAbs().maxCoeff() < 1e-12);
  // translation preserves shape
  Vec diff_orig = g1.trajectories[0].points[5] - g1.trajectories[0].points[2];
  Vec diff_new = out.trajectories[0].points[5] - out.trajectories[0].points[2];
  CHECK((diff_orig - diff_new).norm() < 1e-12);

  CHECK_THROWS_AS((void)synth_multimodal({g1, g2}, {z1}), std::invalid_argument);
  CHECK_THROWS_AS((void)synth_multimodal({g1}, {Vec::Zero(3)}),
                  std::invalid_argument);
}
