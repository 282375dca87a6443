#include "snode/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace snode {

namespace {

[[noreturn]] void file_error(const std::filesystem::path& file, int line,
                             const std::string& what) {
  std::ostringstream os;
  os << file.string() << ":" << line << ": " << what;
  throw std::invalid_argument(os.str());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& file,
                    int line) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    file_error(file, line, "not a number: '" + s + "'");
  return v;
}

}  // namespace

void Trajectory::validate() const {
  if (times.size() != points.size() || times.size() < 2)
    throw std::invalid_argument("Trajectory: need >= 2 samples, |times| == |points|");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1])
      throw std::invalid_argument("Trajectory: times must be strictly increasing");
  for (const Vec& p : points)
    if (p.size() != points.front().size())
      throw std::invalid_argument("Trajectory: ragged points");
}

void DemoSet::validate() const {
  for (const Trajectory& t : trajectories) {
    t.validate();
    if (t.dim() != dim)
      throw std::invalid_argument("DemoSet: dimensionality mismatch in " + t.name);
  }
  for (const Vec& a : attractors)
    if (a.size() != dim)
      throw std::invalid_argument("DemoSet: attractor dimension mismatch");
}

Trajectory load_trajectory_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::invalid_argument("cannot open " + file.string());
  Trajectory traj;
  traj.name = file.stem().string();
  std::string line;
  int lineno = 0;
  int ncols = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      auto cols = split_csv(line);
      if (cols.size() < 2 || cols[0] != "t")
        file_error(file, lineno, "header must be t,z1,...,zn");
      for (std::size_t i = 1; i < cols.size(); ++i)
        if (cols[i] != "z" + std::to_string(i))
          file_error(file, lineno, "header must be t,z1,...,zn");
      ncols = static_cast<int>(cols.size());
      continue;
    }
    if (line.empty() && in.eof()) break;
    auto cols = split_csv(line);
    if (static_cast<int>(cols.size()) != ncols)
      file_error(file, lineno, "ragged row");
    double t = parse_double(cols[0], file, lineno);
    if (!traj.times.empty() && t <= traj.times.back())
      file_error(file, lineno, "time column not strictly increasing");
    Vec p(ncols - 1);
    for (int i = 1; i < ncols; ++i) p[i - 1] = parse_double(cols[i], file, lineno);
    traj.times.push_back(t);
    traj.points.push_back(std::move(p));
  }
  traj.validate();
  return traj;
}

std::string trajectory_csv(const Trajectory& traj) {
  traj.validate();
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= traj.dim(); ++i) out << ",z" << i;
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    put(traj.times[i]);
    for (int j = 0; j < traj.dim(); ++j) {
      out << ",";
      put(traj.points[i][j]);
    }
    out << "\n";
  }
  return out.str();
}

void save_trajectory_csv(const std::filesystem::path& file,
                         const Trajectory& traj) {
  std::string text = trajectory_csv(traj);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + file.string());
  out << text;
}

DemoSet load_demos(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::invalid_argument("no .csv demonstrations in " + dir.string());
  DemoSet set;
  for (const auto& f : files) set.trajectories.push_back(load_trajectory_csv(f));
  set.dim = set.trajectories.front().dim();
  set.validate();
  return set;
}

std::vector<Window> make_windows(const DemoSet& demos, int n_s, int n_b,
                                 std::uint64_t seed) {
  if (n_s < 2 || n_b < 1)
    throw std::invalid_argument("make_windows: n_s >= 2, n_b >= 1 required");
  for (const Trajectory& t : demos.trajectories)
    if (static_cast<int>(t.points.size()) < n_s)
      throw std::invalid_argument("demo shorter than window: " + t.name);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(
      0, static_cast<int>(demos.trajectories.size()) - 1);
  std::vector<Window> out;
  out.reserve(n_b);
  for (int i = 0; i < n_b; ++i) {
    int d = pick(rng);
    int maxstart = static_cast<int>(demos.trajectories[d].points.size()) - n_s;
    std::uniform_int_distribution<int> start(0, maxstart);
    out.push_back({d, start(rng), n_s});
  }
  return out;
}

DemoSet synth_multimodal(const std::vector<DemoSet>& groups,
                         const std::vector<Vec>& attractors) {
  if (groups.size() != attractors.size())
    throw std::invalid_argument("synth_multimodal: one attractor per group");
  DemoSet out;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const DemoSet& g = groups[gi];
    if (attractors[gi].size() != g.dim)
      throw std::invalid_argument("synth_multimodal: attractor dimension mismatch");
    if (out.dim == 0) out.dim = g.dim;
    if (g.dim != out.dim)
      throw std::invalid_argument("synth_multimodal: group dimension mismatch");
    for (Trajectory traj : g.trajectories) {
      Vec shift = attractors[gi] - traj.points.back();
      for (Vec& p : traj.points) p += shift;
      traj.name = "g" + std::to_string(gi) + "_" + traj.name;
      out.trajectories.push_back(std::move(traj));
    }
    out.attractors.push_back(attractors[gi]);
  }
  out.validate();
  return out;
}

}  // namespace snode
