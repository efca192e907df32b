#include "neurlp/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "neurlp/rng.hpp"

namespace neurlp {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "t";
  for (int x = 0; x < traj.dim; ++x) out << ",dim" << x;
  out << "\n";
  for (int t = 0; t < traj.n; ++t) {
    out << format_g17(traj.times[t]);
    for (int x = 0; x < traj.dim; ++x) out << "," << format_g17(traj.at(t, x));
    out << "\n";
  }
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
  int cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  if (cols < 2) throw std::runtime_error("csv needs t plus >=1 dim: " + path);
  Trajectory traj;
  traj.dim = cols - 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      double v = std::stod(cell);
      if (c == 0)
        traj.times.push_back(v);
      else
        traj.values.push_back(v);
      ++c;
    }
    if (c != cols)
      throw std::runtime_error("ragged csv row in " + path + ": " + line);
  }
  traj.n = int(traj.times.size());
  return traj;
}

uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char buf[1 << 15];
  uint64_t h = 14695981039346656037ull;
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(buf, size_t(in.gcount()), h);
  return h;
}

uint64_t trajectory_content_hash(const Trajectory& traj) {
  uint64_t h = fnv1a(&traj.n, sizeof(traj.n));
  h = fnv1a(&traj.dim, sizeof(traj.dim), h);
  h = fnv1a(traj.times.data(), traj.times.size() * sizeof(double), h);
  h = fnv1a(traj.values.data(), traj.values.size() * sizeof(double), h);
  return h;
}

}  // namespace neurlp
