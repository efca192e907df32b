#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace neurlp {

// Sampled multi-dimensional trajectory. values is row-major (n x dim).
struct Trajectory {
  int n = 0;
  int dim = 0;
  std::vector<double> times;   // n
  std::vector<double> values;  // n * dim

  double& at(int t, int x) { return values[size_t(t) * dim + x]; }
  double at(int t, int x) const { return values[size_t(t) * dim + x]; }
};

// CSV layout: header "t,dim0,dim1,..."; %.17g floats so round-trips are exact.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);  // throws runtime_error

uint64_t file_checksum(const std::string& path);  // FNV-1a over raw bytes

// Content hash independent of storage location; defines the canonical
// accumulation order for multi-trajectory training.
uint64_t trajectory_content_hash(const Trajectory& traj);

std::string format_g17(double v);

}  // namespace neurlp
