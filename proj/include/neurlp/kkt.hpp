#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "neurlp/assembly.hpp"

namespace neurlp {

enum class SolvePath : uint8_t { dense, banded, iterative };

struct QpConfig {
  double gamma = 1.0;   // quadratic weight on slack columns
  long long dense_threshold = 4'000'000;  // max n_cols*n_rows for dense path
  double cg_tol = 1e-8;     // relative residual
  int cg_max_iter = 10000;
  double jitter = 1e-12;    // diagonal ladder base on factorization failure
  bool allow_banded = true; // direct banded path for long chains
  bool jacobi_precond = false;
  int workers = 0;          // solve_batch pool size; 0 = auto
};

struct Solution {
  std::vector<double> z;       // n_cols
  std::vector<double> lambda;  // n_rows
  double epsilon_value = 0.0;
  double residual_norm = 0.0;        // ||A z - beta||_2
  double max_taylor_residual = 0.0;  // max |e| over soft pairs
  SolvePath path = SolvePath::dense;
  bool ok = false;
  std::string message;
  int iterations = 0;  // CG only
  uint64_t system_id = 0, system_version = 0;

  // layout echo for the trajectory view
  int order = 0, n_steps = 0, dim = 0, n_terms = 0;

  // z_t^(i) of dimension x / auxiliary chain k.
  double value(int x, int t, int i) const {
    return z[size_t(((x * (1 + n_terms)) * n_steps + t)) * (order + 1) + i];
  }
  double aux(int k, int x, int t, int i) const {
    return z[size_t(((x * (1 + n_terms) + 1 + k) * n_steps + t)) * (order + 1) + i];
  }
};

Solution solve(const ConstraintSystem& cs, const QpConfig& cfg = {});

// Element-wise identical to a sequential loop of solve(); order preserved;
// per-element failures reported in the matching Solution.
std::vector<Solution> solve_batch(const std::vector<ConstraintSystem>& systems,
                                  const QpConfig& cfg = {});

// NEURLP_THREADS env > cfg.workers > hardware concurrency.
int effective_workers(const QpConfig& cfg);

}  // namespace neurlp
