#pragma once
// Internal machinery shared by the forward solve and the backward pass.
//
// The QP min eps + gamma ||slack||^2 s.t. A z = beta collapses, after
// eliminating slacks and the hard rows (equations + initials), to a least
// squares problem over the remaining free state variables y:
//     minimize ||P y + q||^2,   e = P y + q the soft Taylor residuals,
// with eps* = -1/(2 gamma R) and all multipliers recoverable in closed form.
// N = P^T P is SPD and banded under the time-major y ordering used here.
#include <memory>
#include <string>
#include <vector>

#include "neurlp/kkt.hpp"

namespace neurlp::detail {

struct SparseVec {
  std::vector<int> idx;
  std::vector<double> val;
  void add(int i, double v) {
    idx.push_back(i);
    val.push_back(v);
  }
};

struct ReducedSystem {
  int ny = 0;
  std::vector<int> free_cols;  // y slot -> state column (time-major blocks)
  std::vector<int> col_to_y;   // state column -> y slot, -1 if not free
  // elimination of z[(x,0,t,d)] through the equation row:
  // z = elim_const[x*n+t] + <elim_lin[x*n+t], y>
  std::vector<double> elim_const;
  std::vector<SparseVec> elim_lin;
  std::vector<double> lead_coeff;  // c_d per (x,t)
  std::vector<SparseVec> P;        // per pair over y (sorted, compacted)
  std::vector<double> q;
  std::vector<SparseVec> B;        // per pair over state columns (original e)
  std::vector<double> diagN;
  // auxiliary chains carry a one-dimensional optimal family (no initial rows
  // pin them); a deterministic relative ridge on their columns selects the
  // small-norm member and keeps the solution differentiable in the matrix
  std::vector<double> ridge;
  int bandwidth = 0;
  bool ok = false;
  std::string error;
};

struct Factorization {
  SolvePath path = SolvePath::dense;
  std::vector<double> dense_l;  // ny*ny lower factor (dense path)
  std::vector<double> band_l;   // ny*(bw+1), band_l[i*(bw+1)+k] = L(i, i-k)
  int bw = 0;
  double jitter_used = 0.0;
  bool ok = false;
  std::string error;
};

struct SolveStat {
  bool ok = false;
  int iterations = 0;
  std::string message;
};

struct CacheEntry {
  uint64_t id = 0, version = 0;
  ReducedSystem rs;
  Factorization fact;  // fact.ok == false on the iterative path
  std::vector<double> y;
  std::vector<double> e_vals;
  SolvePath path = SolvePath::dense;
};

void build_reduced(const ConstraintSystem& cs, ReducedSystem& rs);
SolvePath choose_path(const ConstraintSystem& cs, const QpConfig& cfg);
void factorize(const ReducedSystem& rs, SolvePath path, const QpConfig& cfg,
               Factorization& f);
// N y = rhs through the factorization, or matrix-free CG when f is null/iterative.
SolveStat solve_normal(const ReducedSystem& rs, const Factorization* f,
                       const QpConfig& cfg, const std::vector<double>& rhs,
                       std::vector<double>& y, const std::vector<double>* warm);
void apply_normal(const ReducedSystem& rs, const double* x, double* out);

std::shared_ptr<const CacheEntry> cache_lookup(uint64_t id, uint64_t version);
std::shared_ptr<const CacheEntry> cache_lookup_any(uint64_t id);
void cache_publish(std::shared_ptr<CacheEntry> entry);

}  // namespace neurlp::detail
