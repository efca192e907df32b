#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "neurlp/ode_spec.hpp"

namespace neurlp {

enum class RowKind : uint8_t { equation, initial, taylor_fwd, taylor_bwd, central };
enum class ColKind : uint8_t { state, epsilon, slack };

struct RowInfo {
  RowKind kind;
  int dim = 0;
  int chain = 0;  // 0 = u, 1..r = auxiliary variable chains
  int t = 0;
  int order = 0;  // Taylor order j / initial-condition order; -1 otherwise
  int pair = -1;  // soft-pair ordinal; -1 for hard rows
  int sign = 0;   // +1: e - eps + xi+ = 0, -1: e + eps - xi- = 0, 0 hard
};

struct ColInfo {
  ColKind kind;
  int dim = 0, chain = 0, t = 0, order = 0;
  int pair = -1, sign = 0;  // slack columns: owning pair and row sign
};

enum class ParamKind : uint8_t { structural, coeff, rhs_p, init_p, step, phi };

// Originating parameter of one stored nonzero (or of one beta entry).
// coeff: a=dim b=t c=order. phi: a=term b=dim c=t. step: a=step index,
// factor = d(entry)/d(step). rhs_p: a=dim b=t. init_p: a=dim b=order.
struct ParamRef {
  ParamKind kind = ParamKind::structural;
  int a = 0, b = 0, c = 0;
  double factor = 0.0;
};

// Sparse equality system A z = beta with cost delta (one ε column), plus the
// provenance maps used for gradient scatter. Triplets may repeat a (row,col)
// slot when one entry sums contributions of two step parameters; CSR merges.
struct ConstraintSystem {
  // layout echo of the producing spec
  int order = 0, n_steps = 0, dim = 0, n_terms = 0;
  bool time_invariant = false, central_diff = false;
  std::vector<uint8_t> init_mask;

  int n_rows = 0, n_cols = 0;
  int n_state = 0, eps_col = 0, n_pairs = 0, n_hard = 0;
  uint64_t id = 0, version = 0;

  std::vector<int> tr, tcol;        // triplets
  std::vector<double> tval;
  std::vector<ParamRef> param_map;  // per triplet
  std::vector<double> beta;         // per row
  std::vector<ParamRef> beta_map;   // per row
  std::vector<double> delta;        // per column; 1 at eps_col
  std::vector<RowInfo> rows;
  std::vector<ColInfo> cols;

  std::vector<int> row_ptr, col_idx;  // CSR of A (duplicates merged)
  std::vector<double> csr_val;

  int chains() const { return 1 + n_terms; }
  int state_col(int x, int q, int t, int i) const {
    return ((x * chains() + q) * n_steps + t) * (order + 1) + i;
  }
  int slack_col(int pair, int sign) const {
    return eps_col + 1 + 2 * pair + (sign > 0 ? 0 : 1);
  }
  int equation_row(int x, int t) const { return x * n_steps + t; }
  int initial_row(int x, int i) const { return dim * n_steps + x * order + i; }
  int pair_row(int pair, int sign) const {
    return n_hard + 2 * pair + (sign > 0 ? 0 : 1);
  }
};

ConstraintSystem assemble(const OdeSpec& spec);           // fresh id, version 0
void assemble_into(const OdeSpec& spec, ConstraintSystem& cs);  // keeps id, ++version

int epsilon_column(const ConstraintSystem& cs);  // the unique delta==1 column

// Structural invariant check: single ε column, slacks in exactly one row each
// with entry ±1, every column referenced, row count bookkeeping.
std::vector<std::string> validate_system(const ConstraintSystem& cs);

// y = A x via CSR.
void spmv(const ConstraintSystem& cs, const double* x, double* y);

// Matrix-market-style triplet dump: header, then "row col value" (1-based),
// then beta and delta blocks; for cross-checking with external solvers.
void dump_system(const ConstraintSystem& cs, const std::string& path);

}  // namespace neurlp
