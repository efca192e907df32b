#include "neurlp/assembly.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace neurlp {

namespace {

std::atomic<uint64_t> next_system_id{1};

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double ipow(double x, int e) {
  double r = 1.0;
  for (int k = 0; k < e; ++k) r *= x;
  return r;
}

struct Entry {
  int col;
  double val;
  ParamRef ref;
};

void build(const OdeSpec& spec, ConstraintSystem& cs) {
  const int d = spec.order, n = spec.n_steps, dims = spec.dim;
  const int r = int(spec.nonlinear_terms.size());
  cs.order = d;
  cs.n_steps = n;
  cs.dim = dims;
  cs.n_terms = r;
  cs.time_invariant = spec.time_invariant;
  cs.central_diff = spec.central_diff;
  cs.init_mask = spec.init_mask;

  cs.n_state = dims * (1 + r) * n * (d + 1);
  cs.eps_col = cs.n_state;
  int fwd_pairs = dims * (1 + r) * (n - 1) * d;
  int bwd_pairs = fwd_pairs;
  int cen_pairs = spec.central_diff && n >= 3 ? dims * (1 + r) * (n - 2) : 0;
  cs.n_pairs = fwd_pairs + bwd_pairs + cen_pairs;
  cs.n_hard = dims * n + dims * d;
  cs.n_rows = cs.n_hard + 2 * cs.n_pairs;
  cs.n_cols = cs.n_state + 1 + 2 * cs.n_pairs;

  cs.tr.clear();
  cs.tcol.clear();
  cs.tval.clear();
  cs.param_map.clear();
  cs.beta.assign(cs.n_rows, 0.0);
  cs.beta_map.assign(cs.n_rows, ParamRef{});
  cs.delta.assign(cs.n_cols, 0.0);
  cs.delta[cs.eps_col] = 1.0;
  cs.rows.assign(cs.n_rows, RowInfo{});
  cs.cols.assign(cs.n_cols, ColInfo{});

  for (int x = 0; x < dims; ++x)
    for (int q = 0; q <= r; ++q)
      for (int t = 0; t < n; ++t)
        for (int i = 0; i <= d; ++i)
          cs.cols[cs.state_col(x, q, t, i)] =
              ColInfo{ColKind::state, x, q, t, i, -1, 0};
  cs.cols[cs.eps_col] = ColInfo{ColKind::epsilon, 0, 0, 0, 0, -1, 0};

  auto put = [&](int row, int col, double val, ParamRef ref) {
    cs.tr.push_back(row);
    cs.tcol.push_back(col);
    cs.tval.push_back(val);
    cs.param_map.push_back(ref);
  };

  // equation rows: sum_i c_{i,t} z_t^i + sum_k phi_{k,t} nu_{k,t}^0 = b_t.
  // exact-zero coefficients are dropped (and carry no gradient while zero).
  for (int x = 0; x < dims; ++x)
    for (int t = 0; t < n; ++t) {
      int row = cs.equation_row(x, t);
      cs.rows[row] = RowInfo{RowKind::equation, x, 0, t, -1, -1, 0};
      for (int i = 0; i <= d; ++i) {
        double c = spec.coeff(x, t, i);
        if (c == 0.0) continue;
        put(row, cs.state_col(x, 0, t, i), c,
            ParamRef{ParamKind::coeff, x, t, i, 1.0});
      }
      for (int k = 0; k < r; ++k) {
        double p = spec.phi_at(k, t);
        if (p == 0.0) continue;
        put(row, cs.state_col(x, 1 + k, t, 0), p,
            ParamRef{ParamKind::phi, k, x, t, 1.0});
      }
      cs.beta[row] = spec.rhs_at(x, t);
      cs.beta_map[row] = ParamRef{ParamKind::rhs_p, x, t, 0, 1.0};
    }

  // initial rows are always assembled; init_mask only marks trainability.
  for (int x = 0; x < dims; ++x)
    for (int i = 0; i < d; ++i) {
      int row = cs.initial_row(x, i);
      cs.rows[row] = RowInfo{RowKind::initial, x, 0, 0, i, -1, 0};
      put(row, cs.state_col(x, 0, 0, i), 1.0, ParamRef{});
      cs.beta[row] = spec.init(x, i);
      cs.beta_map[row] = ParamRef{ParamKind::init_p, x, i, 0, 1.0};
    }

  // soft pairs: |e| <= eps becomes e - eps + xi+ = 0 and e + eps - xi- = 0.
  int pair = 0;
  std::vector<Entry> e;
  auto emit_pair = [&](RowKind kind, int x, int q, int t, int j) {
    int row_p = cs.pair_row(pair, +1);
    int row_m = cs.pair_row(pair, -1);
    cs.rows[row_p] = RowInfo{kind, x, q, t, j, pair, +1};
    cs.rows[row_m] = RowInfo{kind, x, q, t, j, pair, -1};
    for (const Entry& en : e) put(row_p, en.col, en.val, en.ref);
    put(row_p, cs.eps_col, -1.0, ParamRef{});
    put(row_p, cs.slack_col(pair, +1), 1.0, ParamRef{});
    for (const Entry& en : e) put(row_m, en.col, en.val, en.ref);
    put(row_m, cs.eps_col, 1.0, ParamRef{});
    put(row_m, cs.slack_col(pair, -1), -1.0, ParamRef{});
    cs.cols[cs.slack_col(pair, +1)] =
        ColInfo{ColKind::slack, x, q, t, j, pair, +1};
    cs.cols[cs.slack_col(pair, -1)] =
        ColInfo{ColKind::slack, x, q, t, j, pair, -1};
    ++pair;
  };

  // forward Taylor: order-j expansion over the stack up to order d,
  // e = sum_{i=j..d} s^i/(i-j)! z_t^i - s^j z_{t+1}^j.
  for (int x = 0; x < dims; ++x)
    for (int q = 0; q <= r; ++q)
      for (int t = 0; t + 1 < n; ++t) {
        double s = spec.steps[t];
        for (int j = 0; j < d; ++j) {
          e.clear();
          for (int i = j; i <= d; ++i) {
            double f = factorial(i - j);
            ParamRef ref{};
            if (i > 0)
              ref = ParamRef{ParamKind::step, t, 0, 0, i * ipow(s, i - 1) / f};
            e.push_back({cs.state_col(x, q, t, i), ipow(s, i) / f, ref});
          }
          ParamRef nref{};
          if (j > 0) nref = ParamRef{ParamKind::step, t, 0, 0, -j * ipow(s, j - 1)};
          e.push_back({cs.state_col(x, q, t + 1, j), -ipow(s, j), nref});
          emit_pair(RowKind::taylor_fwd, x, q, t, j);
        }
      }

  // backward Taylor at point t over step s_{t-1}:
  // e = sum_{i=j..d} (-1)^{i-j} s^i/(i-j)! z_t^i - s^j z_{t-1}^j.
  for (int x = 0; x < dims; ++x)
    for (int q = 0; q <= r; ++q)
      for (int t = 1; t < n; ++t) {
        double s = spec.steps[t - 1];
        for (int j = 0; j < d; ++j) {
          e.clear();
          for (int i = j; i <= d; ++i) {
            double f = factorial(i - j);
            double sgn = (i - j) % 2 == 0 ? 1.0 : -1.0;
            ParamRef ref{};
            if (i > 0)
              ref = ParamRef{ParamKind::step, t - 1, 0, 0,
                             sgn * i * ipow(s, i - 1) / f};
            e.push_back({cs.state_col(x, q, t, i), sgn * ipow(s, i) / f, ref});
          }
          ParamRef nref{};
          if (j > 0)
            nref = ParamRef{ParamKind::step, t - 1, 0, 0, -j * ipow(s, j - 1)};
          e.push_back({cs.state_col(x, q, t - 1, j), -ipow(s, j), nref});
          emit_pair(RowKind::taylor_bwd, x, q, t, j);
        }
      }

  // central difference on the highest order (opt-in):
  // e = (s_{t-1}+s_t) z_t^d - z_{t+1}^{d-1} + z_{t-1}^{d-1}.
  if (spec.central_diff && n >= 3)
    for (int x = 0; x < dims; ++x)
      for (int q = 0; q <= r; ++q)
        for (int t = 1; t + 1 < n; ++t) {
          e.clear();
          e.push_back({cs.state_col(x, q, t, d), spec.steps[t - 1],
                       ParamRef{ParamKind::step, t - 1, 0, 0, 1.0}});
          e.push_back({cs.state_col(x, q, t, d), spec.steps[t],
                       ParamRef{ParamKind::step, t, 0, 0, 1.0}});
          e.push_back({cs.state_col(x, q, t + 1, d - 1), -1.0, ParamRef{}});
          e.push_back({cs.state_col(x, q, t - 1, d - 1), 1.0, ParamRef{}});
          emit_pair(RowKind::central, x, q, t, d);
        }

  // CSR with duplicate (row,col) slots merged.
  cs.row_ptr.assign(cs.n_rows + 1, 0);
  for (int row : cs.tr) ++cs.row_ptr[row + 1];
  for (int i = 0; i < cs.n_rows; ++i) cs.row_ptr[i + 1] += cs.row_ptr[i];
  std::vector<int> cursor(cs.row_ptr.begin(), cs.row_ptr.end() - 1);
  std::vector<int> ci(cs.tr.size());
  std::vector<double> cv(cs.tr.size());
  for (size_t k = 0; k < cs.tr.size(); ++k) {
    int slot = cursor[cs.tr[k]]++;
    ci[slot] = cs.tcol[k];
    cv[slot] = cs.tval[k];
  }
  cs.col_idx.clear();
  cs.csr_val.clear();
  cs.col_idx.reserve(ci.size());
  cs.csr_val.reserve(ci.size());
  std::vector<int> new_ptr(cs.n_rows + 1, 0);
  std::vector<std::pair<int, double>> rowbuf;
  for (int row = 0; row < cs.n_rows; ++row) {
    rowbuf.clear();
    for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k)
      rowbuf.emplace_back(ci[k], cv[k]);
    std::sort(rowbuf.begin(), rowbuf.end());
    for (size_t k = 0; k < rowbuf.size(); ++k) {
      if (k > 0 && rowbuf[k].first == rowbuf[k - 1].first)
        cs.csr_val.back() += rowbuf[k].second;
      else {
        cs.col_idx.push_back(rowbuf[k].first);
        cs.csr_val.push_back(rowbuf[k].second);
      }
    }
    new_ptr[row + 1] = int(cs.col_idx.size());
  }
  cs.row_ptr = std::move(new_ptr);
}

}  // namespace

ConstraintSystem assemble(const OdeSpec& spec) {
  ConstraintSystem cs;
  cs.id = next_system_id.fetch_add(1);
  cs.version = 0;
  build(spec, cs);
  return cs;
}

void assemble_into(const OdeSpec& spec, ConstraintSystem& cs) {
  if (cs.id == 0) cs.id = next_system_id.fetch_add(1);
  ++cs.version;
  build(spec, cs);
}

int epsilon_column(const ConstraintSystem& cs) { return cs.eps_col; }

std::vector<std::string> validate_system(const ConstraintSystem& cs) {
  std::vector<std::string> errs;
  int eps_count = 0;
  for (int c = 0; c < cs.n_cols; ++c) {
    if (cs.delta[c] == 1.0)
      ++eps_count;
    else if (cs.delta[c] != 0.0)
      errs.push_back("delta has entry other than 0/1 at column " +
                     std::to_string(c));
  }
  if (eps_count != 1)
    errs.push_back("expected exactly one epsilon column, found " +
                   std::to_string(eps_count));

  std::vector<int> refs(cs.n_cols, 0);
  std::vector<int> slack_rows(cs.n_cols, 0);
  for (size_t k = 0; k < cs.tr.size(); ++k) {
    ++refs[cs.tcol[k]];
    if (cs.cols[cs.tcol[k]].kind == ColKind::slack) {
      ++slack_rows[cs.tcol[k]];
      if (cs.tval[k] != 1.0 && cs.tval[k] != -1.0)
        errs.push_back("slack column " + std::to_string(cs.tcol[k]) +
                       " entry not +-1");
    }
  }
  for (int c = 0; c < cs.n_cols; ++c) {
    if (refs[c] == 0)
      errs.push_back("column " + std::to_string(c) + " unreferenced");
    if (cs.cols[c].kind == ColKind::slack && slack_rows[c] != 1)
      errs.push_back("slack column " + std::to_string(c) +
                     " appears in " + std::to_string(slack_rows[c]) + " rows");
  }

  int by_kind[5] = {0, 0, 0, 0, 0};
  for (const RowInfo& ri : cs.rows) ++by_kind[int(ri.kind)];
  int total = by_kind[0] + by_kind[1] + by_kind[2] + by_kind[3] + by_kind[4];
  if (total != cs.n_rows)
    errs.push_back("row kind counts do not sum to n_rows");
  return errs;
}

void spmv(const ConstraintSystem& cs, const double* x, double* y) {
  for (int row = 0; row < cs.n_rows; ++row) {
    double acc = 0.0;
    for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k)
      acc += cs.csr_val[k] * x[cs.col_idx[k]];
    y[row] = acc;
  }
}

void dump_system(const ConstraintSystem& cs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << "% A triplets, then beta, then delta\n";
  out << cs.n_rows << " " << cs.n_cols << " " << cs.col_idx.size() << "\n";
  char buf[64];
  for (int row = 0; row < cs.n_rows; ++row)
    for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k) {
      std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", row + 1,
                    cs.col_idx[k] + 1, cs.csr_val[k]);
      out << buf;
    }
  out << "beta " << cs.n_rows << "\n";
  for (double b : cs.beta) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", b);
    out << buf;
  }
  out << "delta " << cs.n_cols << "\n";
  for (double dv : cs.delta) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", dv);
    out << buf;
  }
}

}  // namespace neurlp
