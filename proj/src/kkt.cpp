#include "neurlp/kkt.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "reduced.hpp"

namespace neurlp {

using detail::CacheEntry;

int effective_workers(const QpConfig& cfg) {
  if (const char* env = std::getenv("NEURLP_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  if (cfg.workers > 0) return cfg.workers;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

Solution solve(const ConstraintSystem& cs, const QpConfig& cfg) {
  Solution sol;
  sol.system_id = cs.id;
  sol.system_version = cs.version;
  sol.order = cs.order;
  sol.n_steps = cs.n_steps;
  sol.dim = cs.dim;
  sol.n_terms = cs.n_terms;

  auto entry = std::make_shared<CacheEntry>();
  entry->id = cs.id;
  entry->version = cs.version;
  detail::build_reduced(cs, entry->rs);
  if (!entry->rs.ok) {
    sol.message = entry->rs.error;
    return sol;
  }
  const detail::ReducedSystem& rs = entry->rs;

  SolvePath path = detail::choose_path(cs, cfg);
  sol.path = path;
  entry->path = path;
  detail::factorize(rs, path, cfg, entry->fact);
  if (path != SolvePath::iterative && !entry->fact.ok) {
    sol.message = entry->fact.error;
    return sol;
  }

  // rhs = -P^T q
  std::vector<double> rhs(rs.ny, 0.0);
  for (int p = 0; p < cs.n_pairs; ++p) {
    const detail::SparseVec& pr = rs.P[p];
    for (size_t k = 0; k < pr.idx.size(); ++k)
      rhs[pr.idx[k]] -= pr.val[k] * rs.q[p];
  }

  const std::vector<double>* warm = nullptr;
  std::shared_ptr<const CacheEntry> prev;
  if (path == SolvePath::iterative) {
    prev = detail::cache_lookup_any(cs.id);
    if (prev && int(prev->y.size()) == rs.ny) warm = &prev->y;
  }
  detail::SolveStat st =
      detail::solve_normal(rs, &entry->fact, cfg, rhs, entry->y, warm);
  sol.iterations = st.iterations;
  if (!st.ok && st.message.empty()) st.message = "reduced solve failed";

  const std::vector<double>& y = entry->y;
  entry->e_vals.assign(cs.n_pairs, 0.0);
  for (int p = 0; p < cs.n_pairs; ++p) {
    double e = rs.q[p];
    const detail::SparseVec& pr = rs.P[p];
    for (size_t k = 0; k < pr.idx.size(); ++k) e += pr.val[k] * y[pr.idx[k]];
    entry->e_vals[p] = e;
  }
  const std::vector<double>& e_vals = entry->e_vals;

  // full primal vector
  sol.z.assign(cs.n_cols, 0.0);
  for (int k = 0; k < rs.ny; ++k) sol.z[rs.free_cols[k]] = y[k];
  for (int x = 0; x < cs.dim; ++x)
    for (int i = 0; i < cs.order; ++i)
      sol.z[cs.state_col(x, 0, 0, i)] = cs.beta[cs.initial_row(x, i)];
  for (int x = 0; x < cs.dim; ++x)
    for (int t = 0; t < cs.n_steps; ++t) {
      size_t xt = size_t(x) * cs.n_steps + t;
      double v = rs.elim_const[xt];
      const detail::SparseVec& lin = rs.elim_lin[xt];
      for (size_t k = 0; k < lin.idx.size(); ++k) v += lin.val[k] * y[lin.idx[k]];
      sol.z[cs.state_col(x, 0, t, cs.order)] = v;
    }
  double eps = cs.n_pairs > 0 ? -1.0 / (2.0 * cfg.gamma * cs.n_pairs) : 0.0;
  sol.z[cs.eps_col] = eps;
  sol.epsilon_value = eps;
  for (int p = 0; p < cs.n_pairs; ++p) {
    sol.z[cs.slack_col(p, +1)] = eps - e_vals[p];
    sol.z[cs.slack_col(p, -1)] = e_vals[p] + eps;
  }

  // multipliers: v = 2 gamma B^T e over state columns; equation and initial
  // duals follow from stationarity at the eliminated/pinned columns.
  std::vector<double> v(cs.n_state, 0.0);
  for (int p = 0; p < cs.n_pairs; ++p) {
    const detail::SparseVec& b = rs.B[p];
    double scale = 2.0 * cfg.gamma * e_vals[p];
    for (size_t k = 0; k < b.idx.size(); ++k) v[b.idx[k]] += b.val[k] * scale;
  }
  sol.lambda.assign(cs.n_rows, 0.0);
  for (int x = 0; x < cs.dim; ++x) {
    for (int t = 0; t < cs.n_steps; ++t) {
      size_t xt = size_t(x) * cs.n_steps + t;
      sol.lambda[cs.equation_row(x, t)] =
          v[cs.state_col(x, 0, t, cs.order)] / rs.lead_coeff[xt];
    }
    for (int i = 0; i < cs.order; ++i) {
      // c_{i,0} of this dimension's t=0 equation row
      double ci0 = 0.0;
      int row = cs.equation_row(x, 0);
      int want = cs.state_col(x, 0, 0, i);
      for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k)
        if (cs.col_idx[k] == want) ci0 = cs.csr_val[k];
      sol.lambda[cs.initial_row(x, i)] =
          v[want] - ci0 * sol.lambda[cs.equation_row(x, 0)];
    }
  }
  for (int p = 0; p < cs.n_pairs; ++p) {
    sol.lambda[cs.pair_row(p, +1)] = cfg.gamma * (eps - e_vals[p]);
    sol.lambda[cs.pair_row(p, -1)] = -cfg.gamma * (e_vals[p] + eps);
  }

  std::vector<double> az(cs.n_rows);
  spmv(cs, sol.z.data(), az.data());
  double rn = 0.0;
  for (int row = 0; row < cs.n_rows; ++row) {
    double dr = az[row] - cs.beta[row];
    rn += dr * dr;
  }
  sol.residual_norm = std::sqrt(rn);
  double mt = 0.0;
  for (double e : e_vals) mt = std::max(mt, std::abs(e));
  sol.max_taylor_residual = mt;

  sol.ok = st.ok;
  sol.message = st.ok ? "" : st.message;
  detail::cache_publish(std::move(entry));
  return sol;
}

std::vector<Solution> solve_batch(const std::vector<ConstraintSystem>& systems,
                                  const QpConfig& cfg) {
  std::vector<Solution> out(systems.size());
  int workers = std::min<size_t>(effective_workers(cfg), systems.size());
  auto run_one = [&](size_t i) {
    try {
      out[i] = solve(systems[i], cfg);
    } catch (const std::exception& ex) {
      out[i] = Solution{};
      out[i].ok = false;
      out[i].message = ex.what();
    }
  };
  if (workers <= 1) {
    for (size_t i = 0; i < systems.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i; (i = next.fetch_add(1)) < systems.size();) run_one(i);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace neurlp
