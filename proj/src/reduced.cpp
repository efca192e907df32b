#include "reduced.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_map>

namespace neurlp::detail {

namespace {

// large enough that the soft-mode Cholesky pivot sits well above roundoff
// (solution noise ~ eps * ||N|| / ridge), small enough to leave the
// trajectory and the flat-direction objective untouched at tolerance level
constexpr double kAuxRidge = 1e-6;

void sort_compact(SparseVec& v) {
  const size_t m = v.idx.size();
  std::vector<std::pair<int, double>> tmp(m);
  for (size_t k = 0; k < m; ++k) tmp[k] = {v.idx[k], v.val[k]};
  std::sort(tmp.begin(), tmp.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  v.idx.clear();
  v.val.clear();
  for (size_t k = 0; k < m; ++k) {
    if (!v.idx.empty() && v.idx.back() == tmp[k].first)
      v.val.back() += tmp[k].second;
    else
      v.add(tmp[k].first, tmp[k].second);
  }
}

}  // namespace

void build_reduced(const ConstraintSystem& cs, ReducedSystem& rs) {
  const int d = cs.order, n = cs.n_steps, dims = cs.dim, r = cs.n_terms;
  rs = ReducedSystem{};

  rs.col_to_y.assign(cs.n_state, -1);
  for (int t = 0; t < n; ++t)  // time-major keeps N banded
    for (int x = 0; x < dims; ++x)
      for (int qc = 0; qc <= r; ++qc)
        for (int i = 0; i <= d; ++i) {
          if (qc == 0 && i == d) continue;          // eliminated via equation row
          if (qc == 0 && t == 0 && i < d) continue;  // pinned initial
          int c = cs.state_col(x, qc, t, i);
          rs.col_to_y[c] = int(rs.free_cols.size());
          rs.free_cols.push_back(c);
        }
  rs.ny = int(rs.free_cols.size());

  rs.elim_const.assign(size_t(dims) * n, 0.0);
  rs.elim_lin.assign(size_t(dims) * n, {});
  rs.lead_coeff.assign(size_t(dims) * n, 0.0);
  for (int x = 0; x < dims; ++x)
    for (int t = 0; t < n; ++t) {
      int row = cs.equation_row(x, t);
      int lead = cs.state_col(x, 0, t, d);
      double cd = 0.0, maxabs = 0.0;
      for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k) {
        maxabs = std::max(maxabs, std::abs(cs.csr_val[k]));
        if (cs.col_idx[k] == lead) cd = cs.csr_val[k];
      }
      if (cd == 0.0 || std::abs(cd) < 1e-12 * maxabs) {
        rs.error = "zero leading coefficient (dim " + std::to_string(x) +
                   ", t " + std::to_string(t) + ")";
        return;
      }
      size_t xt = size_t(x) * n + t;
      rs.lead_coeff[xt] = cd;
      double cst = cs.beta[row] / cd;
      SparseVec lin;
      for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k) {
        int c = cs.col_idx[k];
        if (c == lead) continue;
        double v = cs.csr_val[k];
        int y = rs.col_to_y[c];
        if (y >= 0) {
          lin.add(y, -v / cd);
        } else {
          // pinned initial of this dimension; its value is the beta of its row
          const ColInfo& ci = cs.cols[c];
          cst -= v / cd * cs.beta[cs.initial_row(ci.dim, ci.order)];
        }
      }
      sort_compact(lin);
      rs.elim_const[xt] = cst;
      rs.elim_lin[xt] = std::move(lin);
    }

  rs.P.assign(cs.n_pairs, {});
  rs.q.assign(cs.n_pairs, 0.0);
  rs.B.assign(cs.n_pairs, {});
  for (int p = 0; p < cs.n_pairs; ++p) {
    int row = cs.pair_row(p, +1);
    SparseVec& pr = rs.P[p];
    for (int k = cs.row_ptr[row]; k < cs.row_ptr[row + 1]; ++k) {
      int c = cs.col_idx[k];
      if (c >= cs.n_state) continue;  // eps / slack
      double v = cs.csr_val[k];
      rs.B[p].add(c, v);
      int y = rs.col_to_y[c];
      if (y >= 0) {
        pr.add(y, v);
        continue;
      }
      const ColInfo& ci = cs.cols[c];
      if (ci.chain == 0 && ci.order == d) {
        size_t xt = size_t(ci.dim) * n + ci.t;
        rs.q[p] += v * rs.elim_const[xt];
        const SparseVec& lin = rs.elim_lin[xt];
        for (size_t m = 0; m < lin.idx.size(); ++m)
          pr.add(lin.idx[m], v * lin.val[m]);
      } else {
        rs.q[p] += v * cs.beta[cs.initial_row(ci.dim, ci.order)];
      }
    }
    sort_compact(pr);
  }

  rs.diagN.assign(rs.ny, 0.0);
  for (const SparseVec& pr : rs.P) {
    if (!pr.idx.empty())
      rs.bandwidth = std::max(rs.bandwidth, pr.idx.back() - pr.idx.front());
    for (size_t a = 0; a < pr.idx.size(); ++a)
      rs.diagN[pr.idx[a]] += pr.val[a] * pr.val[a];
  }
  // the ridge must not depend on any trainable parameter: the adjoint grows
  // like 1/ridge along the family, so a parameter-dependent scale would leak
  // an untracked term into every gradient
  rs.ridge.assign(rs.ny, 0.0);
  for (int y = 0; y < rs.ny; ++y)
    if (cs.cols[rs.free_cols[y]].chain > 0) rs.ridge[y] = kAuxRidge;
  rs.ok = true;
}

SolvePath choose_path(const ConstraintSystem& cs, const QpConfig& cfg) {
  if (1LL * cs.n_cols * cs.n_rows <= cfg.dense_threshold) return SolvePath::dense;
  if (cfg.allow_banded) return SolvePath::banded;
  return SolvePath::iterative;
}

namespace {

bool banded_cholesky(std::vector<double>& band, int ny, int bw) {
  auto at = [&](int i, int k) -> double& { return band[size_t(i) * (bw + 1) + k]; };
  for (int j = 0; j < ny; ++j) {
    double djj = at(j, 0);
    if (!(djj > 0.0) || !std::isfinite(djj)) return false;
    double ljj = std::sqrt(djj);
    at(j, 0) = ljj;
    int last = std::min(j + bw, ny - 1);
    for (int i = j + 1; i <= last; ++i) at(i, i - j) /= ljj;
    for (int c = j + 1; c <= last; ++c) {
      double lcj = at(c, c - j);
      if (lcj == 0.0) continue;
      for (int i = c; i <= last; ++i) at(i, i - c) -= at(i, i - j) * lcj;
    }
  }
  return true;
}

void banded_solve(const std::vector<double>& band, int ny, int bw,
                  const std::vector<double>& rhs, std::vector<double>& out) {
  auto at = [&](int i, int k) { return band[size_t(i) * (bw + 1) + k]; };
  out = rhs;
  for (int i = 0; i < ny; ++i) {
    double acc = out[i];
    int first = std::max(0, i - bw);
    for (int j = first; j < i; ++j) acc -= at(i, i - j) * out[j];
    out[i] = acc / at(i, 0);
  }
  for (int i = ny - 1; i >= 0; --i) {
    double acc = out[i];
    int last = std::min(ny - 1, i + bw);
    for (int j = i + 1; j <= last; ++j) acc -= at(j, j - i) * out[j];
    out[i] = acc / at(i, 0);
  }
}

}  // namespace

void factorize(const ReducedSystem& rs, SolvePath path, const QpConfig& cfg,
               Factorization& f) {
  f = Factorization{};
  f.path = path;
  const int ny = rs.ny;
  if (path == SolvePath::iterative) return;

  if (path == SolvePath::dense) {
    Eigen::MatrixXd N = Eigen::MatrixXd::Zero(ny, ny);
    for (const SparseVec& pr : rs.P)
      for (size_t a = 0; a < pr.idx.size(); ++a)
        for (size_t b = 0; b < pr.idx.size(); ++b)
          N(pr.idx[a], pr.idx[b]) += pr.val[a] * pr.val[b];
    for (int i = 0; i < ny; ++i) N(i, i) += rs.ridge[i];
    for (int attempt = 0; attempt <= 4; ++attempt) {
      double jit = attempt == 0 ? 0.0 : cfg.jitter * std::pow(10.0, attempt - 1);
      Eigen::MatrixXd Nj = N;
      if (jit > 0.0) Nj.diagonal().array() += jit;
      Eigen::LLT<Eigen::MatrixXd> llt(Nj);
      if (llt.info() == Eigen::Success) {
        Eigen::MatrixXd L = llt.matrixL();
        f.dense_l.assign(L.data(), L.data() + size_t(ny) * ny);
        f.jitter_used = jit;
        f.ok = true;
        return;
      }
    }
    f.error = "dense factorization failed after jitter ladder";
    return;
  }

  const int bw = rs.bandwidth;
  std::vector<double> base(size_t(ny) * (bw + 1), 0.0);
  for (const SparseVec& pr : rs.P)
    for (size_t a = 0; a < pr.idx.size(); ++a)
      for (size_t b = 0; b <= a; ++b) {
        int i = pr.idx[a], j = pr.idx[b];  // i >= j after sort
        base[size_t(i) * (bw + 1) + (i - j)] += pr.val[a] * pr.val[b];
      }
  for (int i = 0; i < ny; ++i) base[size_t(i) * (bw + 1)] += rs.ridge[i];
  for (int attempt = 0; attempt <= 4; ++attempt) {
    double jit = attempt == 0 ? 0.0 : cfg.jitter * std::pow(10.0, attempt - 1);
    std::vector<double> band = base;
    if (jit > 0.0)
      for (int i = 0; i < ny; ++i) band[size_t(i) * (bw + 1)] += jit;
    if (banded_cholesky(band, ny, bw)) {
      f.band_l = std::move(band);
      f.bw = bw;
      f.jitter_used = jit;
      f.ok = true;
      return;
    }
  }
  f.error = "banded factorization failed after jitter ladder";
}

void apply_normal(const ReducedSystem& rs, const double* x, double* out) {
  std::fill(out, out + rs.ny, 0.0);
  for (const SparseVec& pr : rs.P) {
    double s = 0.0;
    for (size_t k = 0; k < pr.idx.size(); ++k) s += pr.val[k] * x[pr.idx[k]];
    for (size_t k = 0; k < pr.idx.size(); ++k) out[pr.idx[k]] += pr.val[k] * s;
  }
  for (int i = 0; i < rs.ny; ++i) out[i] += rs.ridge[i] * x[i];
}

SolveStat solve_normal(const ReducedSystem& rs, const Factorization* f,
                       const QpConfig& cfg, const std::vector<double>& rhs,
                       std::vector<double>& y, const std::vector<double>* warm) {
  SolveStat st;
  const int ny = rs.ny;
  y.assign(ny, 0.0);
  if (ny == 0) {
    st.ok = true;
    return st;
  }

  if (f && f->ok && f->path == SolvePath::dense) {
    const std::vector<double>& L = f->dense_l;  // column-major lower factor
    y = rhs;
    for (int j = 0; j < ny; ++j) {
      y[j] /= L[size_t(j) * ny + j];
      double yj = y[j];
      for (int i = j + 1; i < ny; ++i) y[i] -= L[size_t(j) * ny + i] * yj;
    }
    for (int j = ny - 1; j >= 0; --j) {
      double acc = y[j];
      for (int i = j + 1; i < ny; ++i) acc -= L[size_t(j) * ny + i] * y[i];
      y[j] = acc / L[size_t(j) * ny + j];
    }
    st.ok = true;
    return st;
  }
  if (f && f->ok && f->path == SolvePath::banded) {
    banded_solve(f->band_l, ny, f->bw, rhs, y);
    st.ok = true;
    return st;
  }

  // preconditioned conjugate gradient, matrix-free through P
  std::vector<double> r(ny), z(ny), p(ny), Ap(ny);
  if (warm && int(warm->size()) == ny) y = *warm;
  apply_normal(rs, y.data(), Ap.data());
  double rhs_norm = 0.0;
  for (int i = 0; i < ny; ++i) {
    r[i] = rhs[i] - Ap[i];
    rhs_norm += rhs[i] * rhs[i];
  }
  rhs_norm = std::sqrt(rhs_norm);
  double tol = cfg.cg_tol * std::max(rhs_norm, 1e-300);
  auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
    if (!cfg.jacobi_precond) {
      out = in;
      return;
    }
    for (int i = 0; i < ny; ++i) {
      double dii = rs.diagN[i] + rs.ridge[i];
      out[i] = in[i] / (dii > 0.0 ? dii : 1.0);
    }
  };
  precond(r, z);
  p = z;
  double rz = 0.0, rnorm = 0.0;
  for (int i = 0; i < ny; ++i) {
    rz += r[i] * z[i];
    rnorm += r[i] * r[i];
  }
  rnorm = std::sqrt(rnorm);
  int it = 0;
  while (rnorm > tol && it < cfg.cg_max_iter) {
    apply_normal(rs, p.data(), Ap.data());
    double pAp = 0.0;
    for (int i = 0; i < ny; ++i) pAp += p[i] * Ap[i];
    if (!(pAp > 0.0)) break;  // numerically semidefinite direction
    double alpha = rz / pAp;
    rnorm = 0.0;
    for (int i = 0; i < ny; ++i) {
      y[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
      rnorm += r[i] * r[i];
    }
    rnorm = std::sqrt(rnorm);
    precond(r, z);
    double rz_new = 0.0;
    for (int i = 0; i < ny; ++i) rz_new += r[i] * z[i];
    double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < ny; ++i) p[i] = z[i] + beta * p[i];
    ++it;
  }
  st.iterations = it;
  st.ok = rnorm <= tol;
  if (!st.ok)
    st.message = "cg: no convergence in " + std::to_string(it) +
                 " iterations (residual " + std::to_string(rnorm) + ")";
  return st;
}

namespace {
std::mutex cache_mutex;
std::unordered_map<uint64_t, std::shared_ptr<const CacheEntry>> cache_map;
}  // namespace

std::shared_ptr<const CacheEntry> cache_lookup(uint64_t id, uint64_t version) {
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache_map.find(id);
  if (it == cache_map.end() || it->second->version != version) return nullptr;
  return it->second;
}

std::shared_ptr<const CacheEntry> cache_lookup_any(uint64_t id) {
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache_map.find(id);
  return it == cache_map.end() ? nullptr : it->second;
}

void cache_publish(std::shared_ptr<CacheEntry> entry) {
  std::lock_guard<std::mutex> lock(cache_mutex);
  if (cache_map.size() > 128) {
    // crude pressure valve: drop entries for other systems
    for (auto it = cache_map.begin(); it != cache_map.end();) {
      if (it->first == entry->id)
        ++it;
      else
        it = cache_map.erase(it);
    }
  }
  cache_map[entry->id] = std::move(entry);
}

}  // namespace neurlp::detail
