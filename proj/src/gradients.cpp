#include "neurlp/gradients.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "neurlp/io.hpp"
#include "reduced.hpp"

namespace neurlp {

GradientBundle backward(const ConstraintSystem& cs, const Solution& sol,
                        const std::vector<double>& g, const QpConfig& cfg) {
  if (int(g.size()) != cs.n_cols)
    throw std::invalid_argument("backward: gradient length != n_cols");
  if (sol.system_id != cs.id || sol.system_version != cs.version)
    throw std::invalid_argument("backward: solution does not match system");
  if (!sol.ok) throw std::invalid_argument("backward: solution not ok");

  const int d = cs.order, n = cs.n_steps, R = cs.n_pairs;
  const double gamma = cfg.gamma;

  SolvePath path = detail::choose_path(cs, cfg);
  auto cached = detail::cache_lookup(cs.id, cs.version);
  if (cached && cached->path != path) cached.reset();

  detail::ReducedSystem local_rs;
  detail::Factorization local_fact;
  const detail::ReducedSystem* rs = nullptr;
  const detail::Factorization* fact = nullptr;
  if (cached) {
    rs = &cached->rs;
    fact = &cached->fact;
  } else {
    detail::build_reduced(cs, local_rs);
    if (!local_rs.ok) throw std::runtime_error("backward: " + local_rs.error);
    if (path != SolvePath::iterative) {
      detail::factorize(local_rs, path, cfg, local_fact);
      if (!local_fact.ok) throw std::runtime_error("backward: " + local_fact.error);
    }
    rs = &local_rs;
    fact = &local_fact;
  }

  // residuals of the soft pairs at the solution
  std::vector<double> y(rs->ny);
  for (int k = 0; k < rs->ny; ++k) y[k] = sol.z[rs->free_cols[k]];
  std::vector<double> e(R);
  for (int p = 0; p < R; ++p) {
    double v = rs->q[p];
    const detail::SparseVec& pr = rs->P[p];
    for (size_t k = 0; k < pr.idx.size(); ++k) v += pr.val[k] * y[pr.idx[k]];
    e[p] = v;
  }

  std::vector<double> q_g(R);
  for (int p = 0; p < R; ++p)
    q_g[p] = g[cs.slack_col(p, -1)] - g[cs.slack_col(p, +1)];

  // reduced gradient: lift g through the eliminated leading derivatives
  std::vector<double> rhs(rs->ny);
  for (int k = 0; k < rs->ny; ++k) rhs[k] = g[rs->free_cols[k]];
  for (int x = 0; x < cs.dim; ++x)
    for (int t = 0; t < n; ++t) {
      size_t xt = size_t(x) * n + t;
      double gd = g[cs.state_col(x, 0, t, d)];
      if (gd == 0.0) continue;
      const detail::SparseVec& lin = rs->elim_lin[xt];
      for (size_t k = 0; k < lin.idx.size(); ++k) rhs[lin.idx[k]] += gd * lin.val[k];
    }
  for (int p = 0; p < R; ++p) {
    const detail::SparseVec& pr = rs->P[p];
    for (size_t k = 0; k < pr.idx.size(); ++k)
      rhs[pr.idx[k]] += pr.val[k] * q_g[p];
  }
  for (double& v : rhs) v /= -2.0 * gamma;

  std::vector<double> dy;
  detail::SolveStat st = detail::solve_normal(*rs, fact, cfg, rhs, dy, nullptr);
  if (!st.ok)
    throw std::runtime_error("backward: adjoint solve failed: " + st.message);

  std::vector<double> de(R);
  for (int p = 0; p < R; ++p) {
    double v = 0.0;
    const detail::SparseVec& pr = rs->P[p];
    for (size_t k = 0; k < pr.idx.size(); ++k) v += pr.val[k] * dy[pr.idx[k]];
    de[p] = v;
  }

  double g_soft = g[cs.eps_col];
  for (int p = 0; p < R; ++p)
    g_soft += g[cs.slack_col(p, +1)] + g[cs.slack_col(p, -1)];
  double d_eps = R > 0 ? -g_soft / (2.0 * gamma * R) : 0.0;

  // adjoint primal direction over every column
  std::vector<double> d_z(cs.n_cols, 0.0);
  for (int k = 0; k < rs->ny; ++k) d_z[rs->free_cols[k]] = dy[k];
  for (int x = 0; x < cs.dim; ++x)
    for (int t = 0; t < n; ++t) {
      size_t xt = size_t(x) * n + t;
      double v = 0.0;
      const detail::SparseVec& lin = rs->elim_lin[xt];
      for (size_t k = 0; k < lin.idx.size(); ++k) v += lin.val[k] * dy[lin.idx[k]];
      d_z[cs.state_col(x, 0, t, d)] = v;
    }
  d_z[cs.eps_col] = d_eps;
  for (int p = 0; p < R; ++p) {
    d_z[cs.slack_col(p, +1)] = d_eps - de[p];
    d_z[cs.slack_col(p, -1)] = de[p] + d_eps;
  }

  // w = B^T (2 gamma e' + q_g): stationarity defect absorbed by the duals
  std::vector<double> w(cs.n_state, 0.0);
  for (int p = 0; p < R; ++p) {
    double s = 2.0 * gamma * de[p] + q_g[p];
    const detail::SparseVec& b = rs->B[p];
    for (size_t k = 0; k < b.idx.size(); ++k) w[b.idx[k]] += b.val[k] * s;
  }

  std::vector<double> d_lambda(cs.n_rows, 0.0);
  for (int x = 0; x < cs.dim; ++x) {
    for (int t = 0; t < n; ++t) {
      size_t xt = size_t(x) * n + t;
      int cd = cs.state_col(x, 0, t, d);
      d_lambda[cs.equation_row(x, t)] = (-g[cd] - w[cd]) / rs->lead_coeff[xt];
    }
    double dl0 = d_lambda[cs.equation_row(x, 0)];
    int row0 = cs.equation_row(x, 0);
    for (int i = 0; i < d; ++i) {
      int c0 = cs.state_col(x, 0, 0, i);
      double ci0 = 0.0;
      for (int k = cs.row_ptr[row0]; k < cs.row_ptr[row0 + 1]; ++k)
        if (cs.col_idx[k] == c0) ci0 = cs.csr_val[k];
      d_lambda[cs.initial_row(x, i)] = (-g[c0] - w[c0]) - ci0 * dl0;
    }
  }
  for (int p = 0; p < R; ++p) {
    d_lambda[cs.pair_row(p, +1)] =
        -gamma * (d_eps - de[p]) - g[cs.slack_col(p, +1)];
    d_lambda[cs.pair_row(p, -1)] =
        gamma * (de[p] + d_eps) + g[cs.slack_col(p, -1)];
  }

  GradientBundle out;
  out.solution_id = sol.system_id;
  out.solution_version = sol.system_version;
  const int nc = cs.time_invariant ? 1 : n;
  out.d_coeffs.assign(size_t(cs.dim) * nc * (d + 1), 0.0);
  out.d_rhs.assign(size_t(cs.dim) * nc, 0.0);
  out.d_steps.assign(n - 1, 0.0);
  out.d_phi.assign(cs.n_terms, std::vector<double>(nc, 0.0));

  // per-nonzero dA = d_λ_r z_c - λ_r d_z_c, chained through each entry's
  // parameter factor; one parameter may own several triplets.
  for (size_t k = 0; k < cs.tr.size(); ++k) {
    const ParamRef& ref = cs.param_map[k];
    if (ref.kind == ParamKind::structural) continue;
    int r = cs.tr[k], c = cs.tcol[k];
    double ga = d_lambda[r] * sol.z[c] - sol.lambda[r] * d_z[c];
    double v = ga * ref.factor;
    switch (ref.kind) {
      case ParamKind::coeff:
        out.d_coeffs[(size_t(ref.a) * nc + (cs.time_invariant ? 0 : ref.b)) *
                         (d + 1) +
                     ref.c] += v;
        break;
      case ParamKind::phi:
        out.d_phi[ref.a][cs.time_invariant ? 0 : ref.c] += v;
        break;
      case ParamKind::step:
        out.d_steps[ref.a] += v;
        break;
      default:
        break;
    }
  }

  // right-hand-side entries: dβ_r = -d_λ_r
  std::vector<double> init_acc(size_t(cs.dim) * d, 0.0);
  for (int r = 0; r < cs.n_rows; ++r) {
    const ParamRef& ref = cs.beta_map[r];
    if (ref.kind == ParamKind::rhs_p) {
      out.d_rhs[size_t(ref.a) * nc + (cs.time_invariant ? 0 : ref.b)] +=
          -d_lambda[r] * ref.factor;
    } else if (ref.kind == ParamKind::init_p) {
      init_acc[size_t(ref.a) * d + ref.b] += -d_lambda[r] * ref.factor;
    }
  }
  for (int x = 0; x < cs.dim; ++x)
    for (int i = 0; i < d; ++i)
      if (!cs.init_mask[size_t(x) * d + i])
        out.d_init.push_back({x, i, init_acc[size_t(x) * d + i]});
  return out;
}

double eval_loss(const Solution& sol, GradCheckLoss loss) {
  const int n = sol.n_steps;
  double L = 0.0;
  for (int x = 0; x < sol.dim; ++x) {
    if (loss == GradCheckLoss::terminal_u) {
      L += sol.value(x, n - 1, 0);
      continue;
    }
    for (int t = 0; t < n; ++t) {
      double u = sol.value(x, t, 0);
      if (loss == GradCheckLoss::sum_u) L += u;
      else L += (u - std::cos(0.7 * t + x)) * (u - std::cos(0.7 * t + x));
    }
  }
  return L;
}

namespace {

void loss_grad(const ConstraintSystem& cs, const Solution& sol,
               GradCheckLoss loss, std::vector<double>& g) {
  g.assign(cs.n_cols, 0.0);
  for (int x = 0; x < cs.dim; ++x) {
    if (loss == GradCheckLoss::terminal_u) {
      g[cs.state_col(x, 0, cs.n_steps - 1, 0)] = 1.0;
      continue;
    }
    for (int t = 0; t < cs.n_steps; ++t) {
      int c = cs.state_col(x, 0, t, 0);
      if (loss == GradCheckLoss::sum_u) g[c] = 1.0;
      else g[c] = 2.0 * (sol.value(x, t, 0) - std::cos(0.7 * t + x));
    }
  }
}

double loss_of(const OdeSpec& spec, GradCheckLoss loss, const QpConfig& cfg) {
  ConstraintSystem cs = assemble(spec);
  Solution sol = solve(cs, cfg);
  if (!sol.ok) throw std::runtime_error("gradcheck: solve failed: " + sol.message);
  return eval_loss(sol, loss);
}

struct GroupAcc {
  double an = 0.0, fn = 0.0, worst = 0.0;
  void take(double a, double f) {
    an += a * a;
    fn += f * f;
    // 0.1 floor on the reference magnitude: slots far below the loss scale
    // are certified absolutely, since FD noise there is roundoff / (2h)
    double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), 0.1});
    worst = std::max(worst, rel);
  }
  GradCheckRow row(const std::string& name) const {
    GradCheckRow r;
    r.group = name;
    r.analytic_norm = std::sqrt(an);
    r.fd_norm = std::sqrt(fn);
    r.max_rel_err = worst;
    r.pass = worst <= 1e-4;
    return r;
  }
};

double central_fd(OdeSpec& spec, double* slot, double fd_eps, GradCheckLoss loss,
                  const QpConfig& cfg) {
  double p0 = *slot;
  double h = fd_eps * (1.0 + std::abs(p0));
  *slot = p0 + h;
  double lp = loss_of(spec, loss, cfg);
  *slot = p0 - h;
  double lm = loss_of(spec, loss, cfg);
  *slot = p0;
  return (lp - lm) / (2.0 * h);
}

}  // namespace

GradCheckReport gradcheck(const OdeSpec& spec, GradCheckLoss loss,
                          double fd_eps, const QpConfig& cfg) {
  ConstraintSystem cs = assemble(spec);
  Solution sol = solve(cs, cfg);
  if (!sol.ok) throw std::runtime_error("gradcheck: solve failed: " + sol.message);
  std::vector<double> g;
  loss_grad(cs, sol, loss, g);
  GradientBundle b = backward(cs, sol, g, cfg);

  OdeSpec work = spec;
  GradCheckReport rep;
  const int d = spec.order, nc = spec.coeff_steps();

  GroupAcc coeffs;
  for (int x = 0; x < spec.dim; ++x)
    for (int t = 0; t < nc; ++t)
      for (int i = 0; i <= d; ++i) {
        size_t s = (size_t(x) * nc + t) * (d + 1) + i;
        if (work.coeffs[s] == 0.0) continue;  // absent entry, not a parameter
        coeffs.take(b.d_coeffs[s],
                    central_fd(work, &work.coeffs[s], fd_eps, loss, cfg));
      }
  rep.rows.push_back(coeffs.row("coeffs"));

  GroupAcc rhs;
  for (size_t s = 0; s < work.rhs.size(); ++s)
    rhs.take(b.d_rhs[s], central_fd(work, &work.rhs[s], fd_eps, loss, cfg));
  rep.rows.push_back(rhs.row("rhs"));

  GroupAcc steps;
  for (size_t s = 0; s < work.steps.size(); ++s)
    steps.take(b.d_steps[s], central_fd(work, &work.steps[s], fd_eps, loss, cfg));
  rep.rows.push_back(steps.row("steps"));

  GroupAcc init;
  size_t free_seen = 0;
  for (int x = 0; x < spec.dim; ++x)
    for (int i = 0; i < d; ++i) {
      size_t s = size_t(x) * d + i;
      double a = 0.0;
      if (!spec.init_mask[s]) {
        a = b.d_init[free_seen].value;
        ++free_seen;
        init.take(a, central_fd(work, &work.init_conditions[s], fd_eps, loss, cfg));
      }
    }
  rep.rows.push_back(init.row("init"));

  if (!spec.nonlinear_terms.empty()) {
    GroupAcc phi;
    for (size_t k = 0; k < spec.nonlinear_terms.size(); ++k)
      for (size_t t = 0; t < work.nonlinear_terms[k].phi.size(); ++t) {
        if (work.nonlinear_terms[k].phi[t] == 0.0) continue;  // absent entry
        // a length-1 phi broadcast over time columns sums their gradients
        double a = b.d_phi[k][t];
        if (work.nonlinear_terms[k].phi.size() == 1 && nc > 1) {
          a = 0.0;
          for (double v : b.d_phi[k]) a += v;
        }
        phi.take(a, central_fd(work, &work.nonlinear_terms[k].phi[t], fd_eps,
                               loss, cfg));
      }
    rep.rows.push_back(phi.row("phi"));
  }

  rep.pass = true;
  for (const auto& r : rep.rows) rep.pass = rep.pass && r.pass;
  return rep;
}

std::string GradCheckReport::to_json() const {
  std::string out = "[";
  for (size_t i = 0; i < rows.size(); ++i) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s{\"group\":\"%s\",\"analytic_norm\":%s,\"fd_norm\":%s,"
                  "\"max_rel_err\":%s,\"pass\":%s}",
                  i ? "," : "", rows[i].group.c_str(),
                  format_g17(rows[i].analytic_norm).c_str(),
                  format_g17(rows[i].fd_norm).c_str(),
                  format_g17(rows[i].max_rel_err).c_str(),
                  rows[i].pass ? "true" : "false");
    out += buf;
  }
  out += "]";
  return out;
}

}  // namespace neurlp
