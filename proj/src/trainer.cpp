#include "neurlp/trainer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "neurlp/assembly.hpp"
#include "neurlp/gradients.hpp"
#include "neurlp/nonlinear.hpp"
#include "neurlp/rng.hpp"

namespace neurlp {

namespace {

// per-group first-order update with optional momentum / adaptive moments
class GroupOpt {
 public:
  GroupOpt() = default;
  GroupOpt(Optimizer kind, double lr, size_t n)
      : kind_(kind), lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(double* p, const double* g, size_t n) {
    ++it_;
    double c1 = 1.0 - std::pow(0.9, it_), c2 = 1.0 - std::pow(0.999, it_);
    for (size_t i = 0; i < n; ++i) {
      double gi = g[i];
      switch (kind_) {
        case Optimizer::plain:
          p[i] -= lr_ * gi;
          break;
        case Optimizer::momentum:
          m_[i] = 0.9 * m_[i] + gi;
          p[i] -= lr_ * m_[i];
          break;
        case Optimizer::adaptive_moment:
          m_[i] = 0.9 * m_[i] + 0.1 * gi;
          v_[i] = 0.999 * v_[i] + 0.001 * gi * gi;
          p[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-8);
          break;
      }
    }
  }

 private:
  Optimizer kind_ = Optimizer::plain;
  double lr_ = 0.0;
  int it_ = 0;
  std::vector<double> m_, v_;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

FitResult fit(const OdeSpec& spec0, const Trajectory& data, unsigned which,
              const TrainConfig& cfg) {
  FitResult out;
  out.spec = spec0;
  auto errs = validate(spec0);
  if (!errs.empty()) {
    out.ok = false;
    out.message = "invalid spec: " + errs.front();
    return out;
  }
  if (data.n != spec0.n_steps || data.dim != spec0.dim) {
    out.ok = false;
    out.message = "data shape does not match spec";
    return out;
  }
  if (cfg.learning_rate <= 0.0 || cfg.iterations < 1) {
    out.ok = false;
    out.message = "invalid training config";
    return out;
  }

  OdeSpec work = spec0;
  const int d = work.order, n = work.n_steps, dim = work.dim;
  const int nc = work.coeff_steps();
  const bool has_terms = !work.nonlinear_terms.empty();

  // bounded reparametrization keeps trained steps positive
  const bool train_steps = (which & PG_steps) != 0;
  double step_scale = 0.0;
  std::vector<double> raw;
  if (train_steps) {
    double mean = std::accumulate(work.steps.begin(), work.steps.end(), 0.0) /
                  work.steps.size();
    step_scale = 2.0 * mean;
    raw.resize(work.steps.size());
    for (size_t i = 0; i < raw.size(); ++i) {
      double r = std::clamp(work.steps[i] / step_scale, 1e-9, 1.0 - 1e-9);
      raw[i] = std::log(r / (1.0 - r));
    }
  }

  size_t n_phi = 0;
  for (const auto& term : work.nonlinear_terms) n_phi += term.phi.size();
  std::vector<size_t> free_init;
  for (int x = 0; x < dim; ++x)
    for (int i = 0; i < d; ++i)
      if (!work.pinned(x, i)) free_init.push_back(size_t(x) * d + i);

  GroupOpt opt_coeffs(cfg.optimizer, cfg.learning_rate, work.coeffs.size());
  GroupOpt opt_phi(cfg.optimizer, cfg.learning_rate, n_phi);
  GroupOpt opt_rhs(cfg.optimizer, cfg.learning_rate, work.rhs.size());
  GroupOpt opt_steps(cfg.optimizer, cfg.learning_rate, raw.size());
  GroupOpt opt_init(cfg.optimizer, cfg.learning_rate, free_init.size());

  auto rng = rng_stream(cfg.seed, "fit-noise");
  std::normal_distribution<double> gauss(0.0, 1.0);

  ConstraintSystem cs;
  bool fresh = true;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> target(size_t(n) * dim), g;

  for (int it = 1; it <= cfg.iterations; ++it) {
    if (train_steps)
      for (size_t i = 0; i < raw.size(); ++i)
        work.steps[i] = step_scale * sigmoid(raw[i]);
    if (fresh) {
      cs = assemble(work);
      fresh = false;
    } else {
      assemble_into(work, cs);
    }
    Solution sol = solve(cs, cfg.qp);
    if (!sol.ok) {
      out.ok = false;
      out.message = "solver failed at iteration " + std::to_string(it) + ": " +
                    sol.message;
      break;
    }

    for (int t = 0; t < n; ++t)
      for (int x = 0; x < dim; ++x)
        target[size_t(t) * dim + x] =
            data.at(t, x) +
            (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * gauss(rng) : 0.0);

    const double inv = 1.0 / (double(n) * dim);
    double loss = 0.0;
    g.assign(cs.n_cols, 0.0);
    for (int x = 0; x < dim; ++x)
      for (int t = 0; t < n; ++t) {
        double r = sol.value(x, t, 0) - target[size_t(t) * dim + x];
        int c = cs.state_col(x, 0, t, 0);
        if (cfg.loss == LossKind::mse) {
          loss += r * r * inv;
          g[c] = 2.0 * r * inv;
        } else {
          loss += std::abs(r) * inv;
          g[c] = ((r > 0.0) - (r < 0.0)) * inv;
        }
      }
    if (has_terms) {
      NonlinearResidual nl = nonlinear_residual(sol, work);
      loss += cfg.nonlinear_weight * nl.loss;
      for (size_t i = 0; i < g.size(); ++i)
        g[i] += cfg.nonlinear_weight * nl.g[i];
    }
    out.history.push_back(loss);
    if (!std::isfinite(loss)) {
      out.ok = false;
      out.message = "non-finite loss at iteration " + std::to_string(it);
      break;
    }
    if (loss < best) {
      best = loss;
      out.spec = work;
      out.best_solution = sol;
    }

    GradientBundle b = backward(cs, sol, g, cfg.qp);
    if (it == 1) out.first_step_grad = l2(b.d_steps);

    if (which & PG_coeffs) {
      opt_coeffs.step(work.coeffs.data(), b.d_coeffs.data(), work.coeffs.size());
      if (n_phi) {
        std::vector<double> pv(n_phi), pg(n_phi);
        size_t o = 0;
        for (size_t k = 0; k < work.nonlinear_terms.size(); ++k) {
          auto& phi = work.nonlinear_terms[k].phi;
          for (size_t t = 0; t < phi.size(); ++t) {
            pv[o + t] = phi[t];
            if (phi.size() == 1 && nc > 1) {
              double s = 0.0;
              for (double v : b.d_phi[k]) s += v;
              pg[o + t] = s;
            } else {
              pg[o + t] = b.d_phi[k][t];
            }
          }
          o += phi.size();
        }
        opt_phi.step(pv.data(), pg.data(), n_phi);
        o = 0;
        for (auto& term : work.nonlinear_terms) {
          for (size_t t = 0; t < term.phi.size(); ++t) term.phi[t] = pv[o + t];
          o += term.phi.size();
        }
      }
    }
    if (which & PG_rhs)
      opt_rhs.step(work.rhs.data(), b.d_rhs.data(), work.rhs.size());
    if (train_steps) {
      std::vector<double> sg(raw.size());
      for (size_t i = 0; i < raw.size(); ++i) {
        double s = sigmoid(raw[i]);
        sg[i] = b.d_steps[i] * step_scale * s * (1.0 - s);
      }
      opt_steps.step(raw.data(), sg.data(), raw.size());
    }
    if ((which & PG_init) && !free_init.empty()) {
      std::vector<double> iv(free_init.size()), ig(free_init.size());
      for (size_t k = 0; k < free_init.size(); ++k) {
        iv[k] = work.init_conditions[free_init[k]];
        ig[k] = b.d_init[k].value;
      }
      opt_init.step(iv.data(), ig.data(), iv.size());
      for (size_t k = 0; k < free_init.size(); ++k)
        work.init_conditions[free_init[k]] = iv[k];
    }
  }
  if (out.history.empty()) {
    out.ok = false;
    if (out.message.empty()) out.message = "no iterations completed";
  }
  return out;
}

DiscoveryModel make_discovery_model(int dim, int degree, OuterForm outer,
                                    int num_degree, int den_degree) {
  if (dim < 1 || degree < 0) throw std::invalid_argument("bad model shape");
  DiscoveryModel m;
  m.dim = dim;
  m.outer = outer;
  m.basis = builtin_basis(num_degree >= 0 ? num_degree : degree, dim);
  m.xi.assign(m.basis.size() * dim, 0.0);
  m.active.assign(m.basis.size() * dim, 1);
  if (outer == OuterForm::rational) {
    m.basis_q = builtin_basis(den_degree >= 0 ? den_degree : degree, dim);
    m.xi_q.assign(m.basis_q.size() * dim, 0.0);
    for (int x = 0; x < dim; ++x) m.xi_q[x] = 1.0;  // constant column leads
    m.active_q.assign(m.basis_q.size() * dim, 1);
  }
  return m;
}

DiscoveryModel threshold(const DiscoveryModel& model, double tau) {
  if (tau < 0.0) throw std::invalid_argument("threshold: tau < 0");
  DiscoveryModel m = model;
  for (size_t i = 0; i < m.xi.size(); ++i)
    if (!m.active[i] || std::abs(m.xi[i]) < tau) {
      m.xi[i] = 0.0;
      m.active[i] = 0;
    }
  for (size_t i = 0; i < m.xi_q.size(); ++i) {
    bool constant_col = i < size_t(m.dim);  // graded order puts 1 first
    if (constant_col) continue;
    if (!m.active_q[i] || std::abs(m.xi_q[i]) < tau) {
      m.xi_q[i] = 0.0;
      m.active_q[i] = 0;
    }
  }
  return m;
}

namespace {

struct TrajCtx {
  const Trajectory* traj = nullptr;
  OdeSpec spec;
  ConstraintSystem cs;
  bool fresh = true;
  std::vector<double> theta, theta_q;       // n x B row-major basis values
  std::vector<double> pv, qv;               // pre-outer numerator/denominator
  std::vector<uint8_t> clamped;             // denominator floored here
  std::vector<double> d_rhs;                // pulled-back per-(x,t) gradient
  double loss = 0.0;
  bool ok = true;
  std::string message;
};

void eval_theta(const std::vector<BasisFunction>& basis, const Trajectory& tr,
                std::vector<double>& theta) {
  const size_t B = basis.size();
  theta.assign(size_t(tr.n) * B, 0.0);
  for (int t = 0; t < tr.n; ++t) {
    const double* row = tr.values.data() + size_t(t) * tr.dim;
    for (size_t j = 0; j < B; ++j)
      theta[size_t(t) * B + j] = basis[j].eval(row, tr.dim);
  }
}

// the optimizer steps feature weights whitened against the data Gram over the
// active support; raw weights keep their natural units, so thresholds, reports,
// and the assembled rhs never see the reparametrization
class WhitenedOpt {
 public:
  WhitenedOpt() = default;
  WhitenedOpt(int B, int dim, Eigen::MatrixXd gram, Optimizer kind, double lr)
      : B_(B), dim_(dim), gram_(std::move(gram)), kind_(kind), lr_(lr) {}

  // rebuild support factorizations and whitened coordinates from raw weights;
  // parameter values are preserved, optimizer moments start fresh
  void reset(const std::vector<double>& xi, const std::vector<uint8_t>& active) {
    act_.assign(dim_, {});
    L_.assign(dim_, {});
    size_t total = 0;
    for (int x = 0; x < dim_; ++x) {
      for (int j = 0; j < B_; ++j)
        if (active[size_t(j) * dim_ + x]) act_[x].push_back(j);
      total += act_[x].size();
    }
    w_.resize(total);
    size_t o = 0;
    for (int x = 0; x < dim_; ++x) {
      const auto& a = act_[x];
      const int k = int(a.size());
      if (k == 0) continue;
      Eigen::MatrixXd G(k, k);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) G(i, j) = gram_(a[i], a[j]);
      double jit = 0.0;
      Eigen::LLT<Eigen::MatrixXd> llt(G);
      while (llt.info() != Eigen::Success) {
        jit = jit == 0.0 ? 1e-12 * G.trace() / k : jit * 10.0;
        llt.compute(G + jit * Eigen::MatrixXd::Identity(k, k));
      }
      L_[x] = llt.matrixL();
      Eigen::VectorXd raw(k);
      for (int i = 0; i < k; ++i) raw[i] = xi[size_t(a[i]) * dim_ + x];
      Eigen::Map<Eigen::VectorXd>(w_.data() + o, k) = L_[x].transpose() * raw;
      o += k;
    }
    opt_ = GroupOpt(kind_, lr_, w_.size());
  }

  // raw-space gradient in, raw weights out; inactive entries stay zero
  void step(const std::vector<double>& g, std::vector<double>& xi) {
    std::vector<double> gw(w_.size());
    size_t o = 0;
    for (int x = 0; x < dim_; ++x) {
      const auto& a = act_[x];
      const int k = int(a.size());
      if (k == 0) continue;
      Eigen::VectorXd gr(k);
      for (int i = 0; i < k; ++i) gr[i] = g[size_t(a[i]) * dim_ + x];
      Eigen::Map<Eigen::VectorXd>(gw.data() + o, k) =
          L_[x].triangularView<Eigen::Lower>().solve(gr);
      o += k;
    }
    opt_.step(w_.data(), gw.data(), w_.size());
    std::fill(xi.begin(), xi.end(), 0.0);
    o = 0;
    for (int x = 0; x < dim_; ++x) {
      const auto& a = act_[x];
      const int k = int(a.size());
      if (k == 0) continue;
      Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w_.data() + o, k);
      Eigen::VectorXd raw =
          L_[x].transpose().triangularView<Eigen::Upper>().solve(wv);
      for (int i = 0; i < k; ++i) xi[size_t(a[i]) * dim_ + x] = raw[i];
      o += k;
    }
  }

 private:
  int B_ = 0, dim_ = 0;
  Eigen::MatrixXd gram_;
  Optimizer kind_ = Optimizer::plain;
  double lr_ = 0.0;
  std::vector<std::vector<int>> act_;
  std::vector<Eigen::MatrixXd> L_;
  std::vector<double> w_;
  GroupOpt opt_;
};

}  // namespace

DiscoveryResult discover(const std::vector<Trajectory>& data,
                         const DiscoveryModel& model0, const GridParam& grid,
                         const TrainConfig& cfg) {
  DiscoveryResult out;
  out.model = model0;
  if (data.empty() || model0.basis.empty()) {
    out.ok = false;
    out.message = "discover: no data or empty basis";
    return out;
  }
  if (cfg.learning_rate <= 0.0 || cfg.iterations < 1) {
    out.ok = false;
    out.message = "invalid training config";
    return out;
  }
  const int dim = model0.dim;
  const size_t B = model0.basis.size(), Bq = model0.basis_q.size();
  const bool rational = model0.outer == OuterForm::rational;

  // canonical accumulation order: batches are sets, not sequences
  std::vector<const Trajectory*> trajs;
  for (const auto& tr : data) trajs.push_back(&tr);
  std::sort(trajs.begin(), trajs.end(),
            [](const Trajectory* a, const Trajectory* b) {
              return trajectory_content_hash(*a) < trajectory_content_hash(*b);
            });

  std::vector<TrajCtx> ctxs(trajs.size());
  for (size_t i = 0; i < trajs.size(); ++i) {
    TrajCtx& c = ctxs[i];
    c.traj = trajs[i];
    const Trajectory& tr = *c.traj;
    if (tr.dim != dim || tr.n < 2) {
      out.ok = false;
      out.message = "discover: trajectory shape mismatch";
      return out;
    }
    OdeSpec& s = c.spec;
    s.order = 1;
    s.n_steps = tr.n;
    s.dim = dim;
    s.time_invariant = false;
    s.coeffs.assign(size_t(dim) * tr.n * 2, 0.0);
    for (int x = 0; x < dim; ++x)
      for (int t = 0; t < tr.n; ++t) s.coeffs[(size_t(x) * tr.n + t) * 2 + 1] = 1.0;
    s.rhs.assign(size_t(dim) * tr.n, 0.0);
    if (int(grid.raw.size()) == tr.n - 1) {
      s.steps = materialize_steps(grid, tr.n);
    } else {
      s.steps.resize(tr.n - 1);
      for (int t = 0; t + 1 < tr.n; ++t) {
        s.steps[t] = tr.times[t + 1] - tr.times[t];
        if (!(s.steps[t] > 0.0)) {
          out.ok = false;
          out.message = "discover: non-increasing sample times";
          return out;
        }
      }
    }
    s.init_conditions.resize(dim);
    for (int x = 0; x < dim; ++x) s.init_conditions[x] = tr.at(0, x);
    s.init_mask.assign(dim, 1);
    eval_theta(model0.basis, tr, c.theta);
    if (rational) eval_theta(model0.basis_q, tr, c.theta_q);
    c.pv.assign(size_t(dim) * tr.n, 0.0);
    c.qv.assign(size_t(dim) * tr.n, 1.0);
    c.clamped.assign(size_t(dim) * tr.n, 0);
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(B, B);
  Eigen::MatrixXd gram_q = Eigen::MatrixXd::Zero(Bq, Bq);
  {
    size_t rows = 0;
    for (const auto& c : ctxs) {
      const int n = c.traj->n;
      rows += size_t(n);
      for (int t = 0; t < n; ++t) {
        Eigen::Map<const Eigen::VectorXd> th(c.theta.data() + size_t(t) * B,
                                             B);
        gram += th * th.transpose();
        if (rational) {
          Eigen::Map<const Eigen::VectorXd> tq(
              c.theta_q.data() + size_t(t) * Bq, Bq);
          gram_q += tq * tq.transpose();
        }
      }
    }
    gram /= double(rows);
    gram_q /= double(rows);
  }

  DiscoveryModel m = model0;
  WhitenedOpt opt_xi(int(B), dim, gram, cfg.optimizer, cfg.learning_rate);
  WhitenedOpt opt_xq(int(Bq), dim, gram_q, cfg.optimizer, cfg.learning_rate);
  opt_xi.reset(m.xi, m.active);
  if (rational) opt_xq.reset(m.xi_q, m.active_q);
  std::vector<double> gxi(m.xi.size()), gxq(m.xi_q.size());
  const double inv_traj = 1.0 / double(ctxs.size());
  const int half = cfg.iterations / 2, ninety = (cfg.iterations * 9) / 10;

  auto run_ctx = [&](TrajCtx& c) {
    try {
      const Trajectory& tr = *c.traj;
      const int n = tr.n;
      for (int x = 0; x < dim; ++x)
        for (int t = 0; t < n; ++t) {
          const double* th = c.theta.data() + size_t(t) * B;
          double p = 0.0;
          for (size_t j = 0; j < B; ++j) p += th[j] * m.xi[j * dim + x];
          double b = p;
          size_t xt = size_t(x) * n + t;
          c.pv[xt] = p;
          if (m.outer == OuterForm::tanh_outer) {
            b = std::tanh(p);
          } else if (rational) {
            const double* tq = c.theta_q.data() + size_t(t) * Bq;
            double q = 0.0;
            for (size_t j = 0; j < Bq; ++j) q += tq[j] * m.xi_q[j * dim + x];
            c.clamped[xt] = std::abs(q) < 1e-6;
            if (c.clamped[xt]) q = q < 0.0 ? -1e-6 : 1e-6;
            c.qv[xt] = q;
            b = p / q;
          }
          c.spec.rhs[xt] = b;
        }
      if (c.fresh) {
        c.cs = assemble(c.spec);
        c.fresh = false;
      } else {
        assemble_into(c.spec, c.cs);
      }
      Solution sol = solve(c.cs, cfg.qp);
      if (!sol.ok) {
        c.ok = false;
        c.message = sol.message;
        return;
      }
      const double inv = 1.0 / (double(n) * dim);
      std::vector<double> g(c.cs.n_cols, 0.0);
      double loss = 0.0;
      for (int x = 0; x < dim; ++x)
        for (int t = 0; t < n; ++t) {
          double r = sol.value(x, t, 0) - tr.at(t, x);
          loss += r * r * inv;
          g[c.cs.state_col(x, 0, t, 0)] = 2.0 * r * inv;
        }
      c.loss = loss;
      GradientBundle bnd = backward(c.cs, sol, g, cfg.qp);
      c.d_rhs = std::move(bnd.d_rhs);
    } catch (const std::exception& ex) {
      c.ok = false;
      c.message = ex.what();
    }
  };

  int workers = std::min<size_t>(effective_workers(cfg.qp), ctxs.size());
  for (int it = 1; it <= cfg.iterations; ++it) {
    if (workers <= 1) {
      for (auto& c : ctxs) run_ctx(c);
    } else {
      std::atomic<size_t> next{0};
      auto pump = [&]() {
        for (size_t i; (i = next.fetch_add(1)) < ctxs.size();) run_ctx(ctxs[i]);
      };
      std::vector<std::thread> pool;
      for (int w = 1; w < workers; ++w) pool.emplace_back(pump);
      pump();
      for (auto& th : pool) th.join();
    }
    double total = 0.0;
    for (auto& c : ctxs) {
      if (!c.ok) {
        out.ok = false;
        out.message = "discover: " + c.message;
        out.equations = format_equations(out.model);
        return out;
      }
      total += c.loss * inv_traj;
    }
    out.history.push_back(total);
    if (!std::isfinite(total)) {
      out.ok = false;
      out.message = "discover: non-finite loss";
      out.equations = format_equations(out.model);
      return out;
    }

    std::fill(gxi.begin(), gxi.end(), 0.0);
    std::fill(gxq.begin(), gxq.end(), 0.0);
    for (const auto& c : ctxs) {
      const int n = c.traj->n;
      for (int x = 0; x < dim; ++x)
        for (int t = 0; t < n; ++t) {
          size_t xt = size_t(x) * n + t;
          double db = c.d_rhs[xt] * inv_traj;
          double dz = db, dzq = 0.0;
          if (m.outer == OuterForm::tanh_outer) {
            double th = std::tanh(c.pv[xt]);
            dz = db * (1.0 - th * th);
          } else if (rational) {
            dz = db / c.qv[xt];
            if (!c.clamped[xt]) dzq = -db * c.pv[xt] / (c.qv[xt] * c.qv[xt]);
          }
          const double* th_row = c.theta.data() + size_t(t) * B;
          for (size_t j = 0; j < B; ++j) gxi[j * dim + x] += th_row[j] * dz;
          if (dzq != 0.0) {
            const double* tq = c.theta_q.data() + size_t(t) * Bq;
            for (size_t j = 0; j < Bq; ++j) gxq[j * dim + x] += tq[j] * dzq;
          }
        }
    }
    opt_xi.step(gxi, m.xi);
    if (rational) opt_xq.step(gxq, m.xi_q);

    if (cfg.threshold_tau >= 0.0 && (it == half || it == ninety)) {
      m = threshold(m, cfg.threshold_tau);
      opt_xi.reset(m.xi, m.active);
      if (rational) opt_xq.reset(m.xi_q, m.active_q);
    }
  }
  out.model = m;
  out.equations = format_equations(m);
  return out;
}

namespace {

std::string poly_text(const std::vector<BasisFunction>& basis,
                      const std::vector<double>& xi,
                      const std::vector<uint8_t>& active, int x, int dim) {
  std::string s;
  for (size_t j = 0; j < basis.size(); ++j) {
    size_t i = j * dim + x;
    if (!active.empty() && !active[i]) continue;
    double c = xi[i];
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", std::abs(c));
    if (s.empty()) {
      s += c < 0.0 ? "-" : "";
    } else {
      s += c < 0.0 ? " - " : " + ";
    }
    s += buf;
    if (basis[j].max_slot() >= 0) s += basis[j].name;
  }
  return s.empty() ? "0" : s;
}

}  // namespace

std::vector<std::string> format_equations(const DiscoveryModel& model) {
  auto vars = dim_var_names(model.dim);
  std::vector<std::string> out;
  for (int x = 0; x < model.dim; ++x) {
    std::string line = vars[x] + "' = ";
    std::string p = poly_text(model.basis, model.xi, model.active, x, model.dim);
    switch (model.outer) {
      case OuterForm::identity:
        line += p;
        break;
      case OuterForm::tanh_outer:
        line += "tanh(" + p + ")";
        break;
      case OuterForm::rational:
        line += "(" + p + ") / (" +
                poly_text(model.basis_q, model.xi_q, model.active_q, x,
                          model.dim) +
                ")";
        break;
    }
    out.push_back(line);
  }
  return out;
}

void eval_vector_field(const DiscoveryModel& model, const double* state,
                       double* out) {
  const int dim = model.dim;
  for (int x = 0; x < dim; ++x) {
    double p = 0.0;
    for (size_t j = 0; j < model.basis.size(); ++j)
      p += model.basis[j].eval(state, dim) * model.xi[j * dim + x];
    if (model.outer == OuterForm::identity) {
      out[x] = p;
    } else if (model.outer == OuterForm::tanh_outer) {
      out[x] = std::tanh(p);
    } else {
      double q = 0.0;
      for (size_t j = 0; j < model.basis_q.size(); ++j)
        q += model.basis_q[j].eval(state, dim) * model.xi_q[j * dim + x];
      if (std::abs(q) < 1e-6) q = q < 0.0 ? -1e-6 : 1e-6;
      out[x] = p / q;
    }
  }
}

namespace {

nlohmann::json basis_to_json(const std::vector<BasisFunction>& basis) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : basis)
    arr.push_back({{"name", f.name},
                   {"exponents", f.exponents},
                   {"tanh", f.tanh_outer}});
  return arr;
}

std::vector<BasisFunction> basis_from_json(const nlohmann::json& arr) {
  std::vector<BasisFunction> out;
  for (const auto& j : arr) {
    BasisFunction f;
    f.name = j.at("name").get<std::string>();
    f.exponents = j.at("exponents").get<std::vector<int>>();
    f.tanh_outer = j.at("tanh").get<bool>();
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

std::string checkpoint_json(const DiscoveryModel& model,
                            const std::vector<double>& history, uint64_t seed) {
  nlohmann::json j;
  j["dim"] = model.dim;
  j["outer"] = model.outer == OuterForm::identity ? "identity"
               : model.outer == OuterForm::tanh_outer ? "tanh"
                                                      : "rational";
  j["basis"] = basis_to_json(model.basis);
  j["basis_q"] = basis_to_json(model.basis_q);
  j["xi"] = model.xi;
  j["xi_q"] = model.xi_q;
  j["active"] = std::vector<int>(model.active.begin(), model.active.end());
  j["active_q"] = std::vector<int>(model.active_q.begin(), model.active_q.end());
  j["history"] = history;
  j["seed"] = seed;
  return j.dump(2);
}

DiscoveryModel model_from_checkpoint(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  DiscoveryModel m;
  m.dim = j.at("dim").get<int>();
  std::string outer = j.at("outer").get<std::string>();
  m.outer = outer == "identity" ? OuterForm::identity
            : outer == "tanh"   ? OuterForm::tanh_outer
                                : OuterForm::rational;
  m.basis = basis_from_json(j.at("basis"));
  m.basis_q = basis_from_json(j.at("basis_q"));
  m.xi = j.at("xi").get<std::vector<double>>();
  m.xi_q = j.at("xi_q").get<std::vector<double>>();
  auto a = j.at("active").get<std::vector<int>>();
  auto aq = j.at("active_q").get<std::vector<int>>();
  m.active.assign(a.begin(), a.end());
  m.active_q.assign(aq.begin(), aq.end());
  return m;
}

}  // namespace neurlp
