#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "neurlp/assembly.hpp"
#include "neurlp/kkt.hpp"
#include "neurlp/ode_spec.hpp"

namespace neurlp {

struct InitGrad {
  int dim = 0, order = 0;
  double value = 0.0;
};

// Gradients of a scalar loss w.r.t. every assembled parameter. Shapes follow
// the producing spec: nc = 1 time column when time_invariant, else n_steps.
struct GradientBundle {
  std::vector<double> d_coeffs;            // dim * nc * (order+1)
  std::vector<double> d_rhs;               // dim * nc
  std::vector<double> d_steps;             // n_steps - 1
  std::vector<std::vector<double>> d_phi;  // per nonlinear term, nc
  std::vector<InitGrad> d_init;            // free initial entries only
  uint64_t solution_id = 0, solution_version = 0;
};

// Pulls dL/dz (over every solution component, slacks and ε included) back
// through the optimality system to the assembled parameters. Reuses the
// forward factorization cached under the system id when still current.
GradientBundle backward(const ConstraintSystem& cs, const Solution& sol,
                        const std::vector<double>& g, const QpConfig& cfg = {});

// quadratic_target: sum over (x,t) of (u_x(t) - cos(0.7 t + x))^2
// sum_u:            sum over (x,t) of u_x(t)
// terminal_u:       sum over x of u_x(n-1)
enum class GradCheckLoss { quadratic_target, sum_u, terminal_u };

struct GradCheckRow {
  std::string group;  // coeffs | rhs | steps | init | phi
  double analytic_norm = 0.0, fd_norm = 0.0, max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  bool pass = false;
  std::string to_json() const;
};

// Central finite differences per parameter at h = fd_eps * (1 + |p|),
// compared group-wise against backward(); pass at rel. err <= 1e-4.
GradCheckReport gradcheck(const OdeSpec& spec, GradCheckLoss loss,
                          double fd_eps, const QpConfig& cfg = {});

// Value of one of the named losses at a solution (exposed for tests).
double eval_loss(const Solution& sol, GradCheckLoss loss);

}  // namespace neurlp
