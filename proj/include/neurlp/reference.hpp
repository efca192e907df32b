#pragma once
#include <functional>
#include <string>
#include <vector>

#include "neurlp/io.hpp"

namespace neurlp {

// Initial value problem for the fixed-step RK4 oracle. n_steps counts
// advances, so the rollout has n_steps + 1 sample points.
struct IvpProblem {
  int dim = 1;
  std::function<void(double t, const double* s, double* ds)> f;
  double t0 = 0.0;
  std::vector<double> state0;
  double h = 0.01;
  int n_steps = 1;
};

struct Rk4Result {
  Trajectory traj;
  bool diverged = false;  // non-finite state; traj truncated at last finite point
};

Rk4Result rk4(const IvpProblem& p);

// Closed forms for the validation ODEs; name in
// {sin, cos, exp, damped-sine, constant, cosh}. damped-sine is
// exp(-0.1 t) sin(t). Throws on unknown name.
Trajectory analytic(const std::string& name, const std::vector<double>& times);

IvpProblem lorenz_problem(double sigma = 10.0, double rho = 28.0,
                          double beta = 8.0 / 3.0,
                          std::vector<double> state0 = {1.0, 1.0, 1.0},
                          double h = 0.01, int n_steps = 2499);

// Companion-form IVP for a constant-coefficient linear scalar ODE
// sum_i c[i] u^(i) = b with c.size() == d+1 and c[d] != 0.
IvpProblem linear_ivp(const std::vector<double>& c, double b,
                      const std::vector<double>& init, double h, int n_steps);

}  // namespace neurlp
