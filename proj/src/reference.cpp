#include "neurlp/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace neurlp {

Rk4Result rk4(const IvpProblem& p) {
  if (!(p.h > 0.0) || p.n_steps < 1 || int(p.state0.size()) != p.dim)
    throw std::invalid_argument("rk4: bad problem");
  Rk4Result out;
  out.traj.dim = p.dim;
  std::vector<double> s = p.state0;
  std::vector<double> k1(p.dim), k2(p.dim), k3(p.dim), k4(p.dim), tmp(p.dim);
  double t = p.t0;
  auto push = [&](double tt, const std::vector<double>& st) {
    out.traj.times.push_back(tt);
    out.traj.values.insert(out.traj.values.end(), st.begin(), st.end());
  };
  push(t, s);
  for (int step = 0; step < p.n_steps; ++step) {
    p.f(t, s.data(), k1.data());
    for (int i = 0; i < p.dim; ++i) tmp[i] = s[i] + 0.5 * p.h * k1[i];
    p.f(t + 0.5 * p.h, tmp.data(), k2.data());
    for (int i = 0; i < p.dim; ++i) tmp[i] = s[i] + 0.5 * p.h * k2[i];
    p.f(t + 0.5 * p.h, tmp.data(), k3.data());
    for (int i = 0; i < p.dim; ++i) tmp[i] = s[i] + p.h * k3[i];
    p.f(t + p.h, tmp.data(), k4.data());
    for (int i = 0; i < p.dim; ++i)
      s[i] += p.h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    t = p.t0 + (step + 1) * p.h;
    bool finite = true;
    for (double v : s)
      if (!std::isfinite(v)) finite = false;
    if (!finite) {
      out.diverged = true;
      break;
    }
    push(t, s);
  }
  out.traj.n = int(out.traj.times.size());
  return out;
}

Trajectory analytic(const std::string& name, const std::vector<double>& times) {
  std::function<double(double)> f;
  if (name == "sin")
    f = [](double t) { return std::sin(t); };
  else if (name == "cos")
    f = [](double t) { return std::cos(t); };
  else if (name == "exp")
    f = [](double t) { return std::exp(t); };
  else if (name == "damped-sine")
    f = [](double t) { return std::exp(-0.1 * t) * std::sin(t); };
  else if (name == "constant")
    f = [](double) { return 1.0; };
  else if (name == "cosh")
    f = [](double t) { return std::cosh(t); };
  else
    throw std::invalid_argument("analytic: unknown name " + name);
  Trajectory traj;
  traj.n = int(times.size());
  traj.dim = 1;
  traj.times = times;
  traj.values.resize(times.size());
  for (size_t i = 0; i < times.size(); ++i) traj.values[i] = f(times[i]);
  return traj;
}

IvpProblem lorenz_problem(double sigma, double rho, double beta,
                          std::vector<double> state0, double h, int n_steps) {
  IvpProblem p;
  p.dim = 3;
  p.state0 = std::move(state0);
  p.h = h;
  p.n_steps = n_steps;
  p.f = [sigma, rho, beta](double, const double* s, double* ds) {
    ds[0] = sigma * (s[1] - s[0]);
    ds[1] = s[0] * (rho - s[2]) - s[1];
    ds[2] = s[0] * s[1] - beta * s[2];
  };
  return p;
}

IvpProblem linear_ivp(const std::vector<double>& c, double b,
                      const std::vector<double>& init, double h, int n_steps) {
  int d = int(c.size()) - 1;
  if (d < 1 || c[d] == 0.0 || int(init.size()) != d)
    throw std::invalid_argument("linear_ivp: bad coefficients");
  IvpProblem p;
  p.dim = d;
  p.state0 = init;
  p.h = h;
  p.n_steps = n_steps;
  p.f = [c, b, d](double, const double* s, double* ds) {
    for (int i = 0; i + 1 < d; ++i) ds[i] = s[i + 1];
    double top = b;
    for (int i = 0; i < d; ++i) top -= c[i] * s[i];
    ds[d - 1] = top / c[d];
  };
  return p;
}

}  // namespace neurlp
