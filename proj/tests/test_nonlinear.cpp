#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "neurlp/assembly.hpp"
#include "neurlp/kkt.hpp"
#include "neurlp/nonlinear.hpp"
#include "neurlp/ode_spec.hpp"

using namespace neurlp;

namespace {

OdeSpec square_term_spec(int n_points) {
  OdeSpec s = harmonic_spec(n_points, 0.1);
  s.basis.push_back(parse_basis("u^2", derivative_var_names(2)));
  s.nonlinear_terms.push_back({0, {0.4}});
  return s;
}

// single-point scaffold: u-chain values then one auxiliary chain
Solution handmade(std::vector<double> u, std::vector<double> nu) {
  Solution sol;
  sol.order = int(u.size()) - 1;
  sol.n_steps = 1;
  sol.dim = 1;
  sol.n_terms = 1;
  sol.ok = true;
  sol.z = u;
  sol.z.insert(sol.z.end(), nu.begin(), nu.end());
  return sol;
}

}  // namespace

TEST_CASE("single-point square term: worked values") {
  OdeSpec s;
  s.order = 2;
  s.n_steps = 1;
  s.dim = 1;
  s.basis.push_back(parse_basis("u^2", derivative_var_names(2)));
  s.nonlinear_terms.push_back({0, {1.0}});
  Solution sol = handmade({2.0, 0.3, -0.1}, {3.0, 0.0, 0.0});
  NonlinearResidual r = nonlinear_residual(sol, s);
  // nu - u^2 = 3 - 4 = -1
  CHECK(r.loss == doctest::Approx(1.0));
  CHECK(r.g[3] == doctest::Approx(-2.0));  // d/d nu
  CHECK(r.g[0] == doctest::Approx(8.0));   // d/d u = -2r * 2u
  CHECK(r.g[1] == 0.0);
  CHECK(r.g[2] == 0.0);

  // exact consistency zeroes both the loss and the pull-back
  Solution consistent = handmade({2.0, 0.3, -0.1}, {4.0, 0.0, 0.0});
  NonlinearResidual rc = nonlinear_residual(consistent, s);
  CHECK(rc.loss == 0.0);
  for (double v : rc.g) CHECK(v == 0.0);
}

TEST_CASE("no nonlinear terms means a silent zero") {
  OdeSpec s = harmonic_spec(9, 0.1);
  Solution sol = solve(assemble(s));
  REQUIRE(sol.ok);
  NonlinearResidual r = nonlinear_residual(sol, s);
  CHECK(r.loss == 0.0);
  CHECK(r.g.size() == sol.z.size());
  for (double v : r.g) CHECK(v == 0.0);
}

TEST_CASE("pull-back matches finite differences through the basis") {
  OdeSpec s = square_term_spec(9);
  s.basis.push_back(parse_basis("tanh(u*u')", derivative_var_names(2)));
  s.nonlinear_terms.push_back({1, {-0.2}});
  ConstraintSystem cs = assemble(s);
  Solution sol = solve(cs);
  REQUIRE(sol.ok);
  NonlinearResidual r = nonlinear_residual(sol, s);
  CHECK(r.loss > 0.0);
  const double delta = 1e-6;
  for (int c = 0; c < cs.n_state; ++c) {
    Solution up = sol, dn = sol;
    up.z[c] += delta;
    dn.z[c] -= delta;
    double fd = (nonlinear_residual(up, s).loss - nonlinear_residual(dn, s).loss) /
                (2 * delta);
    double denom = std::max({std::abs(fd), std::abs(r.g[c]), 1e-6});
    CHECK(std::abs(fd - r.g[c]) / denom < 1e-4);
  }
  // columns past the state block (tolerance, slacks) are never touched
  for (size_t c = cs.n_state; c < r.g.size(); ++c) CHECK(r.g[c] == 0.0);
}

TEST_CASE("per-point normalization averages over the grid") {
  // same pointwise mismatch at every t: loss is independent of n
  for (int n : {4, 8}) {
    OdeSpec s;
    s.order = 1;
    s.n_steps = n;
    s.dim = 1;
    s.basis.push_back(parse_basis("u^2", derivative_var_names(1)));
    s.nonlinear_terms.push_back({0, {1.0}});
    Solution sol;
    sol.order = 1;
    sol.n_steps = n;
    sol.dim = 1;
    sol.n_terms = 1;
    sol.z.assign(size_t(2) * n * 2, 0.0);
    for (int t = 0; t < n; ++t) {
      sol.z[size_t(t) * 2] = 2.0;           // u = 2
      sol.z[size_t(n + t) * 2] = 5.0;       // nu = 5, mismatch 1
    }
    NonlinearResidual r = nonlinear_residual(sol, s);
    CHECK(r.loss == doctest::Approx(1.0));
  }
}

TEST_CASE("shape mismatches are rejected") {
  OdeSpec s = square_term_spec(9);
  Solution sol = solve(assemble(harmonic_spec(9, 0.1)));  // no aux chain
  REQUIRE(sol.ok);
  CHECK_THROWS_AS(nonlinear_residual(sol, s), std::invalid_argument);
}

TEST_CASE("non-finite basis values are reported, not propagated") {
  OdeSpec s;
  s.order = 1;
  s.n_steps = 1;
  s.dim = 1;
  s.basis.push_back(parse_basis("u^2", derivative_var_names(1)));
  s.nonlinear_terms.push_back({0, {1.0}});
  Solution sol = handmade({1e308, 0.0}, {0.0, 0.0});
  sol.order = 1;
  CHECK_THROWS_AS(nonlinear_residual(sol, s), std::runtime_error);
}
