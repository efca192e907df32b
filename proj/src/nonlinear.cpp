#include "neurlp/nonlinear.hpp"

#include <cmath>
#include <stdexcept>

#include "neurlp/assembly.hpp"
#include "neurlp/basis.hpp"

namespace neurlp {

NonlinearResidual nonlinear_residual(const Solution& sol, const OdeSpec& spec) {
  if (sol.dim != spec.dim || sol.n_steps != spec.n_steps ||
      sol.order != spec.order || sol.n_terms != int(spec.nonlinear_terms.size()))
    throw std::invalid_argument("nonlinear_residual: solution/spec mismatch");

  NonlinearResidual out;
  out.g.assign(sol.z.size(), 0.0);
  if (spec.nonlinear_terms.empty()) return out;

  const int d = spec.order, n = spec.n_steps;
  const double inv_n = 1.0 / n;
  std::vector<double> in(d + 1), grad(d + 1);

  // column offsets mirror the assembled state layout
  auto state_col = [&](int x, int q, int t, int i) {
    return ((x * (1 + sol.n_terms) + q) * n + t) * (d + 1) + i;
  };

  for (int x = 0; x < spec.dim; ++x)
    for (size_t k = 0; k < spec.nonlinear_terms.size(); ++k) {
      const BasisFunction& f = spec.basis[spec.nonlinear_terms[k].basis_id];
      for (int t = 0; t < n; ++t) {
        for (int i = 0; i <= d; ++i) in[i] = sol.value(x, t, i);
        double fv = f.eval_grad(in.data(), d + 1, grad.data());
        if (!std::isfinite(fv))
          throw std::runtime_error("nonlinear_residual: non-finite basis value");
        double nu = sol.aux(int(k), x, t, 0);
        double r = nu - fv;
        out.loss += r * r * inv_n;
        double s = 2.0 * r * inv_n;
        out.g[state_col(x, int(k) + 1, t, 0)] += s;
        for (int i = 0; i <= d; ++i) {
          if (!std::isfinite(grad[i]))
            throw std::runtime_error("nonlinear_residual: non-finite basis grad");
          out.g[state_col(x, 0, t, i)] -= s * grad[i];
        }
      }
    }
  return out;
}

}  // namespace neurlp
