#pragma once
#include <vector>

#include "neurlp/kkt.hpp"
#include "neurlp/ode_spec.hpp"

namespace neurlp {

struct NonlinearResidual {
  double loss = 0.0;
  std::vector<double> g;  // dL/dz over every solution component
};

// Consistency penalty tying each auxiliary chain to its basis function:
//   (1/n) * sum over (x, k, t) of (nu_k(x,t) - f_k(u_x(t), u_x'(t), ...))^2
// Basis inputs are the derivative orders 0..d of the owning dimension.
NonlinearResidual nonlinear_residual(const Solution& sol, const OdeSpec& spec);

}  // namespace neurlp
