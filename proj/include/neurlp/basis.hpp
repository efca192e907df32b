#pragma once
#include <string>
#include <vector>

namespace neurlp {

// Scalar basis function: monomial over a fixed tuple of input slots, with an
// optional tanh wrap. Slot meaning is fixed by the caller — derivative orders
// (u, u', u'', ...) of one dimension for auxiliary-variable terms, or the
// order-0 state of each dimension (x, y, z, ...) for equation discovery.
struct BasisFunction {
  std::string name;
  std::vector<int> exponents;  // per slot; empty/all-zero means the constant 1
  bool tanh_outer = false;

  int max_slot() const;  // highest slot actually read, -1 for constant
  double eval(const double* in, int n_in) const;
  // value plus partials w.r.t. each slot (grad length n_in).
  double eval_grad(const double* in, int n_in, double* grad) const;
};

// All monomials over `dim` variables up to total degree `max_degree`,
// constant first, then graded-lexicographic (degree ascending; within a
// degree the first variable's exponent descends): 1, x, y, x^2, x*y, y^2.
std::vector<BasisFunction> builtin_basis(int max_degree, int dim);

// Slot-name tables for the two contexts.
std::vector<std::string> derivative_var_names(int order);  // u, u', u'', ...
std::vector<std::string> dim_var_names(int dim);           // x, y, z, u3, ...

// Grammar: "1" | factor ('*' factor)* | "tanh(" product ")" with
// factor = var ('^' uint)?. vars gives the slot names (longest match wins).
// Throws std::invalid_argument on anything else.
BasisFunction parse_basis(const std::string& expr,
                          const std::vector<std::string>& vars);

}  // namespace neurlp
