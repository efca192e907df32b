#include "neurlp/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace neurlp {

namespace {

double ipow(double x, int e) {
  double r = 1.0;
  for (int k = 0; k < e; ++k) r *= x;
  return r;
}

std::string monomial_name(const std::vector<int>& exps,
                          const std::vector<std::string>& vars) {
  std::string s;
  for (size_t j = 0; j < exps.size(); ++j) {
    if (exps[j] == 0) continue;
    if (!s.empty()) s += "*";
    s += vars[j];
    if (exps[j] > 1) s += "^" + std::to_string(exps[j]);
  }
  return s.empty() ? "1" : s;
}

}  // namespace

int BasisFunction::max_slot() const {
  for (int j = int(exponents.size()) - 1; j >= 0; --j)
    if (exponents[j] != 0) return j;
  return -1;
}

double BasisFunction::eval(const double* in, int n_in) const {
  double m = 1.0;
  for (size_t j = 0; j < exponents.size(); ++j) {
    if (exponents[j] == 0) continue;
    if (int(j) >= n_in) throw std::invalid_argument("basis: missing input slot");
    m *= ipow(in[j], exponents[j]);
  }
  return tanh_outer ? std::tanh(m) : m;
}

double BasisFunction::eval_grad(const double* in, int n_in,
                                double* grad) const {
  double m = 1.0;
  for (size_t j = 0; j < exponents.size(); ++j) {
    if (exponents[j] == 0) continue;
    if (int(j) >= n_in) throw std::invalid_argument("basis: missing input slot");
    m *= ipow(in[j], exponents[j]);
  }
  for (int j = 0; j < n_in; ++j) {
    int e = j < int(exponents.size()) ? exponents[j] : 0;
    if (e == 0) {
      grad[j] = 0.0;
      continue;
    }
    double d = e * ipow(in[j], e - 1);
    for (size_t k = 0; k < exponents.size(); ++k) {
      if (int(k) == j || exponents[k] == 0) continue;
      d *= ipow(in[k], exponents[k]);
    }
    grad[j] = d;
  }
  if (tanh_outer) {
    double v = std::tanh(m);
    double dv = 1.0 - v * v;
    for (int j = 0; j < n_in; ++j) grad[j] *= dv;
    return v;
  }
  return m;
}

std::vector<BasisFunction> builtin_basis(int max_degree, int dim) {
  if (max_degree < 0 || dim < 1)
    throw std::invalid_argument("builtin_basis: bad degree/dim");
  std::vector<std::string> vars = dim_var_names(dim);
  std::vector<BasisFunction> out;
  std::vector<int> exps(dim, 0);
  // enumerate exponent tuples of fixed total degree, first slot descending
  auto rec = [&](auto&& self, int slot, int remaining) -> void {
    if (slot == dim - 1) {
      exps[slot] = remaining;
      out.push_back({monomial_name(exps, vars), exps, false});
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      exps[slot] = e;
      self(self, slot + 1, remaining - e);
    }
  };
  for (int deg = 0; deg <= max_degree; ++deg) rec(rec, 0, deg);
  return out;
}

std::vector<std::string> derivative_var_names(int order) {
  std::vector<std::string> v;
  std::string name = "u";
  for (int i = 0; i <= order; ++i) {
    v.push_back(name);
    name += "'";
  }
  return v;
}

std::vector<std::string> dim_var_names(int dim) {
  static const char* first[3] = {"x", "y", "z"};
  std::vector<std::string> v;
  for (int i = 0; i < dim; ++i)
    v.push_back(i < 3 ? first[i] : "u" + std::to_string(i));
  return v;
}

BasisFunction parse_basis(const std::string& expr,
                          const std::vector<std::string>& vars) {
  std::string body = expr;
  bool outer = false;
  if (body.rfind("tanh(", 0) == 0 && body.back() == ')') {
    outer = true;
    body = body.substr(5, body.size() - 6);
  }
  BasisFunction f;
  f.name = expr;
  f.exponents.assign(vars.size(), 0);
  f.tanh_outer = outer;
  if (body == "1") return f;

  // longest variable name first so u'' is not read as u followed by ''
  std::vector<size_t> order(vars.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return vars[a].size() > vars[b].size();
  });

  size_t pos = 0;
  bool expect_factor = true;
  while (pos < body.size()) {
    if (!expect_factor) {
      if (body[pos] != '*')
        throw std::invalid_argument("basis parse: expected '*' in " + expr);
      ++pos;
      expect_factor = true;
      continue;
    }
    size_t var = vars.size();
    for (size_t i : order) {
      if (body.compare(pos, vars[i].size(), vars[i]) == 0) {
        var = i;
        pos += vars[i].size();
        break;
      }
    }
    if (var == vars.size())
      throw std::invalid_argument("basis parse: unknown variable in " + expr);
    int e = 1;
    if (pos < body.size() && body[pos] == '^') {
      ++pos;
      size_t start = pos;
      while (pos < body.size() && std::isdigit(body[pos])) ++pos;
      if (start == pos)
        throw std::invalid_argument("basis parse: bad exponent in " + expr);
      e = std::stoi(body.substr(start, pos - start));
    }
    f.exponents[var] += e;
    expect_factor = false;
  }
  if (expect_factor)
    throw std::invalid_argument("basis parse: empty factor in " + expr);
  return f;
}

}  // namespace neurlp
