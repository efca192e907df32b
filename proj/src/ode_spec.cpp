#include "neurlp/ode_spec.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace neurlp {

using nlohmann::json;

std::vector<double> materialize_steps(const GridParam& g, int n) {
  if (n < 2) throw std::invalid_argument("materialize_steps: n < 2");
  if (int(g.raw.size()) != n - 1)
    throw std::invalid_argument("materialize_steps: raw length != n-1");
  std::vector<double> s(n - 1);
  for (int t = 0; t < n - 1; ++t) {
    if (g.transform == StepTransform::identity) {
      if (!(g.raw[t] > 0.0))
        throw std::invalid_argument("identity transform: non-positive raw step");
      s[t] = g.raw[t];
    } else {
      s[t] = g.scale / (1.0 + std::exp(-g.raw[t]));
    }
  }
  return s;
}

std::vector<double> materialize_step_grads(const GridParam& g, int n) {
  std::vector<double> d(n - 1);
  for (int t = 0; t < n - 1; ++t) {
    if (g.transform == StepTransform::identity) {
      d[t] = 1.0;
    } else {
      double sg = 1.0 / (1.0 + std::exp(-g.raw[t]));
      d[t] = g.scale * sg * (1.0 - sg);
    }
  }
  return d;
}

std::vector<double> OdeSpec::grid_times() const {
  std::vector<double> ts(n_steps, 0.0);
  for (int t = 1; t < n_steps; ++t) ts[t] = ts[t - 1] + steps[t - 1];
  return ts;
}

std::vector<std::string> validate(const OdeSpec& spec) {
  std::vector<std::string> errs;
  auto err = [&](const std::string& s) { errs.push_back(s); };
  if (spec.order < 1) err("order < 1");
  if (spec.n_steps < 2) err("n_steps < 2");
  if (spec.dim < 1) err("dim < 1");
  if (!errs.empty()) return errs;  // shape checks below assume sane sizes

  if (int(spec.steps.size()) != spec.n_steps - 1)
    err("steps length != n_steps-1");
  for (double s : spec.steps)
    if (!(s > 0.0)) {
      err("non-positive step");
      break;
    }
  size_t nc = size_t(spec.dim) * spec.coeff_steps();
  if (spec.coeffs.size() != nc * (spec.order + 1)) err("coeffs shape mismatch");
  if (spec.rhs.size() != nc) err("rhs shape mismatch");
  if (spec.init_conditions.size() != size_t(spec.dim) * spec.order)
    err("init_conditions length != dim*order");
  if (spec.init_mask.size() != size_t(spec.dim) * spec.order)
    err("init_mask length != dim*order");
  if (!errs.empty()) return errs;

  for (int x = 0; x < spec.dim; ++x)
    for (int t = 0; t < spec.coeff_steps(); ++t) {
      bool any = false;
      for (int i = 0; i <= spec.order; ++i)
        if (spec.coeff(x, t, i) != 0.0) any = true;
      if (!any) {
        std::ostringstream os;
        os << "degenerate equation row (dim " << x << ", t " << t << ")";
        err(os.str());
      }
    }
  for (size_t k = 0; k < spec.nonlinear_terms.size(); ++k) {
    const auto& nt = spec.nonlinear_terms[k];
    if (nt.basis_id < 0 || nt.basis_id >= int(spec.basis.size())) {
      err("unknown basis id in nonlinear term " + std::to_string(k));
      continue;
    }
    size_t want = spec.time_invariant ? 1 : size_t(spec.n_steps);
    if (nt.phi.size() != want)
      err("phi length mismatch in nonlinear term " + std::to_string(k));
    if (spec.basis[nt.basis_id].max_slot() > spec.order)
      err("basis reads derivative above order in term " + std::to_string(k));
  }
  return errs;
}

static json grid_to_json(const GridParam& g) {
  return json{{"raw", g.raw},
              {"scale", g.scale},
              {"transform", g.transform == StepTransform::identity
                                ? "identity"
                                : "bounded-sigmoid"}};
}

std::string spec_to_json(const OdeSpec& spec, int indent) {
  json j;
  j["order"] = spec.order;
  j["n_steps"] = spec.n_steps;
  j["dim"] = spec.dim;
  j["time_invariant"] = spec.time_invariant;
  j["central_diff"] = spec.central_diff;
  json coeffs = json::array();
  for (int x = 0; x < spec.dim; ++x) {
    json per_dim = json::array();
    for (int t = 0; t < spec.coeff_steps(); ++t) {
      json per_t = json::array();
      for (int i = 0; i <= spec.order; ++i)
        per_t.push_back(
            spec.coeffs[(size_t(x) * spec.coeff_steps() + t) * (spec.order + 1) + i]);
      per_dim.push_back(per_t);
    }
    coeffs.push_back(per_dim);
  }
  j["coeffs"] = coeffs;
  json rhs = json::array();
  for (int x = 0; x < spec.dim; ++x) {
    json per_dim = json::array();
    for (int t = 0; t < spec.coeff_steps(); ++t)
      per_dim.push_back(spec.rhs[size_t(x) * spec.coeff_steps() + t]);
    rhs.push_back(per_dim);
  }
  j["rhs"] = rhs;
  j["steps"] = spec.steps;
  json init = json::array();
  for (int x = 0; x < spec.dim; ++x)
    for (int i = 0; i < spec.order; ++i)
      init.push_back(json{{"dim", x},
                          {"order", i},
                          {"value", spec.init(x, i)},
                          {"pinned", spec.pinned(x, i)}});
  j["init"] = init;
  json nl = json::array();
  for (const auto& nt : spec.nonlinear_terms)
    nl.push_back(json{{"basis", spec.basis[nt.basis_id].name}, {"phi", nt.phi}});
  j["nonlinear"] = nl;
  return j.dump(indent);
}

OdeSpec spec_from_json_text(const std::string& text) {
  json j = json::parse(text);  // nlohmann reports byte position on failure
  OdeSpec spec;
  spec.order = j.at("order").get<int>();
  spec.n_steps = j.at("n_steps").get<int>();
  spec.dim = j.value("dim", 1);
  spec.time_invariant = j.value("time_invariant", false);
  spec.central_diff = j.value("central_diff", false);
  if (spec.order < 1 || spec.n_steps < 2)
    throw std::runtime_error("spec json: order/n_steps out of range");

  const json& coeffs = j.at("coeffs");
  for (const auto& per_dim : coeffs)
    for (const auto& per_t : per_dim)
      for (const auto& v : per_t) spec.coeffs.push_back(v.get<double>());
  const json& rhs = j.at("rhs");
  for (const auto& per_dim : rhs)
    if (per_dim.is_array())
      for (const auto& v : per_dim) spec.rhs.push_back(v.get<double>());
    else
      spec.rhs.push_back(per_dim.get<double>());

  if (j.contains("steps")) {
    spec.steps = j.at("steps").get<std::vector<double>>();
  } else if (j.contains("grid_param")) {
    const json& g = j.at("grid_param");
    GridParam gp;
    gp.raw = g.at("raw").get<std::vector<double>>();
    gp.scale = g.value("scale", 0.2);
    std::string tr = g.value("transform", "bounded-sigmoid");
    if (tr == "identity")
      gp.transform = StepTransform::identity;
    else if (tr == "bounded-sigmoid")
      gp.transform = StepTransform::bounded_sigmoid;
    else
      throw std::runtime_error("spec json: unknown step transform " + tr);
    spec.steps = materialize_steps(gp, spec.n_steps);
  } else {
    throw std::runtime_error("spec json: needs steps or grid_param");
  }

  spec.init_conditions.assign(size_t(spec.dim) * spec.order, 0.0);
  spec.init_mask.assign(size_t(spec.dim) * spec.order, 0);
  for (const auto& e : j.value("init", json::array())) {
    int x = e.value("dim", 0);
    int i = e.at("order").get<int>();
    if (x < 0 || x >= spec.dim || i < 0 || i >= spec.order)
      throw std::runtime_error("spec json: init entry out of range");
    spec.init_ref(x, i) = e.at("value").get<double>();
    spec.init_mask[size_t(x) * spec.order + i] = e.value("pinned", true) ? 1 : 0;
  }

  auto vars = derivative_var_names(spec.order);
  for (const auto& e : j.value("nonlinear", json::array())) {
    NonlinearTerm nt;
    std::string name = e.at("basis").get<std::string>();
    spec.basis.push_back(parse_basis(name, vars));
    nt.basis_id = int(spec.basis.size()) - 1;
    nt.phi = e.at("phi").get<std::vector<double>>();
    spec.nonlinear_terms.push_back(std::move(nt));
  }
  return spec;
}

OdeSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return spec_from_json_text(ss.str());
}

OdeSpec harmonic_spec(int n_points, double h, double u0, double du0) {
  OdeSpec spec;
  spec.order = 2;
  spec.n_steps = n_points;
  spec.dim = 1;
  spec.time_invariant = true;
  spec.coeffs = {1.0, 0.0, 1.0};  // u'' + u = 0
  spec.rhs = {0.0};
  spec.steps.assign(n_points - 1, h);
  spec.init_conditions = {u0, du0};
  spec.init_mask = {1, 1};
  return spec;
}

}  // namespace neurlp
