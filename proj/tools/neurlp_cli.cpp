#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "neurlp/assembly.hpp"
#include "neurlp/basis.hpp"
#include "neurlp/benchmark.hpp"
#include "neurlp/gradients.hpp"
#include "neurlp/io.hpp"
#include "neurlp/kkt.hpp"
#include "neurlp/ode_spec.hpp"
#include "neurlp/reference.hpp"
#include "neurlp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace neurlp;

namespace {

// exit 2: configuration problem; exit 1: numeric failure
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// one manifest per run: phases timed, artifacts checksummed
struct Manifest {
  json j;
  double mark = now_s();

  Manifest(const std::string& command, const std::string& config,
           uint64_t seed, const std::string& out_dir) {
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["phases"] = json::object();
    j["artifacts"] = json::object();
  }
  void phase(const std::string& name) {
    double t = now_s();
    j["phases"][name] = t - mark;
    mark = t;
  }
  void artifact(const std::string& path) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  (unsigned long long)file_checksum(path));
    j["artifacts"][path] = hex;
  }
  void write(const std::string& out_dir) {
    std::ofstream f(out_dir + "/manifest.json");
    f << j.dump(2) << "\n";
  }
};

void ensure_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory: " + out);
}

OdeSpec load_spec_checked(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path);
  OdeSpec spec;
  try {
    spec = load_spec(path);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config parse: ") + ex.what());
  }
  auto errs = validate(spec);
  if (!errs.empty()) throw ConfigError("invalid spec: " + errs.front());
  return spec;
}

Trajectory solution_trajectory(const OdeSpec& spec, const Solution& sol) {
  Trajectory tr;
  tr.n = spec.n_steps;
  tr.dim = spec.dim;
  tr.times = spec.grid_times();
  tr.values.resize(size_t(tr.n) * tr.dim);
  for (int t = 0; t < tr.n; ++t)
    for (int x = 0; x < tr.dim; ++x) tr.at(t, x) = sol.value(x, t, 0);
  return tr;
}

Trajectory oracle_trajectory(const std::string& oracle, const OdeSpec& spec) {
  auto times = spec.grid_times();
  if (oracle.rfind("analytic:", 0) == 0) {
    try {
      return analytic(oracle.substr(9), times);
    } catch (const std::exception& ex) {
      throw ConfigError(ex.what());
    }
  }
  if (oracle == "rk4") {
    if (!spec.time_invariant || spec.dim != 1)
      throw ConfigError("rk4 oracle needs a time-invariant scalar spec");
    double h = spec.steps[0];
    for (double s : spec.steps)
      if (std::abs(s - h) > 1e-12 * h)
        throw ConfigError("rk4 oracle needs a uniform grid");
    std::vector<double> c(spec.coeffs.begin(),
                          spec.coeffs.begin() + spec.order + 1);
    IvpProblem p = linear_ivp(c, spec.rhs[0], spec.init_conditions, h,
                              spec.n_steps - 1);
    Rk4Result r = rk4(p);
    if (r.diverged) throw NumericError("rk4 oracle diverged");
    return r.traj;
  }
  throw ConfigError("unknown oracle: " + oracle + " (use analytic:NAME or rk4)");
}

json diff_report(const Trajectory& a, const Trajectory& b) {
  if (a.n != b.n || a.dim != b.dim)
    throw NumericError("oracle/solution shape mismatch");
  double sup = 0.0, mse = 0.0;
  for (int t = 0; t < a.n; ++t)
    for (int x = 0; x < a.dim; ++x) {
      double d = std::abs(a.at(t, x) - b.at(t, x));
      sup = std::max(sup, d);
      mse += d * d;
    }
  mse /= double(a.n) * a.dim;
  return json{{"sup_norm", sup}, {"mse", mse}};
}

int cmd_solve(const std::string& config, const std::string& batch_dir,
              const std::string& oracle, const std::string& out, uint64_t seed,
              int threads) {
  ensure_out(out);
  QpConfig qp;
  qp.workers = threads;
  Manifest man("solve", config.empty() ? batch_dir : config, seed, out);

  if (!batch_dir.empty()) {
    if (!fs::is_directory(batch_dir))
      throw ConfigError("batch path is not a directory: " + batch_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(batch_dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no .json specs in " + batch_dir);
    std::vector<OdeSpec> specs;
    std::vector<ConstraintSystem> systems;
    for (const auto& f : files) {
      specs.push_back(load_spec_checked(f.string()));
      systems.push_back(assemble(specs.back()));
    }
    man.phase("load");
    std::vector<Solution> sols = solve_batch(systems, qp);
    man.phase("solve");
    bool all_ok = true;
    for (size_t i = 0; i < sols.size(); ++i) {
      if (!sols[i].ok) {
        std::cerr << files[i].filename().string() << ": " << sols[i].message
                  << "\n";
        all_ok = false;
        continue;
      }
      std::string dst = out + "/" + files[i].stem().string() + "_solution.csv";
      write_trajectory_csv(dst, solution_trajectory(specs[i], sols[i]));
      man.artifact(dst);
    }
    man.phase("write");
    man.write(out);
    if (!all_ok) throw NumericError("one or more batch solves failed");
    return 0;
  }

  if (config.empty()) throw ConfigError("solve needs --config or --batch");
  OdeSpec spec = load_spec_checked(config);
  ConstraintSystem cs = assemble(spec);
  man.phase("load");
  Solution sol = solve(cs, qp);
  man.phase("solve");
  if (!sol.ok) throw NumericError("solver failed: " + sol.message);
  Trajectory mine = solution_trajectory(spec, sol);
  std::string dst = out + "/solution.csv";
  write_trajectory_csv(dst, mine);
  man.artifact(dst);
  std::cout << "solved: " << spec.n_steps << " points, path "
            << (sol.path == SolvePath::dense      ? "dense"
                : sol.path == SolvePath::banded   ? "banded"
                                                  : "iterative")
            << ", max Taylor residual " << format_g17(sol.max_taylor_residual)
            << "\n";
  if (!oracle.empty()) {
    Trajectory ref = oracle_trajectory(oracle, spec);
    std::string rdst = out + "/oracle.csv";
    write_trajectory_csv(rdst, ref);
    man.artifact(rdst);
    json d = diff_report(mine, ref);
    std::ofstream(out + "/diff.json") << d.dump(2) << "\n";
    man.artifact(out + "/diff.json");
    std::cout << "oracle diff: sup_norm=" << format_g17(d["sup_norm"].get<double>())
              << " mse=" << format_g17(d["mse"].get<double>()) << "\n";
  }
  man.phase("write");
  man.write(out);
  return 0;
}

unsigned parse_groups(const std::string& groups) {
  unsigned which = 0;
  std::string item;
  std::stringstream ss(groups);
  while (std::getline(ss, item, ',')) {
    if (item == "coeffs") which |= PG_coeffs;
    else if (item == "rhs") which |= PG_rhs;
    else if (item == "steps") which |= PG_steps;
    else if (item == "init") which |= PG_init;
    else throw ConfigError("unknown parameter group: " + item);
  }
  if (!which) throw ConfigError("empty parameter group set");
  return which;
}

TrainConfig train_config(int iters, double lr, const std::string& optimizer,
                         const std::string& loss, double noise, double tau,
                         uint64_t seed, int threads) {
  TrainConfig cfg;
  cfg.iterations = iters;
  cfg.learning_rate = lr;
  if (optimizer == "plain") cfg.optimizer = Optimizer::plain;
  else if (optimizer == "momentum") cfg.optimizer = Optimizer::momentum;
  else if (optimizer == "adam") cfg.optimizer = Optimizer::adaptive_moment;
  else throw ConfigError("unknown optimizer: " + optimizer);
  if (loss == "mse") cfg.loss = LossKind::mse;
  else if (loss == "l1") cfg.loss = LossKind::l1;
  else throw ConfigError("unknown loss: " + loss);
  cfg.noise_sigma = noise;
  cfg.threshold_tau = tau;
  cfg.seed = seed;
  cfg.qp.workers = threads;
  if (cfg.learning_rate <= 0.0 || cfg.iterations < 1)
    throw ConfigError("invalid training config");
  return cfg;
}

int cmd_fit(const std::string& config, const std::string& data_path,
            const std::string& groups, int iters, double lr,
            const std::string& optimizer, const std::string& loss,
            double noise, const std::string& out, uint64_t seed, int threads) {
  ensure_out(out);
  Manifest man("fit", config, seed, out);
  OdeSpec spec = load_spec_checked(config);
  Trajectory data;
  try {
    data = read_trajectory_csv(data_path);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("data: ") + ex.what());
  }
  unsigned which = parse_groups(groups);
  TrainConfig cfg =
      train_config(iters, lr, optimizer, loss, noise, -1.0, seed, threads);
  man.phase("load");
  FitResult fr = fit(spec, data, which, cfg);
  man.phase("train");

  std::ofstream(out + "/fitted_spec.json") << spec_to_json(fr.spec) << "\n";
  man.artifact(out + "/fitted_spec.json");
  std::ofstream hist(out + "/history.csv");
  hist << "iteration,loss\n";
  for (size_t i = 0; i < fr.history.size(); ++i)
    hist << i + 1 << "," << format_g17(fr.history[i]) << "\n";
  hist.close();
  man.artifact(out + "/history.csv");
  if (fr.best_solution.ok) {
    write_trajectory_csv(out + "/solution.csv",
                         solution_trajectory(fr.spec, fr.best_solution));
    man.artifact(out + "/solution.csv");
  }
  man.phase("write");
  man.write(out);
  if (!fr.ok) throw NumericError("fit failed: " + fr.message);
  std::cout << "final loss " << format_g17(fr.history.back()) << ", best "
            << format_g17(*std::min_element(fr.history.begin(),
                                            fr.history.end()))
            << "\n";
  return 0;
}

int cmd_discover(const std::vector<std::string>& data_paths, int degree,
                 const std::string& outer, int num_degree, int den_degree,
                 double tau, int iters, double lr, bool list_basis, int dim_flag,
                 int field_grid, const std::string& out, uint64_t seed,
                 int threads) {
  OuterForm of;
  if (outer == "identity") of = OuterForm::identity;
  else if (outer == "tanh") of = OuterForm::tanh_outer;
  else if (outer == "rational") of = OuterForm::rational;
  else throw ConfigError("unknown outer form: " + outer);

  std::vector<Trajectory> data;
  for (const auto& p : data_paths) {
    try {
      data.push_back(read_trajectory_csv(p));
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("data: ") + ex.what());
    }
  }
  int dim = data.empty() ? dim_flag : data.front().dim;

  if (list_basis) {
    for (const auto& f : builtin_basis(degree, dim)) std::cout << f.name << "\n";
    return 0;
  }
  if (data.empty()) throw ConfigError("discover needs at least one data CSV");

  ensure_out(out);
  Manifest man("discover", data_paths.front(), seed, out);
  DiscoveryModel model =
      make_discovery_model(dim, degree, of, num_degree, den_degree);
  TrainConfig cfg =
      train_config(iters, lr, "adam", "mse", 0.0, tau, seed, threads);
  man.phase("load");
  DiscoveryResult dr = discover(data, model, GridParam{}, cfg);
  man.phase("train");

  std::ofstream(out + "/checkpoint.json")
      << checkpoint_json(dr.model, dr.history, seed) << "\n";
  man.artifact(out + "/checkpoint.json");
  std::ofstream eq(out + "/equations.txt");
  for (const auto& line : dr.equations) {
    eq << line << "\n";
    std::cout << line << "\n";
  }
  eq.close();
  man.artifact(out + "/equations.txt");

  if (field_grid > 1 && dim == 2) {
    std::ofstream f(out + "/vector_field.csv");
    f << "x,y,dx,dy\n";
    double s[2], v[2];
    for (int i = 0; i < field_grid; ++i)
      for (int j = 0; j < field_grid; ++j) {
        s[0] = -2.0 + 4.0 * i / (field_grid - 1);
        s[1] = -2.0 + 4.0 * j / (field_grid - 1);
        eval_vector_field(dr.model, s, v);
        f << format_g17(s[0]) << "," << format_g17(s[1]) << ","
          << format_g17(v[0]) << "," << format_g17(v[1]) << "\n";
      }
    f.close();
    man.artifact(out + "/vector_field.csv");
  }
  man.phase("write");
  man.write(out);
  if (!dr.ok) throw NumericError("discover failed: " + dr.message);
  return 0;
}

int cmd_gradcheck(const std::string& config, const std::string& loss_name,
                  double fd_eps, const std::string& out, uint64_t seed) {
  ensure_out(out);
  Manifest man("gradcheck", config, seed, out);
  OdeSpec spec = load_spec_checked(config);
  GradCheckLoss loss;
  if (loss_name == "quadratic_target") loss = GradCheckLoss::quadratic_target;
  else if (loss_name == "sum_u") loss = GradCheckLoss::sum_u;
  else if (loss_name == "terminal_u") loss = GradCheckLoss::terminal_u;
  else throw ConfigError("unknown loss: " + loss_name);
  man.phase("load");
  GradCheckReport rep = gradcheck(spec, loss, fd_eps);
  man.phase("check");
  std::string text = rep.to_json();
  std::cout << text << "\n";
  std::ofstream(out + "/gradcheck.json") << text << "\n";
  man.artifact(out + "/gradcheck.json");
  man.phase("write");
  man.write(out);
  if (!rep.pass) throw NumericError("gradient check failed");
  return 0;
}

int cmd_benchmark(const std::string& lengths_txt, int trials, int iters,
                  const std::string& out, uint64_t seed) {
  ensure_out(out);
  Manifest man("benchmark", lengths_txt, seed, out);
  std::vector<int> lengths;
  std::string item;
  std::stringstream ss(lengths_txt);
  while (std::getline(ss, item, ',')) {
    int n = 0;
    try {
      n = std::stoi(item);
    } catch (...) {
      throw ConfigError("bad length: " + item);
    }
    if (n < 3) throw ConfigError("length too small: " + item);
    lengths.push_back(n);
  }
  if (lengths.empty()) throw ConfigError("no lengths given");
  if (trials < 1 || iters < 1) throw ConfigError("trials and iters must be >= 1");
  man.phase("load");
  auto rows = run_benchmark(lengths, trials, iters, seed);
  man.phase("run");
  std::ofstream csv(out + "/benchmark.csv");
  csv << "length,neurlp_seconds,neurlp_loss,baseline_seconds,baseline_loss,"
         "speedup\n";
  std::cout << "length  neurlp_s  baseline_s  speedup\n";
  for (const auto& r : rows) {
    double speedup = r.baseline_seconds / r.neurlp_seconds;
    csv << r.length << "," << format_g17(r.neurlp_seconds) << ","
        << format_g17(r.neurlp_loss) << "," << format_g17(r.baseline_seconds)
        << "," << format_g17(r.baseline_loss) << "," << format_g17(speedup)
        << "\n";
    std::printf("%6d  %8.4f  %10.4f  %7.2f\n", r.length, r.neurlp_seconds,
                r.baseline_seconds, speedup);
  }
  csv.close();
  man.artifact(out + "/benchmark.csv");
  std::ofstream(out + "/benchmark.json") << benchmark_json(rows) << "\n";
  man.artifact(out + "/benchmark.json");
  man.phase("write");
  man.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable sparse ODE solver and equation discovery"};
  app.require_subcommand(1);

  std::string config, batch_dir, oracle, out = ".", data_path;
  std::string groups = "coeffs", optimizer = "adam", loss = "mse";
  std::string outer = "identity", lengths = "40,100,300,500,1000";
  std::string gc_loss = "quadratic_target";
  std::vector<std::string> data_paths;
  uint64_t seed = 0;
  int threads = 0, iters = 2000, degree = 2, num_degree = -1, den_degree = -1;
  int trials = 3, dim_flag = 3, field_grid = 0, bench_iters = 50;
  double lr = 1e-2, noise = 0.0, tau = 0.1, fd_eps = 1e-4;
  bool list_basis = false;

  auto* s_solve = app.add_subcommand("solve", "Solve one spec or a batch");
  s_solve->add_option("--config", config, "OdeSpec JSON");
  s_solve->add_option("--batch", batch_dir, "directory of spec JSONs");
  s_solve->add_option("--oracle", oracle, "analytic:NAME or rk4");
  s_solve->add_option("--out", out, "output directory");
  s_solve->add_option("--seed", seed, "root seed");
  s_solve->add_option("--threads", threads, "worker pool size");

  auto* s_fit = app.add_subcommand("fit", "Train spec parameters on data");
  s_fit->add_option("--config", config, "OdeSpec JSON")->required();
  s_fit->add_option("--data", data_path, "trajectory CSV")->required();
  s_fit->add_option("--groups", groups, "coeffs,rhs,steps,init");
  s_fit->add_option("--iters", iters, "iterations");
  s_fit->add_option("--lr", lr, "learning rate");
  s_fit->add_option("--optimizer", optimizer, "plain|momentum|adam");
  s_fit->add_option("--loss", loss, "mse|l1");
  s_fit->add_option("--noise-sigma", noise, "per-iteration target noise");
  s_fit->add_option("--out", out, "output directory");
  s_fit->add_option("--seed", seed, "root seed");
  s_fit->add_option("--threads", threads, "worker pool size");

  auto* s_disc = app.add_subcommand("discover", "Sparse equation discovery");
  s_disc->add_option("data", data_paths, "trajectory CSVs");
  s_disc->add_option("--degree", degree, "basis total degree");
  s_disc->add_option("--outer", outer, "identity|tanh|rational");
  s_disc->add_option("--num-degree", num_degree, "rational numerator degree");
  s_disc->add_option("--den-degree", den_degree, "rational denominator degree");
  s_disc->add_option("--threshold", tau, "sparsity cutoff tau");
  s_disc->add_option("--iters", iters, "iterations");
  s_disc->add_option("--lr", lr, "learning rate");
  s_disc->add_flag("--list-basis", list_basis, "print basis and exit");
  s_disc->add_option("--dim", dim_flag, "dimension for --list-basis");
  s_disc->add_option("--field-grid", field_grid,
                     "sample learned field on an N x N grid (dim 2)");
  s_disc->add_option("--out", out, "output directory");
  s_disc->add_option("--seed", seed, "root seed");
  s_disc->add_option("--threads", threads, "worker pool size");

  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference audit");
  s_gc->add_option("--config", config, "OdeSpec JSON")->required();
  s_gc->add_option("--loss", gc_loss, "quadratic_target|sum_u|terminal_u");
  s_gc->add_option("--fd-eps", fd_eps, "finite-difference base step");
  s_gc->add_option("--out", out, "output directory");
  s_gc->add_option("--seed", seed, "root seed");

  auto* s_bench = app.add_subcommand("benchmark", "Fit timing vs RK4 shooting");
  s_bench->add_option("--lengths", lengths, "comma-separated step counts");
  s_bench->add_option("--trials", trials, "wall-clock trials (min taken)");
  s_bench->add_option("--iters", bench_iters, "training iterations");
  s_bench->add_option("--out", out, "output directory");
  s_bench->add_option("--seed", seed, "root seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s_solve->parsed())
      return cmd_solve(config, batch_dir, oracle, out, seed, threads);
    if (s_fit->parsed())
      return cmd_fit(config, data_path, groups, iters, lr, optimizer, loss,
                     noise, out, seed, threads);
    if (s_disc->parsed())
      return cmd_discover(data_paths, degree, outer, num_degree, den_degree,
                          tau, iters, lr, list_basis, dim_flag, field_grid, out,
                          seed, threads);
    if (s_gc->parsed()) return cmd_gradcheck(config, gc_loss, fd_eps, out, seed);
    if (s_bench->parsed())
      return cmd_benchmark(lengths, trials, bench_iters, out, seed);
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const NumericError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
