#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "neurlp/io.hpp"
#include "neurlp/ode_spec.hpp"
#include "neurlp/reference.hpp"
#include "neurlp/trainer.hpp"

using namespace neurlp;
namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* p = std::getenv("NEURLP_CLI");
  REQUIRE(p != nullptr);
  return p;
}

int run(const std::string& args, const std::string& capture = "") {
  std::string cmd = cli() + " " + args;
  if (!capture.empty()) cmd += " > " + capture + " 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& name) {
  fs::remove_all(name);
  fs::create_directories(name);
  return name;
}

OdeSpec cli_spec(int n = 41) {
  OdeSpec s = harmonic_spec(n, 0.1);
  s.coeffs = {0.9, 0.3, 1.1};  // keep every slot nonzero for gradcheck runs
  return s;
}

void write_spec(const std::string& path, const OdeSpec& s) {
  std::ofstream(path) << spec_to_json(s) << "\n";
}

}  // namespace

TEST_CASE("solve writes a solution, a manifest, and an oracle diff") {
  std::string out = fresh_dir("cli_solve");
  write_spec("cli_solve/spec.json", harmonic_spec(41, 0.1));
  int rc = run("solve --config cli_solve/spec.json --oracle analytic:cos --out " +
               out);
  CHECK(rc == 0);
  CHECK(fs::exists(out + "/solution.csv"));
  CHECK(fs::exists(out + "/oracle.csv"));
  Trajectory sol = read_trajectory_csv(out + "/solution.csv");
  CHECK(sol.n == 41);
  CHECK(sol.dim == 1);
  nlohmann::json diff = nlohmann::json::parse(slurp(out + "/diff.json"));
  CHECK(diff["sup_norm"].get<double>() < 5e-2);
  CHECK(diff["mse"].get<double>() < 1e-3);
  nlohmann::json man = nlohmann::json::parse(slurp(out + "/manifest.json"));
  CHECK(man["command"] == "solve");
  CHECK(man["artifacts"].size() >= 2);
}

TEST_CASE("repeated runs produce byte-identical artifacts") {
  std::string a = fresh_dir("cli_rep_a"), b = fresh_dir("cli_rep_b");
  write_spec("cli_rep_a/spec.json", cli_spec());
  CHECK(run("solve --config cli_rep_a/spec.json --seed 7 --out " + a) == 0);
  CHECK(run("solve --config cli_rep_a/spec.json --seed 7 --out " + b) == 0);
  CHECK(slurp(a + "/solution.csv") == slurp(b + "/solution.csv"));
}

TEST_CASE("batch solve emits one trajectory per spec") {
  std::string out = fresh_dir("cli_batch_out");
  fresh_dir("cli_batch_in");
  write_spec("cli_batch_in/alpha.json", cli_spec(31));
  OdeSpec cosh_spec = harmonic_spec(31, 0.1);
  cosh_spec.coeff_ref(0, 0, 0) = -1.0;
  write_spec("cli_batch_in/beta.json", cosh_spec);
  CHECK(run("solve --batch cli_batch_in --out " + out) == 0);
  CHECK(fs::exists(out + "/alpha_solution.csv"));
  CHECK(fs::exists(out + "/beta_solution.csv"));
  CHECK(fs::exists(out + "/manifest.json"));
}

TEST_CASE("configuration problems exit with status 2") {
  fresh_dir("cli_bad");
  std::ofstream("cli_bad/broken.json") << "{ not json";
  CHECK(run("solve --config cli_bad/broken.json --out cli_bad", "cli_bad/log") == 2);
  CHECK(run("solve --config cli_bad/missing.json --out cli_bad", "cli_bad/log") == 2);
  CHECK(run("solve --no-such-flag", "cli_bad/log") == 2);
  CHECK(run("", "cli_bad/log") == 2);  // a subcommand is required
  // unknown oracle name
  write_spec("cli_bad/ok.json", cli_spec());
  CHECK(run("solve --config cli_bad/ok.json --oracle analytic:nope --out cli_bad",
            "cli_bad/log") == 2);
}

TEST_CASE("fit trains and writes the fitted spec with history") {
  std::string out = fresh_dir("cli_fit");
  OdeSpec seed = cli_spec(40);
  seed.init_conditions = {0.0, 1.0};
  write_spec("cli_fit/spec.json", seed);
  std::vector<double> times(40);
  for (int t = 0; t < 40; ++t) times[t] = 0.1 * t;
  write_trajectory_csv("cli_fit/sine.csv", analytic("sin", times));
  int rc = run(
      "fit --config cli_fit/spec.json --data cli_fit/sine.csv "
      "--groups coeffs --iters 12 --lr 0.02 --out " + out);
  CHECK(rc == 0);
  CHECK(fs::exists(out + "/fitted_spec.json"));
  CHECK(fs::exists(out + "/solution.csv"));
  OdeSpec fitted = load_spec(out + "/fitted_spec.json");
  CHECK(validate(fitted).empty());
  std::string hist = slurp(out + "/history.csv");
  CHECK(hist.find("loss") != std::string::npos);
  int lines = 0;
  for (char c : hist) lines += c == '\n';
  CHECK(lines == 13);  // header + one row per iteration
}

TEST_CASE("gradcheck passes on an all-nonzero spec and reports json") {
  std::string out = fresh_dir("cli_gc");
  OdeSpec s = cli_spec(11);
  s.init_mask = {1, 0};
  write_spec("cli_gc/spec.json", s);
  CHECK(run("gradcheck --config cli_gc/spec.json --fd-eps 1e-4 --out " + out,
            "cli_gc/stdout.txt") == 0);
  nlohmann::json rep = nlohmann::json::parse(slurp(out + "/gradcheck.json"));
  REQUIRE(rep.is_array());
  CHECK(rep.size() >= 4);  // coeffs, rhs, steps, init
  for (const auto& row : rep) CHECK(row["pass"].get<bool>());
  CHECK(slurp("cli_gc/stdout.txt").find("pass") != std::string::npos);
}

TEST_CASE("discover lists the basis and runs a short identification") {
  fresh_dir("cli_disc");
  CHECK(run("discover --list-basis --degree 2 --dim 2", "cli_disc/basis.txt") == 0);
  std::string basis = slurp("cli_disc/basis.txt");
  CHECK(basis.find("x*y") != std::string::npos);
  CHECK(basis.find("x^2") != std::string::npos);

  IvpProblem p;
  p.dim = 2;
  p.f = [](double, const double* s, double* ds) {
    ds[0] = s[1];
    ds[1] = -s[0];
  };
  p.state0 = {1.0, 0.0};
  p.h = 0.05;
  p.n_steps = 39;
  write_trajectory_csv("cli_disc/orbit.csv", rk4(p).traj);
  std::string out = fresh_dir("cli_disc_out");
  int rc = run(
      "discover cli_disc/orbit.csv --degree 1 --iters 12 --lr 0.05 "
      "--threshold 0.01 --out " + out, "cli_disc/run.txt");
  CHECK(rc == 0);
  CHECK(fs::exists(out + "/equations.txt"));
  DiscoveryModel back = model_from_checkpoint(slurp(out + "/checkpoint.json"));
  CHECK(back.dim == 2);
  CHECK(back.basis.size() == 3);
}

TEST_CASE("benchmark produces the comparison table") {
  std::string out = fresh_dir("cli_bench");
  int rc = run("benchmark --lengths 40 --trials 1 --iters 3 --out " + out,
               "cli_bench/stdout.txt");
  CHECK(rc == 0);
  std::string csv = slurp(out + "/benchmark.csv");
  CHECK(csv.find("length") != std::string::npos);
  CHECK(csv.find("40") != std::string::npos);
  nlohmann::json rows = nlohmann::json::parse(slurp(out + "/benchmark.json"));
  CHECK(rows.size() == 1);
}
