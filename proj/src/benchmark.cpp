#include "neurlp/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "neurlp/io.hpp"
#include "neurlp/rng.hpp"
#include "neurlp/trainer.hpp"

namespace neurlp {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Trajectory noisy_sine(int n, double h, uint64_t seed) {
  Trajectory tr;
  tr.n = n;
  tr.dim = 1;
  tr.times.resize(n);
  tr.values.resize(n);
  auto rng = rng_stream(seed, "bench-noise-" + std::to_string(n));
  std::normal_distribution<double> gauss(0.0, 0.1);
  for (int t = 0; t < n; ++t) {
    tr.times[t] = h * t;
    tr.values[t] = std::sin(h * t) + gauss(rng);
  }
  return tr;
}

OdeSpec bench_spec(const Trajectory& tr, double h) {
  OdeSpec s;
  s.order = 2;
  s.n_steps = tr.n;
  s.dim = 1;
  s.time_invariant = true;
  s.coeffs = {0.5, 0.3, 1.0};
  s.rhs = {0.0};
  s.steps.assign(tr.n - 1, h);
  s.init_conditions = {tr.at(0, 0), (tr.at(1, 0) - tr.at(0, 0)) / h};
  s.init_mask = {1, 1};
  return s;
}

// single RK4 rollout of c2 u'' + c1 u' + c0 u = 0 from the pinned start
double shoot_loss(const double* c, const Trajectory& tr, double h, double u0,
                  double v0) {
  double c2 = c[2];
  if (std::abs(c2) < 1e-8) c2 = c2 < 0.0 ? -1e-8 : 1e-8;
  const double a0 = -c[0] / c2, a1 = -c[1] / c2;
  double u = u0, v = v0;
  double r0 = u - tr.at(0, 0);
  double loss = r0 * r0;
  for (int t = 0; t + 1 < tr.n; ++t) {
    double k1u = v, k1v = a0 * u + a1 * v;
    double u2 = u + 0.5 * h * k1u, v2 = v + 0.5 * h * k1v;
    double k2u = v2, k2v = a0 * u2 + a1 * v2;
    double u3 = u + 0.5 * h * k2u, v3 = v + 0.5 * h * k2v;
    double k3u = v3, k3v = a0 * u3 + a1 * v3;
    double u4 = u + h * k3u, v4 = v + h * k3v;
    double k4u = v4, k4v = a0 * u4 + a1 * v4;
    u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (!std::isfinite(u) || std::abs(u) > 1e8) return 1e12;
    double r = u - tr.at(t + 1, 0);
    loss += r * r;
  }
  return loss / tr.n;
}

struct ShootResult {
  double seconds = 0.0, loss = 0.0;
};

ShootResult shoot_fit(const Trajectory& tr, double h, int iterations) {
  double u0 = tr.at(0, 0), v0 = (tr.at(1, 0) - tr.at(0, 0)) / h;
  double c[3] = {0.5, 0.3, 1.0};
  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  double best = std::numeric_limits<double>::infinity();
  double t0 = now_seconds();
  for (int it = 1; it <= iterations; ++it) {
    best = std::min(best, shoot_loss(c, tr, h, u0, v0));
    double g[3];
    for (int j = 0; j < 3; ++j) {
      double save = c[j], d = 1e-6 * (1.0 + std::abs(save));
      c[j] = save + d;
      double lp = shoot_loss(c, tr, h, u0, v0);
      c[j] = save - d;
      double lm = shoot_loss(c, tr, h, u0, v0);
      c[j] = save;
      g[j] = (lp - lm) / (2.0 * d);
    }
    double b1 = 1.0 - std::pow(0.9, it), b2 = 1.0 - std::pow(0.999, it);
    for (int j = 0; j < 3; ++j) {
      m[j] = 0.9 * m[j] + 0.1 * g[j];
      v[j] = 0.999 * v[j] + 0.001 * g[j] * g[j];
      c[j] -= 1e-2 * (m[j] / b1) / (std::sqrt(v[j] / b2) + 1e-8);
    }
  }
  ShootResult r;
  r.seconds = now_seconds() - t0;
  r.loss = std::min(best, shoot_loss(c, tr, h, u0, v0));
  return r;
}

}  // namespace

std::vector<BenchRow> run_benchmark(const std::vector<int>& lengths, int trials,
                                    int iterations, uint64_t seed) {
  std::vector<BenchRow> out;
  const double h = 0.1;
  for (int n : lengths) {
    BenchRow row;
    row.length = n;
    Trajectory tr = noisy_sine(n, h, seed);
    OdeSpec spec = bench_spec(tr, h);
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.seed = seed;
    row.neurlp_seconds = std::numeric_limits<double>::infinity();
    row.baseline_seconds = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < trials; ++trial) {
      double t0 = now_seconds();
      FitResult fr = fit(spec, tr, PG_coeffs, cfg);
      double dt = now_seconds() - t0;
      if (dt < row.neurlp_seconds) {
        row.neurlp_seconds = dt;
        double best = std::numeric_limits<double>::infinity();
        for (double l : fr.history) best = std::min(best, l);
        row.neurlp_loss = best;
      }
      ShootResult sr = shoot_fit(tr, h, iterations);
      if (sr.seconds < row.baseline_seconds) {
        row.baseline_seconds = sr.seconds;
        row.baseline_loss = sr.loss;
      }
    }
    out.push_back(row);
  }
  return out;
}

std::string benchmark_json(const std::vector<BenchRow>& rows) {
  std::string s = "[";
  for (size_t i = 0; i < rows.size(); ++i) {
    s += i ? "," : "";
    s += "{\"length\":" + std::to_string(rows[i].length);
    s += ",\"neurlp_seconds\":" + format_g17(rows[i].neurlp_seconds);
    s += ",\"neurlp_loss\":" + format_g17(rows[i].neurlp_loss);
    s += ",\"baseline_seconds\":" + format_g17(rows[i].baseline_seconds);
    s += ",\"baseline_loss\":" + format_g17(rows[i].baseline_loss);
    s += "}";
  }
  s += "]";
  return s;
}

}  // namespace neurlp
