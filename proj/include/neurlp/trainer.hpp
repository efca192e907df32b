#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "neurlp/basis.hpp"
#include "neurlp/io.hpp"
#include "neurlp/kkt.hpp"
#include "neurlp/ode_spec.hpp"

namespace neurlp {

enum class Optimizer : uint8_t { plain, momentum, adaptive_moment };
enum class LossKind : uint8_t { mse, l1 };

struct TrainConfig {
  Optimizer optimizer = Optimizer::adaptive_moment;
  double learning_rate = 1e-2;
  int iterations = 2000;
  LossKind loss = LossKind::mse;
  double noise_sigma = 0.0;       // per-iteration Gaussian noise on the target
  double threshold_tau = -1.0;    // sparsity cutoff; < 0 disables
  double nonlinear_weight = 1.0;  // auxiliary-chain consistency weight
  uint64_t seed = 0;
  QpConfig qp;
};

// parameter-group selector for fit(); coeffs covers the phi weights too
enum : unsigned { PG_coeffs = 1, PG_rhs = 2, PG_steps = 4, PG_init = 8 };

struct FitResult {
  OdeSpec spec;             // lowest-training-loss parameters seen
  Solution best_solution;   // the solve that produced them
  std::vector<double> history;
  double first_step_grad = 0.0;  // ||d_steps|| at iteration 1
  bool ok = true;
  std::string message;
};

// Trains the selected parameter groups of `spec` so the solved trajectory
// tracks `data`; steps train through a bounded sigmoid reparametrization.
FitResult fit(const OdeSpec& spec, const Trajectory& data, unsigned which,
              const TrainConfig& cfg);

enum class OuterForm : uint8_t { identity, tanh_outer, rational };

// First-order system u' = outer(Theta(u) xi), one weight column per dim.
struct DiscoveryModel {
  std::vector<BasisFunction> basis;    // Theta columns (numerator for rational)
  std::vector<BasisFunction> basis_q;  // rational denominator columns
  int dim = 0;
  OuterForm outer = OuterForm::identity;
  std::vector<double> xi;    // basis.size() x dim, row-major
  std::vector<double> xi_q;  // basis_q.size() x dim
  std::vector<uint8_t> active, active_q;  // 0 entries are masked (held at 0)
};

DiscoveryModel make_discovery_model(int dim, int degree, OuterForm outer,
                                    int num_degree = -1, int den_degree = -1);

// |xi| < tau entries are zeroed and masked; masked entries never return.
// The denominator's constant column is exempt (keeps q bounded away from 0).
DiscoveryModel threshold(const DiscoveryModel& model, double tau);

struct DiscoveryResult {
  DiscoveryModel model;
  std::vector<double> history;
  std::vector<std::string> equations;
  bool ok = true;
  std::string message;
};

// Fits the model to one or more trajectories (shared sampling rate): the RHS
// is refreshed from basis values on the data each iteration, the linear system
// solved per trajectory, MSE pulled back to xi. Thresholds at 50% and 90% of
// the iteration budget when cfg.threshold_tau >= 0.
DiscoveryResult discover(const std::vector<Trajectory>& data,
                         const DiscoveryModel& model, const GridParam& grid,
                         const TrainConfig& cfg);

std::vector<std::string> format_equations(const DiscoveryModel& model);
void eval_vector_field(const DiscoveryModel& model, const double* state,
                       double* out);

std::string checkpoint_json(const DiscoveryModel& model,
                            const std::vector<double>& history, uint64_t seed);
DiscoveryModel model_from_checkpoint(const std::string& json_text);

}  // namespace neurlp
