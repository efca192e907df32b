#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace neurlp {

struct BenchRow {
  int length = 0;  // trajectory points
  double neurlp_seconds = 0.0, neurlp_loss = 0.0;
  double baseline_seconds = 0.0, baseline_loss = 0.0;
};

// Coefficient fit of an order-2 time-invariant ODE to a noisy sine, timed
// against a classical shooting baseline (RK4 rollout, central-difference
// coefficient gradients, same optimizer and iteration budget). Wall time is
// the minimum over `trials` runs; the noise draw is fixed per length.
std::vector<BenchRow> run_benchmark(const std::vector<int>& lengths, int trials,
                                    int iterations, uint64_t seed);

std::string benchmark_json(const std::vector<BenchRow>& rows);

}  // namespace neurlp
