#pragma once

#include <cstdint>
#include <vector>

namespace segbench {

/// Optimization recipe for one run. Defaults are the benchmark's standard recipe.
struct TrainSchedule {
  std::int64_t total_steps = 40000;  // optimizer updates
  int effective_batch = 16;
  int micro_batch = 1;
  double encoder_lr = 1e-5;
  double decoder_lr = 1e-4;
  double weight_decay = 0.05;
  double poly_power = 0.9;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  int accumulation() const { return effective_batch / micro_batch; }
  /// Throws on micro_batch not dividing effective_batch or non-positive rates.
  void validate() const;
};

/// base_lr * (1 - step/total_steps)^power. Throws for step outside [0, total_steps].
double poly_lr(std::int64_t step, std::int64_t total_steps, double base_lr, double power = 0.9);

}  // namespace segbench
