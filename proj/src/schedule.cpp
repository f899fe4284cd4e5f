#include "segbench/schedule.hpp"

#include <cmath>
#include <string>

#include "segbench/error.hpp"

namespace segbench {

void TrainSchedule::validate() const {
  if (total_steps <= 0) throw Error("schedule: total_steps must be positive");
  if (micro_batch <= 0 || effective_batch <= 0 || effective_batch % micro_batch != 0) {
    throw Error("schedule: micro_batch (" + std::to_string(micro_batch) + ") must divide effective_batch (" +
                std::to_string(effective_batch) + ")");
  }
  if (!(encoder_lr > 0.0) || !(decoder_lr > 0.0)) throw Error("schedule: learning rates must be positive");
  if (weight_decay < 0.0) throw Error("schedule: weight_decay must be non-negative");
  if (seeds.empty()) throw Error("schedule: at least one seed is required");
}

double poly_lr(std::int64_t step, std::int64_t total_steps, double base_lr, double power) {
  if (total_steps <= 0) throw Error("poly_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw Error("poly_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (step == 0) return base_lr;
  if (step == total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::pow(frac, power);
}

}  // namespace segbench
