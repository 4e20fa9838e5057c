#pragma once

#include <cstdint>

namespace sckd {

/// AdamW with a one-cycle learning-rate schedule.
struct OptimizerSpec {
  double initial_lr = 1e-3;
  double max_lr = 1e-2;
  double min_lr = 1e-7;
  double weight_decay = 0.01;
  double warmup_fraction = 0.4;
  double beta1 = 0.9;
  double beta2 = 0.999;

  bool operator==(const OptimizerSpec&) const = default;
};

void validate(const OptimizerSpec& spec);

/// Step of the cycle's peak: floor(warmup_fraction * total_steps), kept strictly before the last step.
std::int64_t warmup_steps(std::int64_t total_steps, const OptimizerSpec& spec);

/// One cycle: linear rise initial_lr -> max_lr up to warmup_steps, cosine decay to min_lr at the last step.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const OptimizerSpec& spec);

}  // namespace sckd
