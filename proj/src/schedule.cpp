#include "sckd/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sckd/error.hpp"

namespace sckd {

void validate(const OptimizerSpec& spec) {
  if (!(spec.min_lr > 0.0 && spec.min_lr <= spec.initial_lr && spec.initial_lr <= spec.max_lr))
    throw ConfigError("optimizer learning rates must satisfy 0 < min_lr <= initial_lr <= max_lr");
  if (!(spec.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be non-negative");
  if (!(spec.warmup_fraction > 0.0 && spec.warmup_fraction < 1.0))
    throw ConfigError("optimizer.warmup_fraction must lie in (0, 1)");
  if (!(spec.beta1 >= 0.0 && spec.beta1 < 1.0 && spec.beta2 >= 0.0 && spec.beta2 < 1.0))
    throw ConfigError("optimizer betas must lie in [0, 1)");
}

std::int64_t warmup_steps(std::int64_t total_steps, const OptimizerSpec& spec) {
  if (total_steps <= 1) return 0;
  const auto w = static_cast<std::int64_t>(std::floor(spec.warmup_fraction * static_cast<double>(total_steps)));
  return std::clamp<std::int64_t>(w, 0, total_steps - 2);
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const OptimizerSpec& spec) {
  SCKD_EXPECT(total_steps > 0 && step >= 0 && step < total_steps, "lr_schedule: step outside [0, total_steps)");
  if (total_steps == 1) return spec.initial_lr;
  const std::int64_t peak = warmup_steps(total_steps, spec);
  if (step <= peak) {
    if (peak == 0) return spec.initial_lr;
    const double t = static_cast<double>(step) / static_cast<double>(peak);
    return spec.initial_lr + (spec.max_lr - spec.initial_lr) * t;
  }
  const double t = static_cast<double>(step - peak) / static_cast<double>(total_steps - 1 - peak);
  return spec.min_lr + (spec.max_lr - spec.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace sckd
