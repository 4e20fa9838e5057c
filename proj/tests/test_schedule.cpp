#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sckd/error.hpp"
#include "sckd/schedule.hpp"

using namespace sckd;

TEST_CASE("one-cycle endpoints and peak") {
  const OptimizerSpec spec;
  for (std::int64_t total : {3, 10, 57, 1000, 4001}) {
    CHECK(lr_schedule(0, total, spec) == 1e-3);
    const std::int64_t peak = warmup_steps(total, spec);
    CHECK(peak == static_cast<std::int64_t>(std::floor(0.4 * total)));
    CHECK(lr_schedule(peak, total, spec) == doctest::Approx(1e-2).epsilon(1e-12));
    CHECK(std::abs(lr_schedule(total - 1, total, spec) - 1e-7) <= 1e-9);
    double hi = 0, lo = 1;
    for (std::int64_t s = 0; s < total; ++s) {
      const double lr = lr_schedule(s, total, spec);
      hi = std::max(hi, lr);
      lo = std::min(lo, lr);
    }
    CHECK(std::abs(hi - 1e-2) <= 1e-9);
    CHECK(lo >= 1e-7 - 1e-15);
  }
}

TEST_CASE("warm-up rises and decay falls monotonically") {
  const OptimizerSpec spec;
  const std::int64_t total = 200, peak = warmup_steps(total, spec);
  for (std::int64_t s = 1; s <= peak; ++s) CHECK(lr_schedule(s, total, spec) > lr_schedule(s - 1, total, spec));
  for (std::int64_t s = peak + 1; s < total; ++s) CHECK(lr_schedule(s, total, spec) < lr_schedule(s - 1, total, spec));
  // continuity: no jump larger than the steeper of the warm-up increment and the cosine's peak slope
  const double inc = std::max((spec.max_lr - spec.initial_lr) / peak,
                              (spec.max_lr - spec.min_lr) * std::numbers::pi / (2.0 * (total - 1 - peak)));
  for (std::int64_t s = 1; s < total; ++s)
    CHECK(std::abs(lr_schedule(s, total, spec) - lr_schedule(s - 1, total, spec)) <= inc + 1e-12);
}

TEST_CASE("degenerate lengths and contract") {
  const OptimizerSpec spec;
  CHECK(lr_schedule(0, 1, spec) == 1e-3);
  CHECK(lr_schedule(1, 2, spec) == doctest::Approx(1e-7));
  CHECK_THROWS_AS(lr_schedule(5, 5, spec), ContractViolation);
  CHECK_THROWS_AS(lr_schedule(-1, 5, spec), ContractViolation);
  CHECK_THROWS_AS(lr_schedule(0, 0, spec), ContractViolation);
}

TEST_CASE("optimizer spec validation") {
  OptimizerSpec s;
  CHECK_NOTHROW(validate(s));
  s.min_lr = 0.02;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = OptimizerSpec{};
  s.warmup_fraction = 1.5;
  CHECK_THROWS_AS(validate(s), ConfigError);
}
