#include "fryshort/train/schedule.hpp"

#include <cmath>
#include <string>

#include "fryshort/util/errors.hpp"

namespace fryshort::train {

double lr_at(std::int64_t iter, const Schedule& s) {
  if (s.base_lr <= 0.0) throw ConfigError("base_lr must be positive");
  if (s.warmup_iters < 0 || s.warmup_iters >= s.total_iters)
    throw ConfigError("warmup_iters must lie in [0, total_iters)");
  if (iter < 0 || iter >= s.total_iters)
    throw ConfigError("iteration " + std::to_string(iter) + " outside [0, " +
                      std::to_string(s.total_iters) + ")");
  if (iter < s.warmup_iters)
    return s.base_lr * static_cast<double>(iter + 1) / static_cast<double>(s.warmup_iters);
  const double progress = static_cast<double>(iter - s.warmup_iters) /
                          static_cast<double>(s.total_iters - s.warmup_iters);
  return s.base_lr * std::pow(1.0 - progress, s.power);
}

}  // namespace fryshort::train
