#pragma once

#include <cstdint>

namespace fryshort::train {

/// Linear warmup into polynomial decay. The two branches agree at the
/// boundary: lr_at(warmup_iters) is exactly base_lr.
struct Schedule {
  double base_lr = 6e-5;
  std::int64_t warmup_iters = 150;
  std::int64_t total_iters = 2000;
  double power = 1.0;
};

/// Learning rate for iteration `iter` in [0, total_iters).
///   iter < warmup:  base_lr * (iter + 1) / warmup
///   otherwise:      base_lr * (1 - (iter - warmup) / (total - warmup)) ^ power
/// Throws ConfigError when the schedule is malformed or iter out of range.
double lr_at(std::int64_t iter, const Schedule& s);

}  // namespace fryshort::train
