#pragma once

#include <cstdint>
#include <vector>

#include "fryshort/nn/tensor.hpp"

namespace fryshort::nn {

struct AdamWConfig {
  double lr = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// AdamW with decoupled weight decay. Decay is skipped for parameters of
/// rank <= 1 (biases and normalization affines).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  void step();
  void zero_grad();

  /// Moment buffers and step counter, for checkpoint round trips.
  struct State {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m, v;
  };
  State export_state() const;
  void import_state(const State& s);

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace fryshort::nn
