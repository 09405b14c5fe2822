#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fryshort/nn/ops.hpp"
#include "fryshort/nn/tensor.hpp"
#include "fryshort/util/rng.hpp"

namespace fryshort::nn {

namespace init {
/// Normal(0, stddev) resampled until within two standard deviations.
Tensor trunc_normal(Shape shape, Rng& rng, double stddev);
/// Normal(0, sqrt(2 / fan_out)) for conv weights (Cout, Cin/g, kh, kw).
Tensor kaiming_normal_fan_out(Shape shape, Rng& rng);
}  // namespace init

/// Base for parameter-owning components. Derived classes register their
/// parameters, buffers and sub-modules in the constructor; the base then
/// provides recursive traversal for the optimizer and checkpointing.
/// Non-copyable because children are tracked by pointer.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_buffers() const;
  /// Parameters plus buffers; the full serializable state.
  std::vector<std::pair<std::string, Tensor>> state() const;
  std::int64_t parameter_count() const;

  void set_training(bool mode);
  bool training() const { return training_; }

 protected:
  Tensor register_param(const std::string& name, Tensor t);
  Tensor register_buffer(const std::string& name, Tensor t);
  void register_child(const std::string& name, Module* m);

 private:
  void collect(const std::string& prefix, bool buffers,
               std::vector<std::pair<std::string, Tensor>>& out) const;

  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

class Linear : public Module {
 public:
  Linear(Rng& rng, std::int64_t in_features, std::int64_t out_features, bool with_bias = true,
         double init_std = 0.02);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }

  Tensor weight;  // (out, in)
  Tensor bias;    // (out) or undefined
};

class Conv2d : public Module {
 public:
  Conv2d(Rng& rng, std::int64_t in_ch, std::int64_t out_ch, int kernel, int stride, int pad,
         int groups = 1, bool with_bias = true);
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride_, pad_, groups_); }

  Tensor weight;  // (out, in/groups, k, k)
  Tensor bias;

 private:
  int stride_, pad_, groups_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::int64_t dim, double eps = 1e-6);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps_); }

  Tensor gamma, beta;

 private:
  double eps_;
};

class GroupNorm : public Module {
 public:
  GroupNorm(int groups, std::int64_t channels, double eps = 1e-6);
  Tensor forward(const Tensor& x) const { return group_norm(x, groups_, gamma, beta, eps_); }

  Tensor gamma, beta;

 private:
  int groups_;
  double eps_;
};

/// Works on (B,C) and (B,C,H,W) inputs; running statistics follow the
/// population-variance convention.
class BatchNorm : public Module {
 public:
  explicit BatchNorm(std::int64_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x) { return forward(x, training()); }
  Tensor forward(const Tensor& x, bool use_batch_stats) {
    return batch_norm(x, gamma, beta, running_mean, running_var, use_batch_stats, momentum_, eps_);
  }

  Tensor gamma, beta, running_mean, running_var;

 private:
  double momentum_, eps_;
};

/// Standard pre-norm transformer self-attention over (B,N,C) tokens.
class SelfAttention : public Module {
 public:
  SelfAttention(Rng& rng, std::int64_t dim, int heads);
  Tensor forward(const Tensor& x) const;

 private:
  std::unique_ptr<Linear> qkv_, proj_;
  std::int64_t dim_;
  int heads_;
};

/// Queries attend to a separate context sequence; used by decoders.
class CrossAttention : public Module {
 public:
  CrossAttention(Rng& rng, std::int64_t dim, int heads);
  Tensor forward(const Tensor& queries, const Tensor& context) const;

 private:
  std::unique_ptr<Linear> q_, kv_, proj_;
  std::int64_t dim_;
  int heads_;
};

/// Two-layer GELU MLP.
class Mlp : public Module {
 public:
  Mlp(Rng& rng, std::int64_t in, std::int64_t hidden, std::int64_t out);
  Tensor forward(const Tensor& x) const { return fc2_->forward(gelu(fc1_->forward(x))); }

 private:
  std::unique_ptr<Linear> fc1_, fc2_;
};

/// Multi-head attention shared by self- and cross-attention paths.
/// q: (B,Nq,C), k/v: (B,Nk,C) already projected.
Tensor attention_mix(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

}  // namespace fryshort::nn
