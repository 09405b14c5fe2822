#include "fryshort/nn/module.hpp"

#include <cmath>
#include <stdexcept>

namespace fryshort::nn {

namespace init {

Tensor trunc_normal(Shape shape, Rng& rng, double stddev) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.values()) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    v = z * stddev;
  }
  return t;
}

Tensor kaiming_normal_fan_out(Shape shape, Rng& rng) {
  // fan_out = Cout * kh * kw / groups; with our (Cout, Cin/g, kh, kw) layout
  // the grouped correction is already folded into dim 1 for fan_in, so we use
  // the plain Cout * kh * kw convention here.
  const double fan_out = static_cast<double>(shape[0] * shape[2] * shape[3]);
  const double stddev = std::sqrt(2.0 / fan_out);
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.values()) v = rng.normal() * stddev;
  return t;
}

}  // namespace init

Tensor Module::register_param(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  t.node()->name = name;
  params_.emplace_back(name, t);
  return t;
}

Tensor Module::register_buffer(const std::string& name, Tensor t) {
  t.node()->name = name;
  buffers_.emplace_back(name, t);
  return t;
}

void Module::register_child(const std::string& name, Module* m) {
  children_.emplace_back(name, m);
}

void Module::collect(const std::string& prefix, bool buffers,
                     std::vector<std::pair<std::string, Tensor>>& out) const {
  const auto& own = buffers ? buffers_ : params_;
  for (const auto& [name, t] : own) out.emplace_back(prefix + name, t);
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", buffers, out);
}

std::vector<std::pair<std::string, Tensor>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect("", false, out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_buffers() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect("", true, out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Module::state() const {
  auto out = named_parameters();
  auto bufs = named_buffers();
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

void Module::set_training(bool mode) {
  training_ = mode;
  for (auto& [name, child] : children_) child->set_training(mode);
}

Linear::Linear(Rng& rng, std::int64_t in_features, std::int64_t out_features, bool with_bias,
               double init_std) {
  weight = register_param("weight", init::trunc_normal({out_features, in_features}, rng, init_std));
  if (with_bias) bias = register_param("bias", Tensor::zeros({out_features}));
}

Conv2d::Conv2d(Rng& rng, std::int64_t in_ch, std::int64_t out_ch, int kernel, int stride, int pad,
               int groups, bool with_bias)
    : stride_(stride), pad_(pad), groups_(groups) {
  weight = register_param(
      "weight", init::kaiming_normal_fan_out({out_ch, in_ch / groups, kernel, kernel}, rng));
  if (with_bias) bias = register_param("bias", Tensor::zeros({out_ch}));
}

LayerNorm::LayerNorm(std::int64_t dim, double eps) : eps_(eps) {
  gamma = register_param("gamma", Tensor::full({dim}, 1.0));
  beta = register_param("beta", Tensor::zeros({dim}));
}

GroupNorm::GroupNorm(int groups, std::int64_t channels, double eps) : groups_(groups), eps_(eps) {
  gamma = register_param("gamma", Tensor::full({channels}, 1.0));
  beta = register_param("beta", Tensor::zeros({channels}));
}

BatchNorm::BatchNorm(std::int64_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma = register_param("gamma", Tensor::full({channels}, 1.0));
  beta = register_param("beta", Tensor::zeros({channels}));
  running_mean = register_buffer("running_mean", Tensor::zeros({channels}));
  running_var = register_buffer("running_var", Tensor::full({channels}, 1.0));
}

Tensor attention_mix(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const std::int64_t b = q.dim(0), nq = q.dim(1), c = q.dim(2), nk = k.dim(1);
  if (c % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
  const std::int64_t dh = c / heads;
  auto split = [&](const Tensor& t, std::int64_t n) {
    // (B,N,C) -> (B*H, N, dh)
    return reshape(permute(reshape(t, {b, n, heads, dh}), {0, 2, 1, 3}), {b * heads, n, dh});
  };
  Tensor qh = split(q, nq);
  Tensor kh = split(k, nk);
  Tensor vh = split(v, nk);
  Tensor scores = mul_scalar(bmm(qh, permute(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = softmax_lastdim(scores);
  Tensor mixed = bmm(attn, vh);  // (B*H, Nq, dh)
  return reshape(permute(reshape(mixed, {b, heads, nq, dh}), {0, 2, 1, 3}), {b, nq, c});
}

SelfAttention::SelfAttention(Rng& rng, std::int64_t dim, int heads) : dim_(dim), heads_(heads) {
  qkv_ = std::make_unique<Linear>(rng, dim, 3 * dim);
  proj_ = std::make_unique<Linear>(rng, dim, dim);
  register_child("qkv", qkv_.get());
  register_child("proj", proj_.get());
}

Tensor SelfAttention::forward(const Tensor& x) const {
  Tensor qkv = qkv_->forward(x);  // (B,N,3C)
  Tensor q = slice(qkv, 2, 0, dim_);
  Tensor k = slice(qkv, 2, dim_, dim_);
  Tensor v = slice(qkv, 2, 2 * dim_, dim_);
  return proj_->forward(attention_mix(q, k, v, heads_));
}

CrossAttention::CrossAttention(Rng& rng, std::int64_t dim, int heads) : dim_(dim), heads_(heads) {
  q_ = std::make_unique<Linear>(rng, dim, dim);
  kv_ = std::make_unique<Linear>(rng, dim, 2 * dim);
  proj_ = std::make_unique<Linear>(rng, dim, dim);
  register_child("q", q_.get());
  register_child("kv", kv_.get());
  register_child("proj", proj_.get());
}

Tensor CrossAttention::forward(const Tensor& queries, const Tensor& context) const {
  Tensor q = q_->forward(queries);
  Tensor kv = kv_->forward(context);
  Tensor k = slice(kv, 2, 0, dim_);
  Tensor v = slice(kv, 2, dim_, dim_);
  return proj_->forward(attention_mix(q, k, v, heads_));
}

Mlp::Mlp(Rng& rng, std::int64_t in, std::int64_t hidden, std::int64_t out) {
  fc1_ = std::make_unique<Linear>(rng, in, hidden);
  fc2_ = std::make_unique<Linear>(rng, hidden, out);
  register_child("fc1", fc1_.get());
  register_child("fc2", fc2_.get());
}

}  // namespace fryshort::nn
