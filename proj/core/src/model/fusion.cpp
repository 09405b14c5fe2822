#include "fryshort/model/fusion.hpp"

#include <algorithm>
#include <string>

#include "fryshort/nn/ops.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::model {

using namespace nn;

namespace {

void fill_zero(Tensor& t) { std::fill(t.values().begin(), t.values().end(), 0.0); }

}  // namespace

PyramidFuse::PyramidFuse(Rng& rng, const BackboneConfig& backbone, const FusionConfig& cfg) {
  const std::int64_t c = cfg.channels;
  if (c <= 0) throw ConfigError("fusion channels must be positive");
  for (int i = 0; i < 4; ++i) {
    proj_.push_back(std::make_unique<Conv2d>(rng, backbone.stage_channels[static_cast<std::size_t>(i)],
                                             c, /*kernel=*/1, /*stride=*/1, /*pad=*/0));
    bn_.push_back(std::make_unique<BatchNorm>(c));
    register_child("proj" + std::to_string(i + 1), proj_.back().get());
    register_child("bn" + std::to_string(i + 1), bn_.back().get());
  }
  reduce_ = std::make_unique<Conv2d>(rng, 4 * c, c, 1, 1, 0);
  register_child("reduce", reduce_.get());
}

Tensor PyramidFuse::forward(const FeaturePyramid& pyramid) {
  const std::int64_t h = pyramid.f1.dim(2), w = pyramid.f1.dim(3);
  std::vector<Tensor> maps;
  for (int i = 0; i < 4; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Tensor m = bn_[idx]->forward(proj_[idx]->forward(pyramid.at(i)));
    maps.push_back(bilinear_resize(m, h, w));
  }
  return reduce_->forward(concat(maps, 1));
}

FilmFusion::FilmFusion(Rng& rng, std::int64_t channels, std::int64_t ctx_dim,
                       const FusionConfig& cfg)
    : channels_(channels) {
  if (channels % cfg.gn_groups != 0)
    throw ConfigError("group-norm groups must divide the channel width");
  const std::int64_t hidden = std::max<std::int64_t>(1, channels / 4);
  gb1_ = std::make_unique<Linear>(rng, ctx_dim, hidden);
  gb2_ = std::make_unique<Linear>(rng, hidden, 2 * channels);
  // Zero output at init: γ = β = 0 regardless of context.
  fill_zero(gb2_->weight);
  fill_zero(gb2_->bias);
  gate_ = std::make_unique<Conv2d>(rng, ctx_dim, 1, 1, 1, 0);
  fill_zero(gate_->weight);
  std::fill(gate_->bias.values().begin(), gate_->bias.values().end(), cfg.gate_bias_init);
  norm_ = std::make_unique<GroupNorm>(cfg.gn_groups, channels);
  alpha = register_param("alpha", Tensor::full({1}, cfg.film_alpha_init));
  register_child("gb1", gb1_.get());
  register_child("gb2", gb2_.get());
  register_child("gate", gate_.get());
  register_child("norm", norm_.get());
}

std::pair<Tensor, Tensor> FilmFusion::film_coefficients(const Tensor& s_ctx) const {
  const std::int64_t b = s_ctx.dim(0);
  Tensor gb = gb2_->forward(relu(gb1_->forward(global_avg_pool(s_ctx))));  // (B, 2C)
  Tensor gamma = reshape(slice(gb, 1, 0, channels_), {b, channels_, 1, 1});
  Tensor beta = reshape(slice(gb, 1, channels_, channels_), {b, channels_, 1, 1});
  return {gamma, beta};
}

Tensor FilmFusion::gate_map(const Tensor& s_ctx) const { return sigmoid(gate_->forward(s_ctx)); }

Tensor FilmFusion::forward(const Tensor& f_ms, const Tensor& s_ctx) const {
  Tensor down = bilinear_resize(f_ms, s_ctx.dim(2), s_ctx.dim(3));
  auto [gamma, beta] = film_coefficients(s_ctx);
  Tensor modulated = add(mul(down, add_scalar(gamma, 1.0)), beta);
  Tensor gated = mul(modulated, gate_map(s_ctx));
  // α·(m⊙g) + (1−α)·down, written as down + α·(m⊙g − down).
  Tensor blended = add(down, mul(alpha, sub(gated, down)));
  return bilinear_resize(norm_->forward(blended), f_ms.dim(2), f_ms.dim(3));
}

ConcatFusion::ConcatFusion(Rng& rng, std::int64_t channels, std::int64_t ctx_dim,
                           const FusionConfig& cfg) {
  if (channels % cfg.gn_groups != 0)
    throw ConfigError("group-norm groups must divide the channel width");
  reduce_ = std::make_unique<Conv2d>(rng, channels + ctx_dim, channels, 1, 1, 0);
  norm_ = std::make_unique<GroupNorm>(cfg.gn_groups, channels);
  register_child("reduce", reduce_.get());
  register_child("norm", norm_.get());
}

Tensor ConcatFusion::forward(const Tensor& f_ms, const Tensor& s_ctx) const {
  Tensor up = bilinear_resize(s_ctx, f_ms.dim(2), f_ms.dim(3));
  return norm_->forward(reduce_->forward(concat({f_ms, up}, 1)));
}

}  // namespace fryshort::model
