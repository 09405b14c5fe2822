#include "fryshort/model/backbone.hpp"

#include <algorithm>
#include <string>

#include "fryshort/nn/ops.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::model {

using namespace nn;

namespace {

int heads_for(std::int64_t channels) {
  const auto h = std::max<std::int64_t>(1, channels / 16);
  return channels % h == 0 ? static_cast<int>(h) : 1;
}

}  // namespace

const Tensor& FeaturePyramid::at(int i) const {
  switch (i) {
    case 0: return f1;
    case 1: return f2;
    case 2: return f3;
    case 3: return f4;
    default: throw std::out_of_range("pyramid index " + std::to_string(i));
  }
}

std::array<std::array<std::int64_t, 3>, 4> pyramid_shapes(const BackboneConfig& cfg,
                                                          std::int64_t h, std::int64_t w) {
  if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0)
    throw ConfigError("input size must be positive and divisible by 32, got " +
                      std::to_string(h) + "x" + std::to_string(w));
  std::array<std::array<std::int64_t, 3>, 4> out{};
  for (int i = 0; i < 4; ++i) {
    const int s = BackboneConfig::kStrides[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {cfg.stage_channels[static_cast<std::size_t>(i)], h / s,
                                        w / s};
  }
  return out;
}

ChannelGate::ChannelGate(Rng& rng, std::int64_t channels) {
  const std::int64_t hidden = std::max<std::int64_t>(4, channels / 16);
  fc1_ = std::make_unique<nn::Linear>(rng, channels, hidden);
  fc2_ = std::make_unique<nn::Linear>(rng, hidden, channels);
  blend = register_param("blend", Tensor::zeros({1}));
  register_child("fc1", fc1_.get());
  register_child("fc2", fc2_.get());
}

Tensor ChannelGate::gate(const Tensor& x) const {
  auto squeeze = [&](const Tensor& pooled) { return fc2_->forward(relu(fc1_->forward(pooled))); };
  Tensor a = sigmoid(add(squeeze(global_avg_pool(x)), squeeze(global_max_pool(x))));
  return reshape(a, {x.dim(0), x.dim(1), 1, 1});
}

Tensor ChannelGate::forward(const Tensor& x) const {
  return add(x, mul(blend, sub(mul(gate(x), x), x)));
}

SpatialGate::SpatialGate(Rng& rng) {
  conv_ = std::make_unique<nn::Conv2d>(rng, 2, 1, /*kernel=*/7, /*stride=*/1, /*pad=*/3);
  blend = register_param("blend", Tensor::zeros({1}));
  register_child("conv", conv_.get());
}

Tensor SpatialGate::gate(const Tensor& x) const {
  Tensor stats = concat({mean_axis(x, 1, /*keepdim=*/true), max_axis(x, 1, /*keepdim=*/true)}, 1);
  return sigmoid(conv_->forward(stats));
}

Tensor SpatialGate::forward(const Tensor& x) const {
  return add(x, mul(blend, sub(mul(gate(x), x), x)));
}

MixBlock::MixBlock(Rng& rng, std::int64_t dim, int heads) {
  const std::int64_t hidden = 4 * dim;
  norm1_ = std::make_unique<nn::LayerNorm>(dim);
  norm2_ = std::make_unique<nn::LayerNorm>(dim);
  attn_ = std::make_unique<nn::SelfAttention>(rng, dim, heads);
  fc1_ = std::make_unique<nn::Linear>(rng, dim, hidden);
  fc2_ = std::make_unique<nn::Linear>(rng, hidden, dim);
  dw_ = std::make_unique<nn::Conv2d>(rng, hidden, hidden, /*kernel=*/3, /*stride=*/1, /*pad=*/1,
                                     /*groups=*/static_cast<int>(hidden));
  register_child("norm1", norm1_.get());
  register_child("attn", attn_.get());
  register_child("norm2", norm2_.get());
  register_child("fc1", fc1_.get());
  register_child("dw", dw_.get());
  register_child("fc2", fc2_.get());
}

Tensor MixBlock::forward(const Tensor& tokens, std::int64_t h, std::int64_t w) const {
  Tensor x = add(tokens, attn_->forward(norm1_->forward(tokens)));
  Tensor hiddens = fc1_->forward(norm2_->forward(x));
  hiddens = grid_to_tokens(dw_->forward(tokens_to_grid(hiddens, h, w)));
  return add(x, fc2_->forward(gelu(hiddens)));
}

BackboneStage::BackboneStage(Rng& rng, std::int64_t in_ch, std::int64_t out_ch, int kernel,
                             int stride, int pad, std::int64_t depth, int heads, bool attention) {
  embed_ = std::make_unique<nn::Conv2d>(rng, in_ch, out_ch, kernel, stride, pad);
  embed_norm_ = std::make_unique<nn::LayerNorm>(out_ch);
  out_norm_ = std::make_unique<nn::LayerNorm>(out_ch);
  register_child("embed", embed_.get());
  register_child("embed_norm", embed_norm_.get());
  for (std::int64_t i = 0; i < depth; ++i) {
    blocks_.push_back(std::make_unique<MixBlock>(rng, out_ch, heads));
    register_child("block" + std::to_string(i), blocks_.back().get());
  }
  register_child("out_norm", out_norm_.get());
  if (attention) {
    tca_ = std::make_unique<ChannelGate>(rng, out_ch);
    tsa_ = std::make_unique<SpatialGate>(rng);
    register_child("tca", tca_.get());
    register_child("tsa", tsa_.get());
  }
}

Tensor BackboneStage::forward(const Tensor& x) const {
  Tensor g = embed_->forward(x);
  const std::int64_t h = g.dim(2), w = g.dim(3);
  Tensor t = embed_norm_->forward(grid_to_tokens(g));
  for (const auto& b : blocks_) t = b->forward(t, h, w);
  Tensor out = tokens_to_grid(out_norm_->forward(t), h, w);
  if (tca_) out = tsa_->forward(tca_->forward(out));
  return out;
}

std::int64_t BackboneStage::attention_parameter_count() const {
  return (tca_ ? tca_->parameter_count() : 0) + (tsa_ ? tsa_->parameter_count() : 0);
}

ThermalBackbone::ThermalBackbone(Rng& rng, const BackboneConfig& cfg) : cfg_(cfg) {
  for (const auto c : cfg.stage_channels)
    if (c <= 0) throw ConfigError("stage channels must be positive");
  for (const auto d : cfg.stage_depths)
    if (d <= 0) throw ConfigError("stage depths must be positive");
  std::int64_t in_ch = 1;
  for (int i = 0; i < 4; ++i) {
    const std::int64_t out_ch = cfg.stage_channels[static_cast<std::size_t>(i)];
    const std::int64_t depth = cfg.stage_depths[static_cast<std::size_t>(i)];
    // First stage: 7×7 stride-4 overlapping embed; later stages 3×3 stride-2.
    const int kernel = i == 0 ? 7 : 3;
    const int stride = i == 0 ? 4 : 2;
    const int pad = i == 0 ? 3 : 1;
    stages_.push_back(std::make_unique<BackboneStage>(rng, in_ch, out_ch, kernel, stride, pad,
                                                      depth, heads_for(out_ch),
                                                      cfg.attention_enabled));
    register_child("stage" + std::to_string(i + 1), stages_.back().get());
    in_ch = out_ch;
  }
}

FeaturePyramid ThermalBackbone::forward(const Tensor& thermal) const {
  if (thermal.rank() != 4 || thermal.dim(1) != 1)
    throw ConfigError("backbone expects (B, 1, H, W) input, got " + nn::shape_str(thermal.shape()));
  pyramid_shapes(cfg_, thermal.dim(2), thermal.dim(3));  // validates divisibility
  FeaturePyramid p;
  p.f1 = stages_[0]->forward(thermal);
  p.f2 = stages_[1]->forward(p.f1);
  p.f3 = stages_[2]->forward(p.f2);
  p.f4 = stages_[3]->forward(p.f3);
  return p;
}

std::int64_t ThermalBackbone::attention_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& s : stages_) n += s->attention_parameter_count();
  return n;
}

}  // namespace fryshort::model
