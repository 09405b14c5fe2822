#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "fryshort/nn/module.hpp"

namespace fryshort::model {

using nn::Tensor;

/// Four-stage hierarchical encoder configuration. Strides are fixed at
/// (4, 8, 16, 32); inputs must have height and width divisible by 32.
struct BackboneConfig {
  std::array<std::int64_t, 4> stage_channels{16, 32, 48, 64};
  std::array<std::int64_t, 4> stage_depths{2, 2, 2, 2};
  bool attention_enabled = true;

  static constexpr std::array<int, 4> kStrides{4, 8, 16, 32};

  /// Full-size channel plan; used for shape/parameter arithmetic only.
  static BackboneConfig full_size() {
    BackboneConfig c;
    c.stage_channels = {64, 128, 320, 512};
    return c;
  }
};

struct FeaturePyramid {
  Tensor f1, f2, f3, f4;  // strides 4, 8, 16, 32
  const Tensor& at(int i) const;
};

/// (channels, height, width) per stage for a given input size; shared by the
/// forward implementation and shape tests so large configurations can be
/// checked without executing them.
std::array<std::array<std::int64_t, 3>, 4> pyramid_shapes(const BackboneConfig& cfg,
                                                          std::int64_t h, std::int64_t w);

/// Channel attention with a near-identity residual blend:
///   out = x + s * (a ⊙ x − x)
/// where a is a sigmoid gate from average- and max-pooled descriptors through
/// a shared bottleneck (reduction 16, floor 4) and s is a learnable scalar
/// initialized to 0, making the block an exact identity at initialization.
class ChannelGate : public nn::Module {
 public:
  ChannelGate(Rng& rng, std::int64_t channels);
  Tensor forward(const Tensor& x) const;
  /// The per-channel gate a, shaped (B, C, 1, 1); exposed for inspection.
  Tensor gate(const Tensor& x) const;

  Tensor blend;  // s

 private:
  std::unique_ptr<nn::Linear> fc1_, fc2_;
};

/// Spatial attention with the same residual blend; the gate is a 7×7
/// convolution over channel-wise mean and max maps.
class SpatialGate : public nn::Module {
 public:
  explicit SpatialGate(Rng& rng);
  Tensor forward(const Tensor& x) const;
  /// The spatial gate a, shaped (B, 1, H, W).
  Tensor gate(const Tensor& x) const;

  Tensor blend;  // s

 private:
  std::unique_ptr<nn::Conv2d> conv_;
};

/// Pre-norm transformer block over stage tokens. The feed-forward path mixes
/// neighborhoods with a 3×3 depthwise convolution on the token grid, which
/// also carries positional information, so no explicit position embedding is
/// needed in the backbone.
class MixBlock : public nn::Module {
 public:
  MixBlock(Rng& rng, std::int64_t dim, int heads);
  Tensor forward(const Tensor& tokens, std::int64_t h, std::int64_t w) const;

 private:
  std::unique_ptr<nn::LayerNorm> norm1_, norm2_;
  std::unique_ptr<nn::SelfAttention> attn_;
  std::unique_ptr<nn::Linear> fc1_, fc2_;
  std::unique_ptr<nn::Conv2d> dw_;
};

/// One backbone stage: overlapping patch embedding, transformer blocks, and
/// (when enabled) channel then spatial attention on the output grid.
class BackboneStage : public nn::Module {
 public:
  BackboneStage(Rng& rng, std::int64_t in_ch, std::int64_t out_ch, int kernel, int stride, int pad,
                std::int64_t depth, int heads, bool attention);
  Tensor forward(const Tensor& x) const;

  const ChannelGate* channel_gate() const { return tca_.get(); }
  const SpatialGate* spatial_gate() const { return tsa_.get(); }
  std::int64_t attention_parameter_count() const;

 private:
  std::unique_ptr<nn::Conv2d> embed_;
  std::unique_ptr<nn::LayerNorm> embed_norm_, out_norm_;
  std::vector<std::unique_ptr<MixBlock>> blocks_;
  std::unique_ptr<ChannelGate> tca_;
  std::unique_ptr<SpatialGate> tsa_;
};

class ThermalBackbone : public nn::Module {
 public:
  ThermalBackbone(Rng& rng, const BackboneConfig& cfg);

  /// thermal: (B, 1, H, W) with H, W divisible by 32.
  FeaturePyramid forward(const Tensor& thermal) const;

  const BackboneConfig& config() const { return cfg_; }
  const BackboneStage& stage(int i) const { return *stages_.at(static_cast<std::size_t>(i)); }
  /// Parameters belonging to the attention gates only.
  std::int64_t attention_parameter_count() const;

 private:
  BackboneConfig cfg_;
  std::vector<std::unique_ptr<BackboneStage>> stages_;
};

}  // namespace fryshort::model
