#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fryshort/model/backbone.hpp"
#include "fryshort/nn/module.hpp"

namespace fryshort::model {

enum class FusionMethod { film, concat };

struct FusionConfig {
  std::int64_t channels = 64;  // unified channel width C, shared by all heads
  FusionMethod method = FusionMethod::film;
  double film_alpha_init = 0.0;
  double gate_bias_init = 4.0;
  int gn_groups = 8;
};

/// Collapses the pyramid to a single map at the finest grid (H/4):
/// per-stage 1×1 projection to C with batch norm, bilinear upsampling,
/// channel concat (4C) and a 1×1 reduction back to C.
class PyramidFuse : public nn::Module {
 public:
  PyramidFuse(Rng& rng, const BackboneConfig& backbone, const FusionConfig& cfg);
  Tensor forward(const FeaturePyramid& pyramid);

 private:
  std::vector<std::unique_ptr<nn::Conv2d>> proj_;
  std::vector<std::unique_ptr<nn::BatchNorm>> bn_;
  std::unique_ptr<nn::Conv2d> reduce_;
};

/// Feature-wise modulation of the fused thermal map by the RGB context:
/// the thermal map is downsampled to the context grid, scaled/shifted by
/// (1+γ, β) predicted from pooled context, gated by a per-pixel sigmoid map,
/// blended with the unmodulated path under a learnable α (init 0 → exact
/// pass-through modulo the group norm), normalized, and upsampled back.
class FilmFusion : public nn::Module {
 public:
  FilmFusion(Rng& rng, std::int64_t channels, std::int64_t ctx_dim, const FusionConfig& cfg);
  Tensor forward(const Tensor& f_ms, const Tensor& s_ctx) const;
  /// The spatial gate map (B, 1, h, w); σ(4) ≈ 0.982 everywhere at init.
  Tensor gate_map(const Tensor& s_ctx) const;
  /// γ and β, each (B, C, 1, 1); zero at init.
  std::pair<Tensor, Tensor> film_coefficients(const Tensor& s_ctx) const;

  Tensor alpha;

 private:
  std::unique_ptr<nn::Linear> gb1_, gb2_;  // pooled ctx -> C/4 -> 2C (γ‖β)
  std::unique_ptr<nn::Conv2d> gate_;       // 1×1 ctx -> 1, zero weight, bias 4
  std::unique_ptr<nn::GroupNorm> norm_;
  std::int64_t channels_;
};

/// Ablation alternative: upsample context to the thermal grid, concat,
/// 1×1 reduce to C, group norm.
class ConcatFusion : public nn::Module {
 public:
  ConcatFusion(Rng& rng, std::int64_t channels, std::int64_t ctx_dim, const FusionConfig& cfg);
  Tensor forward(const Tensor& f_ms, const Tensor& s_ctx) const;

 private:
  std::unique_ptr<nn::Conv2d> reduce_;
  std::unique_ptr<nn::GroupNorm> norm_;
};

}  // namespace fryshort::model
