#pragma once

#include <cstdint>
#include <memory>

#include "fryshort/model/adversarial.hpp"
#include "fryshort/model/backbone.hpp"
#include "fryshort/model/fusion.hpp"
#include "fryshort/model/heads.hpp"
#include "fryshort/model/rgb_encoder.hpp"

namespace fryshort::model {

/// Ablation switches. RGB-dependent features (fusion conditioning, MAE,
/// chemical alignment, the RGB domain head) are inactive whenever
/// enable_rgb is false, regardless of their own flags.
struct VariantSwitches {
  bool enable_rgb = true;
  DaMethod da_method = DaMethod::grl;
  FusionMethod fusion_method = FusionMethod::film;
  bool fused_regression = true;
  bool enable_mae = true;
  bool enable_chem = true;
  bool enable_thermal_dann = true;
  bool enable_rgb_dann = true;
};

struct ModelConfig {
  BackboneConfig backbone;
  EncoderConfig encoder;
  FusionConfig fusion;
  DannConfig dann;
  VariantSwitches switches;
  std::int64_t image_h = 64;
  std::int64_t image_w = 64;
};

struct NetOutputs {
  FeaturePyramid pyramid;
  Tensor f_ms;                 // unified thermal map, C × H/4 × W/4
  Tensor s_ctx;                // rgb context map (undefined without rgb)
  Tensor f_fused;              // == f_ms when rgb is disabled
  Tensor seg_logits;           // (B, 3, H, W)
  Tensor aux_logits;           // training only
  Tensor reg_z;                // (B, 4): pv, p_av, totox, temp (z-scored)
  Tensor mae_loss, chem_loss;  // training only, when enabled
  Tensor f4_gap;               // (B, C4) domain-loss / probe attachment
  Tensor ctx_gap;              // (B, embed_dim), rgb attachment
};

/// The full dual-stream multi-task network. Regression heads read detached
/// pooled features (fused or pre-fusion per `fused_regression`), so their
/// losses never update the encoders or fusion.
class DualStreamNet : public nn::Module {
 public:
  DualStreamNet(Rng& rng, const ModelConfig& cfg, std::int64_t n_domains);

  /// Single forward pass. `step_rng` drives mask sampling; `chem_targets`
  /// ((B,3): p_av, totox, temp z-scored) may be null when chemical
  /// alignment is off or at inference.
  NetOutputs run(const Tensor& thermal, const Tensor& rgb, bool training, Rng& step_rng,
                 const Tensor* chem_targets);

  const ModelConfig& config() const { return cfg_; }
  const ThermalBackbone& backbone() const { return *backbone_; }
  const ContextEncoder* encoder() const { return encoder_.get(); }
  const DomainHead* thermal_domain_head() const { return thermal_dann_.get(); }
  const DomainHead* rgb_domain_head() const { return rgb_dann_.get(); }
  bool rgb_active() const { return cfg_.switches.enable_rgb; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ThermalBackbone> backbone_;
  std::unique_ptr<PyramidFuse> pyramid_fuse_;
  std::unique_ptr<ContextEncoder> encoder_;
  std::unique_ptr<FilmFusion> film_;
  std::unique_ptr<ConcatFusion> concat_;
  std::unique_ptr<SegHead> seg_head_;
  std::unique_ptr<AuxHead> aux_head_;
  std::unique_ptr<RegressionHead> pv_head_, p_av_head_, totox_head_, temp_head_;
  std::unique_ptr<DomainHead> thermal_dann_, rgb_dann_;
};

}  // namespace fryshort::model
