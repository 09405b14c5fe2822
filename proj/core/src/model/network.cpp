#include "fryshort/model/network.hpp"

#include "fryshort/nn/ops.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::model {

using namespace nn;

DualStreamNet::DualStreamNet(Rng& rng, const ModelConfig& cfg, std::int64_t n_domains)
    : cfg_(cfg) {
  const auto& sw = cfg.switches;
  backbone_ = std::make_unique<ThermalBackbone>(rng, cfg.backbone);
  register_child("backbone", backbone_.get());
  pyramid_fuse_ = std::make_unique<PyramidFuse>(rng, cfg.backbone, cfg.fusion);
  register_child("pyramid_fuse", pyramid_fuse_.get());

  if (sw.enable_rgb) {
    encoder_ = std::make_unique<ContextEncoder>(rng, cfg.encoder, cfg.image_h, cfg.image_w);
    register_child("encoder", encoder_.get());
    if (sw.fusion_method == FusionMethod::film) {
      film_ = std::make_unique<FilmFusion>(rng, cfg.fusion.channels, cfg.encoder.embed_dim,
                                           cfg.fusion);
      register_child("film", film_.get());
    } else {
      concat_ = std::make_unique<ConcatFusion>(rng, cfg.fusion.channels, cfg.encoder.embed_dim,
                                               cfg.fusion);
      register_child("concat_fuse", concat_.get());
    }
  }

  seg_head_ = std::make_unique<SegHead>(rng, cfg.fusion.channels);
  aux_head_ = std::make_unique<AuxHead>(rng, cfg.backbone.stage_channels[0]);
  register_child("seg_head", seg_head_.get());
  register_child("aux_head", aux_head_.get());
  pv_head_ = std::make_unique<RegressionHead>(rng, cfg.fusion.channels);
  p_av_head_ = std::make_unique<RegressionHead>(rng, cfg.fusion.channels);
  totox_head_ = std::make_unique<RegressionHead>(rng, cfg.fusion.channels);
  temp_head_ = std::make_unique<RegressionHead>(rng, cfg.fusion.channels);
  register_child("pv_head", pv_head_.get());
  register_child("p_av_head", p_av_head_.get());
  register_child("totox_head", totox_head_.get());
  register_child("temp_head", temp_head_.get());

  if (sw.da_method == DaMethod::grl) {
    if (n_domains < 1) throw ConfigError("adversarial training needs at least one train video");
    if (sw.enable_thermal_dann) {
      thermal_dann_ = std::make_unique<DomainHead>(rng, cfg.backbone.stage_channels[3],
                                                   cfg.dann.hidden, n_domains,
                                                   cfg.dann.dropout_p);
      register_child("thermal_dann", thermal_dann_.get());
    }
    if (sw.enable_rgb && sw.enable_rgb_dann) {
      rgb_dann_ = std::make_unique<DomainHead>(rng, cfg.encoder.embed_dim, cfg.dann.hidden,
                                               n_domains, cfg.dann.dropout_p);
      register_child("rgb_dann", rgb_dann_.get());
    }
  }
}

NetOutputs DualStreamNet::run(const Tensor& thermal, const Tensor& rgb, bool training,
                              Rng& step_rng, const Tensor* chem_targets) {
  const auto& sw = cfg_.switches;
  NetOutputs out;
  out.pyramid = backbone_->forward(thermal);
  out.f_ms = pyramid_fuse_->forward(out.pyramid);

  if (sw.enable_rgb) {
    // s_ctx comes from the rgb-only pass in training and inference alike so
    // that fusion sees identical semantics in both modes; the joint
    // masked pass below exists only to produce the two auxiliary losses.
    out.s_ctx = encoder_->context_features(rgb);
    out.f_fused = film_ ? film_->forward(out.f_ms, out.s_ctx)
                        : concat_->forward(out.f_ms, out.s_ctx);
    out.ctx_gap = global_avg_pool(out.s_ctx);
  } else {
    out.f_fused = out.f_ms;
  }

  out.seg_logits = seg_head_->forward(out.f_fused);
  if (training) out.aux_logits = aux_head_->forward(out.pyramid.f1);

  Tensor pooled =
      stop_gradient(global_avg_pool(sw.fused_regression ? out.f_fused : out.f_ms));
  out.reg_z = concat({pv_head_->forward(pooled), p_av_head_->forward(pooled),
                      totox_head_->forward(pooled), temp_head_->forward(pooled)},
                     1);

  out.f4_gap = global_avg_pool(out.pyramid.f4);

  if (training && sw.enable_rgb && (sw.enable_mae || sw.enable_chem)) {
    auto joint = encoder_->encode_joint(thermal, rgb, step_rng);
    if (sw.enable_mae) out.mae_loss = encoder_->reconstruct_masked(joint);
    if (sw.enable_chem) {
      if (!chem_targets) throw ConfigError("chemical alignment requires targets");
      out.chem_loss = encoder_->chem_align(joint, *chem_targets);
    }
  }
  return out;
}

}  // namespace fryshort::model
