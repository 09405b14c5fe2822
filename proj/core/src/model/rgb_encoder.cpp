#include "fryshort/model/rgb_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fryshort/nn/ops.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::model {

using namespace nn;

MaskPlan sample_mask(std::int64_t n_tokens, double mask_ratio, Rng& rng) {
  if (n_tokens < 2) throw ConfigError("mask sampling needs at least 2 tokens");
  if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw ConfigError("mask_ratio must be in (0, 1)");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n_tokens));
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t i = n_tokens - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  const auto n_masked =
      static_cast<std::size_t>(std::floor(mask_ratio * static_cast<double>(n_tokens)));
  MaskPlan plan;
  plan.masked_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_masked));
  plan.visible_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_masked), order.end());
  std::sort(plan.masked_idx.begin(), plan.masked_idx.end());
  std::sort(plan.visible_idx.begin(), plan.visible_idx.end());
  return plan;
}

Tensor patchify(const Tensor& image, std::int64_t patch) {
  if (image.rank() != 4) throw ConfigError("patchify expects (B, C, H, W)");
  const std::int64_t b = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (patch <= 0 || h % patch != 0 || w % patch != 0)
    throw ConfigError("image size " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by patch " + std::to_string(patch));
  const std::int64_t gh = h / patch, gw = w / patch;
  Tensor x = reshape(image, {b, c, gh, patch, gw, patch});
  x = permute(x, {0, 2, 4, 1, 3, 5});  // (B, gh, gw, C, p, p)
  return reshape(x, {b, gh * gw, c * patch * patch});
}

Tensor unpatchify(const Tensor& tokens, std::int64_t channels, std::int64_t h, std::int64_t w,
                  std::int64_t patch) {
  const std::int64_t b = tokens.dim(0);
  const std::int64_t gh = h / patch, gw = w / patch;
  Tensor x = reshape(tokens, {b, gh, gw, channels, patch, patch});
  x = permute(x, {0, 3, 1, 4, 2, 5});  // (B, C, gh, p, gw, p)
  return reshape(x, {b, channels, h, w});
}

struct ContextEncoder::Block : nn::Module {
  Block(Rng& rng, std::int64_t dim, int heads) {
    norm1 = std::make_unique<LayerNorm>(dim);
    norm2 = std::make_unique<LayerNorm>(dim);
    attn = std::make_unique<SelfAttention>(rng, dim, heads);
    mlp = std::make_unique<Mlp>(rng, dim, 4 * dim, dim);
    register_child("norm1", norm1.get());
    register_child("attn", attn.get());
    register_child("norm2", norm2.get());
    register_child("mlp", mlp.get());
  }
  Tensor forward(const Tensor& x) const {
    Tensor a = add(x, attn->forward(norm1->forward(x)));
    return add(a, mlp->forward(norm2->forward(a)));
  }
  std::unique_ptr<LayerNorm> norm1, norm2;
  std::unique_ptr<SelfAttention> attn;
  std::unique_ptr<Mlp> mlp;
};

ContextEncoder::ContextEncoder(Rng& rng, const EncoderConfig& cfg, std::int64_t image_h,
                               std::int64_t image_w)
    : cfg_(cfg) {
  if (cfg.embed_dim <= 0 || cfg.depth <= 0) throw ConfigError("bad encoder dims");
  if (cfg.embed_dim % cfg.heads != 0) throw ConfigError("heads must divide embed_dim");
  if (image_h % cfg.patch_size != 0 || image_w % cfg.patch_size != 0)
    throw ConfigError("image size not divisible by patch size");
  grid_h_ = image_h / cfg.patch_size;
  grid_w_ = image_w / cfg.patch_size;
  const std::int64_t n = grid_h_ * grid_w_, d = cfg.embed_dim, p = cfg.patch_size;

  pos_table_ = register_param("pos_table", init::trunc_normal({n, d}, rng, 0.02));
  modality_thermal_ = register_param("modality_thermal", init::trunc_normal({d}, rng, 0.02));
  modality_rgb_ = register_param("modality_rgb", init::trunc_normal({d}, rng, 0.02));
  mask_token_ = register_param("mask_token", init::trunc_normal({d}, rng, 0.02));

  proj_thermal_ = std::make_unique<Linear>(rng, p * p, d);
  proj_rgb_ = std::make_unique<Linear>(rng, 3 * p * p, d);
  register_child("proj_thermal", proj_thermal_.get());
  register_child("proj_rgb", proj_rgb_.get());
  for (std::int64_t i = 0; i < cfg.depth; ++i) {
    blocks_.push_back(std::make_unique<Block>(rng, d, cfg.heads));
    register_child("block" + std::to_string(i), blocks_.back().get());
  }
  final_norm_ = std::make_unique<LayerNorm>(d);
  register_child("final_norm", final_norm_.get());

  dec_attn_ = std::make_unique<CrossAttention>(rng, d, cfg.heads);
  dec_fc1_ = std::make_unique<Linear>(rng, d, d / 2);
  dec_fc2_ = std::make_unique<Linear>(rng, d / 2, p * p);
  register_child("dec_attn", dec_attn_.get());
  register_child("dec_fc1", dec_fc1_.get());
  register_child("dec_fc2", dec_fc2_.get());

  chem_head_ = std::make_unique<Mlp>(rng, d, d / 2, 3);
  register_child("chem_head", chem_head_.get());
}

ContextEncoder::~ContextEncoder() = default;

Tensor ContextEncoder::embed_rgb_tokens(const Tensor& rgb) const {
  if (rgb.rank() != 4 || rgb.dim(1) != 3)
    throw ConfigError("rgb input must be (B, 3, H, W), got " + shape_str(rgb.shape()));
  Tensor tokens = proj_rgb_->forward(patchify(rgb, cfg_.patch_size));
  if (tokens.dim(1) != n_tokens()) throw ConfigError("rgb grid does not match encoder grid");
  return add(add(tokens, pos_table_), modality_rgb_);
}

Tensor ContextEncoder::embed_thermal_tokens(const Tensor& thermal,
                                            const std::vector<std::int64_t>& positions,
                                            Tensor* all_patches) const {
  if (thermal.rank() != 4 || thermal.dim(1) != 1)
    throw ConfigError("thermal input must be (B, 1, H, W), got " + shape_str(thermal.shape()));
  Tensor patches = patchify(thermal, cfg_.patch_size);
  if (patches.dim(1) != n_tokens()) throw ConfigError("thermal grid does not match encoder grid");
  if (all_patches) *all_patches = patches;
  Tensor tokens = add(add(proj_thermal_->forward(patches), pos_table_), modality_thermal_);
  return index_select(tokens, 1, positions);
}

Tensor ContextEncoder::encode_sequence(const Tensor& tokens) const {
  Tensor x = tokens;
  for (const auto& b : blocks_) x = b->forward(x);
  return final_norm_->forward(x);
}

Tensor ContextEncoder::context_features(const Tensor& rgb) const {
  Tensor encoded = encode_sequence(embed_rgb_tokens(rgb));
  return tokens_to_grid(encoded, grid_h_, grid_w_);
}

ContextEncoder::JointEncoding ContextEncoder::encode_joint(const Tensor& thermal,
                                                           const Tensor& rgb,
                                                           Rng& mask_rng) const {
  JointEncoding joint;
  joint.plan = sample_mask(n_tokens(), cfg_.mask_ratio, mask_rng);
  Tensor visible =
      embed_thermal_tokens(thermal, joint.plan.visible_idx, &joint.thermal_patches);
  joint.encoded = encode_sequence(concat({visible, embed_rgb_tokens(rgb)}, 1));
  return joint;
}

Tensor ContextEncoder::reconstruct_masked(const JointEncoding& joint) const {
  ++decoder_calls_;
  const auto& masked = joint.plan.masked_idx;
  const std::int64_t b = joint.encoded.dim(0);
  const auto m = static_cast<std::int64_t>(masked.size());
  Tensor queries = add(index_select(pos_table_, 0, masked), mask_token_);  // (M, dim)
  queries = add(Tensor::zeros({b, m, cfg_.embed_dim}), reshape(queries, {1, m, cfg_.embed_dim}));
  Tensor decoded = dec_attn_->forward(queries, joint.encoded);
  Tensor pixels = dec_fc2_->forward(gelu(dec_fc1_->forward(decoded)));  // (B, M, p*p)
  Tensor target = stop_gradient(index_select(joint.thermal_patches, 1, masked));
  return l1_loss(pixels, target);
}

Tensor ContextEncoder::chem_align(const JointEncoding& joint, const Tensor& targets_z) const {
  ++chem_calls_;
  if (targets_z.rank() != 2 || targets_z.dim(1) != 3)
    throw ConfigError("chemical targets must be (B, 3)");
  const auto n_visible = static_cast<std::int64_t>(joint.plan.visible_idx.size());
  Tensor rgb_tokens = slice(joint.encoded, 1, n_visible, n_tokens());
  Tensor pred = chem_head_->forward(mean_axis(rgb_tokens, 1));
  return huber_loss(pred, targets_z);
}

}  // namespace fryshort::model
