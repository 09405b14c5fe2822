#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fryshort/nn/module.hpp"

namespace fryshort::model {

using nn::Tensor;

struct EncoderConfig {
  std::int64_t depth = 6;
  std::int64_t embed_dim = 64;
  std::int64_t patch_size = 8;
  double mask_ratio = 0.75;
  int heads = 4;
};

/// Random split of the thermal token positions into masked and visible sets.
/// |masked| = floor(mask_ratio * n); the union is exhaustive and disjoint.
struct MaskPlan {
  std::vector<std::int64_t> masked_idx;
  std::vector<std::int64_t> visible_idx;
};

MaskPlan sample_mask(std::int64_t n_tokens, double mask_ratio, Rng& rng);

/// (B, C, H, W) -> (B, N, p*p*C) row-major non-overlapping patches.
Tensor patchify(const Tensor& image, std::int64_t patch);
/// Inverse of patchify for a (B, N, p*p*C) token tensor.
Tensor unpatchify(const Tensor& tokens, std::int64_t channels, std::int64_t h, std::int64_t w,
                  std::int64_t patch);

/// Transformer encoder shared between the RGB stream and, during training,
/// the visible thermal tokens. Produces the dense RGB context map used for
/// fusion, plus two training-only losses: masked thermal reconstruction and
/// chemical alignment. A single positional table is shared across modalities;
/// two learned modality embeddings keep the streams distinguishable.
class ContextEncoder : public nn::Module {
 public:
  ContextEncoder(Rng& rng, const EncoderConfig& cfg, std::int64_t image_h, std::int64_t image_w);
  ~ContextEncoder() override;  // Block is defined in the implementation file

  /// Inference path: rgb (B, 3, H, W) -> (B, embed_dim, H/p, W/p). Never
  /// touches the decoder or the chemical head.
  Tensor context_features(const Tensor& rgb) const;

  /// One training pass over [visible thermal; all rgb] tokens.
  struct JointEncoding {
    Tensor encoded;          // (B, n_visible + N, dim), order-preserving
    MaskPlan plan;
    Tensor thermal_patches;  // (B, N, p*p) reconstruction targets
  };
  JointEncoding encode_joint(const Tensor& thermal, const Tensor& rgb, Rng& mask_rng) const;

  /// L1 reconstruction loss over the masked thermal patches only. Masked
  /// positions are represented by a learned placeholder plus positional
  /// embedding; a single cross-attention over the encoded sequence gives the
  /// decoder access to visible-token content before the two-layer pixel head.
  Tensor reconstruct_masked(const JointEncoding& joint) const;

  /// Huber loss of the chemical head (pooled rgb tokens -> dim -> dim/2 -> 3)
  /// against z-scored targets (B, 3).
  Tensor chem_align(const JointEncoding& joint, const Tensor& targets_z) const;

  // Lower-level pieces, exposed for property tests.
  Tensor embed_rgb_tokens(const Tensor& rgb) const;
  Tensor embed_thermal_tokens(const Tensor& thermal, const std::vector<std::int64_t>& positions,
                              Tensor* all_patches = nullptr) const;
  Tensor encode_sequence(const Tensor& tokens) const;

  // Call-count instrumentation: the inference path must leave both at zero.
  std::int64_t decoder_calls() const { return decoder_calls_; }
  std::int64_t chem_calls() const { return chem_calls_; }
  void reset_call_counts() { decoder_calls_ = chem_calls_ = 0; }

  const EncoderConfig& config() const { return cfg_; }
  std::int64_t grid_h() const { return grid_h_; }
  std::int64_t grid_w() const { return grid_w_; }
  std::int64_t n_tokens() const { return grid_h_ * grid_w_; }

 private:
  EncoderConfig cfg_;
  std::int64_t grid_h_, grid_w_;
  Tensor pos_table_;                 // (N, dim)
  Tensor modality_thermal_, modality_rgb_;  // (dim)
  Tensor mask_token_;                // (dim)
  std::unique_ptr<nn::Linear> proj_thermal_, proj_rgb_;
  struct Block;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::unique_ptr<nn::LayerNorm> final_norm_;
  std::unique_ptr<nn::CrossAttention> dec_attn_;
  std::unique_ptr<nn::Linear> dec_fc1_, dec_fc2_;
  std::unique_ptr<nn::Mlp> chem_head_;
  mutable std::int64_t decoder_calls_ = 0;
  mutable std::int64_t chem_calls_ = 0;
};

}  // namespace fryshort::model
