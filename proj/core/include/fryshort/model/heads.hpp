#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fryshort/data/chemistry.hpp"
#include "fryshort/nn/module.hpp"

namespace fryshort::model {

using nn::Tensor;

struct LossWeights {
  double seg = 0.1;
  double aux = 0.4;
  double totox = 1.0;
  double pv = 0.5;
  double p_av = 0.5;
  double temp = 0.5;
  double mae = 0.3;
  double chem = 0.3;
  double dann = 0.1;
  double rgb_dann = 0.1;
};

/// 1×1 convolution to 3 class logits, upsampled ×4 to input resolution.
class SegHead : public nn::Module {
 public:
  SegHead(Rng& rng, std::int64_t in_ch);
  Tensor forward(const Tensor& f_fused) const;

 private:
  std::unique_ptr<nn::Conv2d> conv_;
};

/// Secondary supervision on the stride-4 stage: 3×3 conv then 1×1 conv,
/// upsampled ×4. Training only.
class AuxHead : public nn::Module {
 public:
  AuxHead(Rng& rng, std::int64_t in_ch);
  Tensor forward(const Tensor& f1) const;

 private:
  std::unique_ptr<nn::Conv2d> conv3_, conv1_;
};

/// One two-layer regression head (C → C → 1) on detached pooled features.
class RegressionHead : public nn::Module {
 public:
  RegressionHead(Rng& rng, std::int64_t in_ch);
  Tensor forward(const Tensor& pooled) const;

 private:
  std::unique_ptr<nn::Mlp> mlp_;
};

/// Frame class from an argmax segmentation map: the predicted oil region is
/// every non-background pixel; ties and empty regions resolve to `replace`
/// (the conservative failure mode).
data::OilClass majority_vote(const std::vector<std::uint8_t>& argmax_labels);

/// Named scalar loss parts; undefined tensors are inactive and contribute 0.
struct LossParts {
  Tensor seg, aux, totox, pv, p_av, temp, mae, chem, dann, rgb_dann;
};

Tensor total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace fryshort::model
