#include "fryshort/model/heads.hpp"

#include "fryshort/nn/ops.hpp"

namespace fryshort::model {

using namespace nn;

SegHead::SegHead(Rng& rng, std::int64_t in_ch) {
  conv_ = std::make_unique<Conv2d>(rng, in_ch, 3, 1, 1, 0);
  register_child("conv", conv_.get());
}

Tensor SegHead::forward(const Tensor& f_fused) const {
  Tensor logits = conv_->forward(f_fused);
  return bilinear_resize(logits, 4 * logits.dim(2), 4 * logits.dim(3));
}

AuxHead::AuxHead(Rng& rng, std::int64_t in_ch) {
  conv3_ = std::make_unique<Conv2d>(rng, in_ch, in_ch, 3, 1, 1);
  conv1_ = std::make_unique<Conv2d>(rng, in_ch, 3, 1, 1, 0);
  register_child("conv3", conv3_.get());
  register_child("conv1", conv1_.get());
}

Tensor AuxHead::forward(const Tensor& f1) const {
  Tensor logits = conv1_->forward(relu(conv3_->forward(f1)));
  return bilinear_resize(logits, 4 * logits.dim(2), 4 * logits.dim(3));
}

RegressionHead::RegressionHead(Rng& rng, std::int64_t in_ch) {
  mlp_ = std::make_unique<Mlp>(rng, in_ch, in_ch, 1);
  register_child("mlp", mlp_.get());
}

Tensor RegressionHead::forward(const Tensor& pooled) const { return mlp_->forward(pooled); }

data::OilClass majority_vote(const std::vector<std::uint8_t>& argmax_labels) {
  std::int64_t good = 0, replace = 0;
  for (const auto l : argmax_labels) {
    if (l == 1) ++good;
    if (l == 2) ++replace;
  }
  return good > replace ? data::OilClass::good : data::OilClass::replace;
}

Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  std::vector<Tensor> active;
  std::vector<double> w;
  auto push = [&](const Tensor& t, double weight) {
    if (t.defined()) {
      active.push_back(t);
      w.push_back(weight);
    }
  };
  push(parts.seg, weights.seg);
  push(parts.aux, weights.aux);
  push(parts.totox, weights.totox);
  push(parts.pv, weights.pv);
  push(parts.p_av, weights.p_av);
  push(parts.temp, weights.temp);
  push(parts.mae, weights.mae);
  push(parts.chem, weights.chem);
  push(parts.dann, weights.dann);
  push(parts.rgb_dann, weights.rgb_dann);
  return weighted_sum(active, w);
}

}  // namespace fryshort::model
