#pragma once

#include <cstdint>
#include <vector>

#include "fryshort/nn/tensor.hpp"
#include "fryshort/train/trainer.hpp"

namespace fryshort::train {

struct ProbeResult {
  double accuracy = 0.0;
  std::int64_t n_fit = 0;
  std::int64_t n_held = 0;
  std::int64_t n_classes = 0;
};

/// Fits a single linear softmax classifier on a frame-random 80/20 split of
/// the feature rows and reports held-out accuracy. Deterministic in `seed`.
ProbeResult fit_linear_probe(const nn::Tensor& features, const std::vector<std::int64_t>& labels,
                             std::int64_t n_classes, std::uint64_t seed);

/// Video-identity audit: pooled final-stage features of every training frame
/// are probed for the video id. High held-out accuracy means the features
/// carry the camera fingerprint rather than oxidation content.
ProbeResult probe_audit(model::DualStreamNet& net, const LoadedDataset& ds, std::uint64_t seed);

}  // namespace fryshort::train
