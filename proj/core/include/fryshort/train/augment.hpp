#pragma once

#include <cstdint>
#include <vector>

#include "fryshort/data/render.hpp"
#include "fryshort/train/run_config.hpp"
#include "fryshort/util/rng.hpp"

namespace fryshort::train {

/// Nearest-neighbour resample for label maps (center-sampling convention).
std::vector<std::uint8_t> resize_mask_nearest(const std::vector<std::uint8_t>& src, int h, int w,
                                              int out_h, int out_w);

/// In-place horizontal flip of all three aligned planes.
void hflip_frame(data::FramePair& frame);

/// Random resize → horizontal flip → random crop/pad to (out_h, out_w),
/// applied identically to thermal, rgb and mask (mask resampled with nearest
/// neighbour); photometric jitter touches the rgb planes only. All
/// randomness comes from `rng`, so equal seeds give equal outputs.
data::FramePair augment_frame(const data::FramePair& in, const AugmentConfig& cfg, int out_h,
                              int out_w, Rng& rng);

}  // namespace fryshort::train
