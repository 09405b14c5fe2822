#pragma once

#include <cstdint>
#include <vector>

#include "fryshort/data/manifest.hpp"

namespace fryshort::data {

/// Co-registered thermal/RGB frame with its ternary mask. Values in [0,1];
/// rgb is planar (channel, row, col); mask labels are 0=background,
/// 1=good oil, 2=replace oil.
struct FramePair {
  int h = 0, w = 0;
  std::vector<double> thermal;  // h*w
  std::vector<double> rgb;      // 3*h*w planar
  std::vector<std::uint8_t> mask;
  int video_id = 0;
  int frame_idx = 0;
};

/// Deterministic renderer. The clean scene (oil-region appearance, oxidation
/// texture, background) is a function of chemistry, frame index and absolute
/// pixel coordinates only; the per-frame jitter of the oil ellipse is the
/// only use of video identity outside the fingerprint. Consequently, with a
/// zeroed fingerprint, two same-chemistry videos differ exactly on the
/// symmetric difference of their oil regions.
FramePair render_frame(const VideoSpec& spec, int frame_idx, const GeneratorConfig& cfg);

/// Quantizes to the on-disk precision: thermal round(x*65535)/65535,
/// rgb round(x*255)/255. Reading a written frame reproduces this exactly.
void quantize_frame(FramePair& frame);

}  // namespace fryshort::data
