#include "fryshort/train/augment.hpp"

#include <algorithm>
#include <cmath>

#include "fryshort/nn/ops.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::train {

namespace {

using nn::Tensor;

std::vector<double> resize_planes(const std::vector<double>& src, int planes, int h, int w,
                                  int out_h, int out_w) {
  nn::NoGradGuard guard;
  Tensor t = Tensor::from_data({1, planes, h, w}, src);
  Tensor r = nn::bilinear_resize(t, out_h, out_w);
  return r.values();
}

}  // namespace

std::vector<std::uint8_t> resize_mask_nearest(const std::vector<std::uint8_t>& src, int h, int w,
                                              int out_h, int out_w) {
  if (h <= 0 || w <= 0 || out_h <= 0 || out_w <= 0 ||
      src.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
    throw ConfigError("bad mask resize arguments");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w));
  for (int y = 0; y < out_h; ++y) {
    int sy = static_cast<int>((y + 0.5) * h / out_h);
    sy = std::clamp(sy, 0, h - 1);
    for (int x = 0; x < out_w; ++x) {
      int sx = static_cast<int>((x + 0.5) * w / out_w);
      sx = std::clamp(sx, 0, w - 1);
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) +
          static_cast<std::size_t>(x)] =
          src[static_cast<std::size_t>(sy) * static_cast<std::size_t>(w) +
              static_cast<std::size_t>(sx)];
    }
  }
  return out;
}

void hflip_frame(data::FramePair& frame) {
  const int h = frame.h, w = frame.w;
  auto flip_plane = [&](auto* p) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        std::swap(p[y * w + x], p[y * w + (w - 1 - x)]);
  };
  flip_plane(frame.thermal.data());
  for (int c = 0; c < 3; ++c) flip_plane(frame.rgb.data() + static_cast<std::size_t>(c) * h * w);
  flip_plane(frame.mask.data());
}

data::FramePair augment_frame(const data::FramePair& in, const AugmentConfig& cfg, int out_h,
                              int out_w, Rng& rng) {
  if (out_h <= 0 || out_w <= 0) throw ConfigError("augment target size must be positive");

  data::FramePair cur = in;
  if (cfg.resize) {
    const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const int sh = std::max<int>(1, static_cast<int>(std::llround(in.h * s)));
    const int sw = std::max<int>(1, static_cast<int>(std::llround(in.w * s)));
    if (sh != in.h || sw != in.w) {
      cur.thermal = resize_planes(in.thermal, 1, in.h, in.w, sh, sw);
      cur.rgb = resize_planes(in.rgb, 3, in.h, in.w, sh, sw);
      cur.mask = resize_mask_nearest(in.mask, in.h, in.w, sh, sw);
      cur.h = sh;
      cur.w = sw;
    }
  }
  if (cfg.hflip && rng.bernoulli(0.5)) hflip_frame(cur);

  // Per-axis crop (when larger than the target) or zero-pad at a random
  // offset (when smaller). Background label 0 fills padded mask area.
  const int src_y = cur.h > out_h ? static_cast<int>(rng.uniform_int(cur.h - out_h + 1)) : 0;
  const int dst_y = cur.h < out_h ? static_cast<int>(rng.uniform_int(out_h - cur.h + 1)) : 0;
  const int src_x = cur.w > out_w ? static_cast<int>(rng.uniform_int(cur.w - out_w + 1)) : 0;
  const int dst_x = cur.w < out_w ? static_cast<int>(rng.uniform_int(out_w - cur.w + 1)) : 0;
  const int copy_h = std::min(cur.h, out_h);
  const int copy_w = std::min(cur.w, out_w);

  data::FramePair out;
  out.h = out_h;
  out.w = out_w;
  out.video_id = in.video_id;
  out.frame_idx = in.frame_idx;
  out.thermal.assign(static_cast<std::size_t>(out_h) * out_w, 0.0);
  out.rgb.assign(static_cast<std::size_t>(3) * out_h * out_w, 0.0);
  out.mask.assign(static_cast<std::size_t>(out_h) * out_w, 0);
  auto blit = [&](const auto& src, auto& dst, int plane) {
    const std::size_t src_base = static_cast<std::size_t>(plane) * cur.h * cur.w;
    const std::size_t dst_base = static_cast<std::size_t>(plane) * out_h * out_w;
    for (int y = 0; y < copy_h; ++y)
      for (int x = 0; x < copy_w; ++x)
        dst[dst_base + static_cast<std::size_t>(dst_y + y) * out_w + (dst_x + x)] =
            src[src_base + static_cast<std::size_t>(src_y + y) * cur.w + (src_x + x)];
  };
  blit(cur.thermal, out.thermal, 0);
  for (int c = 0; c < 3; ++c) blit(cur.rgb, out.rgb, c);
  blit(cur.mask, out.mask, 0);

  if (cfg.photometric) {
    const double brightness = rng.uniform(0.85, 1.15);
    for (int c = 0; c < 3; ++c) {
      const double gain = brightness * rng.uniform(0.9, 1.1);
      double* p = out.rgb.data() + static_cast<std::size_t>(c) * out_h * out_w;
      for (std::size_t i = 0; i < static_cast<std::size_t>(out_h) * out_w; ++i)
        p[i] = std::clamp(p[i] * gain, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace fryshort::train
