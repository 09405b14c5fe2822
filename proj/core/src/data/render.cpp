#include "fryshort/data/render.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fryshort/util/rng.hpp"

namespace fryshort::data {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Counter-based per-pixel randomness: cheap, order-independent, and
// parallelizable (no stream state shared between pixels).
double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const std::uint64_t h = Rng::mix(Rng::hash_combine(Rng::hash_combine(a, b), c));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double hash_pm1(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return 2.0 * hash_unit(a, b, c) - 1.0;
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / ax, dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
  }
};

// Oil color trajectory: pale yellow through amber to dark brown as totox
// grows. The luminance drop across the class threshold is steep enough to
// survive the white-balance fingerprint perturbation.
std::array<double, 3> oil_color(double totox) {
  struct Anchor {
    double t;
    std::array<double, 3> c;
  };
  static const Anchor anchors[] = {
      {0.0, {0.96, 0.90, 0.60}},
      {0.25, {0.88, 0.77, 0.45}},
      {0.375, {0.60, 0.42, 0.22}},
      {1.0, {0.30, 0.16, 0.07}},
  };
  const double t = clamp01(totox / 80.0);
  for (std::size_t i = 1; i < std::size(anchors); ++i) {
    if (t <= anchors[i].t) {
      const double f = (t - anchors[i - 1].t) / (anchors[i].t - anchors[i - 1].t);
      std::array<double, 3> c;
      for (int ch = 0; ch < 3; ++ch)
        c[static_cast<std::size_t>(ch)] = anchors[i - 1].c[static_cast<std::size_t>(ch)] +
                                          f * (anchors[i].c[static_cast<std::size_t>(ch)] -
                                               anchors[i - 1].c[static_cast<std::size_t>(ch)]);
      return c;
    }
  }
  return anchors[std::size(anchors) - 1].c;
}

}  // namespace

FramePair render_frame(const VideoSpec& spec, int frame_idx, const GeneratorConfig& cfg) {
  if (frame_idx < 0 || frame_idx >= spec.n_frames)
    throw std::invalid_argument("render_frame: frame index out of range");
  const int h = cfg.image_h, w = cfg.image_w;

  FramePair frame;
  frame.h = h;
  frame.w = w;
  frame.video_id = spec.video_id;
  frame.frame_idx = frame_idx;
  frame.thermal.resize(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
  frame.rgb.resize(3 * frame.thermal.size());
  frame.mask.resize(frame.thermal.size());

  // --- geometry: base ellipse plus per-frame jitter within 5% of image size
  const std::uint64_t geom_seed = Rng::hash_combine(
      Rng::hash_str("geometry"), Rng::hash_combine(static_cast<std::uint64_t>(spec.video_id),
                                                   static_cast<std::uint64_t>(frame_idx)));
  Rng geom(geom_seed);
  Ellipse oil;
  oil.cx = w * (0.5 + 0.05 * geom.uniform(-1.0, 1.0));
  oil.cy = h * (0.5 + 0.05 * geom.uniform(-1.0, 1.0));
  oil.ax = w * 0.34 + w * 0.05 * geom.uniform(-1.0, 1.0);
  oil.ay = h * 0.30 + h * 0.05 * geom.uniform(-1.0, 1.0);

  // --- chemistry-keyed appearance (shared by all videos with equal chemistry)
  const ChemicalState& chem = spec.chem;
  const std::uint64_t chem_seed = Rng::hash_combine(
      Rng::hash_combine(Rng::hash_combine(bits(chem.totox), bits(chem.p_av)),
                        Rng::hash_combine(bits(chem.pv), bits(chem.temp_f))),
      static_cast<std::uint64_t>(frame_idx));
  Rng appearance(Rng::hash_combine(Rng::hash_str("appearance"), chem_seed));
  const double t_ox = clamp01(chem.totox / 80.0);
  const double tex_freq = 2.0 + 6.0 * t_ox;  // cycles across the image width
  const double tex_contrast = cfg.clean_contrast * (0.4 + 0.6 * t_ox);
  const double theta = appearance.uniform(0.0, std::numbers::pi);
  const double phase = appearance.uniform(0.0, 2.0 * std::numbers::pi);
  const double cth = std::cos(theta), sth = std::sin(theta);
  const double oil_brightness = 0.28 + (chem.temp_f - 100.0) / 100.0;  // temp cue, class-free
  const std::array<double, 3> base_color = oil_color(chem.totox);
  const double speck_density = std::min(0.25, chem.p_av / 150.0);
  const std::uint64_t speck_seed = Rng::hash_combine(Rng::hash_str("speckle"), chem_seed);

  // --- fingerprint
  const CameraFingerprint& fp = spec.fingerprint;
  const std::uint64_t fpn_seed = Rng::hash_combine(Rng::hash_str("fpn"), fp.seed);
  const std::uint64_t noise_seed = Rng::hash_combine(
      Rng::hash_str("rgbnoise"), Rng::hash_combine(fp.seed, static_cast<std::uint64_t>(frame_idx)));
  const double half_w = 0.5 * (w - 1), half_h = 0.5 * (h - 1);
  const double corner_r2 = half_w * half_w + half_h * half_h;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                            static_cast<std::size_t>(x);
      const bool in_oil = oil.contains(x, y);
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);

      // clean thermal
      double th;
      if (in_oil) {
        const double wave =
            std::sin(2.0 * std::numbers::pi * tex_freq * (fx * cth + fy * sth) / w + phase);
        th = oil_brightness + tex_contrast * wave;
      } else {
        th = 0.10 + 0.05 * fy / (h - 1);
      }

      // clean rgb
      double r, g, b;
      if (in_oil) {
        r = base_color[0];
        g = base_color[1];
        b = base_color[2];
        // foam speckle keyed to 2x2 blocks; density grows with p-AV
        if (hash_unit(speck_seed, static_cast<std::uint64_t>(x / 2),
                      static_cast<std::uint64_t>(y / 2)) < speck_density) {
          r += 0.12;
          g += 0.12;
          b += 0.10;
        }
      } else {
        const double shade = 0.04 * fx / (w - 1);
        r = 0.55 + shade;
        g = 0.55 + shade;
        b = 0.58 + shade;
      }

      // fingerprint injection
      const double dx = fx - half_w, dy = fy - half_h;
      const double vignette = 1.0 - fp.vignette_strength * (dx * dx + dy * dy) / corner_r2;
      const double fpn = fp.fpn_amplitude * hash_pm1(fpn_seed, static_cast<std::uint64_t>(x),
                                                     static_cast<std::uint64_t>(y));
      frame.thermal[i] = clamp01(th * vignette + fpn + fp.thermal_bias);

      const double root3 = 1.7320508075688772;  // uniform noise matching sigma
      double rgbv[3] = {r, g, b};
      for (int ch = 0; ch < 3; ++ch) {
        const double noise = fp.rgb_noise_sigma * root3 *
                             hash_pm1(noise_seed, static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(ch));
        frame.rgb[static_cast<std::size_t>(ch) * frame.thermal.size() + i] =
            clamp01(rgbv[ch] * fp.wb_gain[static_cast<std::size_t>(ch)] + noise);
      }

      frame.mask[i] = in_oil ? static_cast<std::uint8_t>(oil_mask_label(chem)) : 0;
    }
  }
  return frame;
}

void quantize_frame(FramePair& frame) {
  for (auto& v : frame.thermal) v = std::round(v * 65535.0) / 65535.0;
  for (auto& v : frame.rgb) v = std::round(v * 255.0) / 255.0;
}

}  // namespace fryshort::data
