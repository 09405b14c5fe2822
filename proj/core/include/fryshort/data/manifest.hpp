#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fryshort/data/chemistry.hpp"

namespace fryshort::data {

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

enum class OilType { corn, canola };

std::string to_string(OilType t);
OilType oil_type_from_string(const std::string& s);

/// Per-video sensor nuisance parameters injected into every frame of the
/// video. Fully determined by (seed, shortcut_strength, clean_contrast):
/// equal inputs give field-wise identical fingerprints. At strength 0 the
/// fingerprint is the identity (no injection).
struct CameraFingerprint {
  std::uint64_t seed = 0;
  double fpn_amplitude = 0.0;       // fixed-pattern noise scale
  double vignette_strength = 0.0;   // radial attenuation coefficient
  double thermal_bias = 0.0;        // additive offset
  std::array<double, 3> wb_gain{1.0, 1.0, 1.0};
  double rgb_noise_sigma = 0.0;     // per-pixel noise scale
};

struct VideoSpec {
  int video_id = 0;
  OilType oil_type = OilType::corn;
  Split split = Split::train;
  ChemicalState chem;
  int n_frames = 0;
  CameraFingerprint fingerprint;
};

struct TargetStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// z-score statistics per regression target, train-split videos only.
struct NormStats {
  TargetStats pv, p_av, totox, temp_f;
};

struct GeneratorConfig {
  int total_videos = 28;
  int frames_per_video = 12;
  int image_h = 64;
  int image_w = 64;
  /// Fingerprint amplitude as a multiple of the clean class-signal contrast.
  double shortcut_strength = 3.0;
  /// Thermal contrast of the oxidation texture (the clean class cue).
  double clean_contrast = 0.05;
  /// Per-class totox ranges; the gap around the threshold keeps the class
  /// boundary learnable from the clean appearance cues.
  double good_totox_min = 5.0;
  double good_totox_max = 20.0;
  double replace_totox_min = 30.0;
  double replace_totox_max = 80.0;
  double temp_min_f = 100.0;
  double temp_max_f = 130.0;
};

struct DatasetManifest {
  int schema_version = 1;
  std::uint64_t generator_seed = 0;
  GeneratorConfig config;
  std::vector<VideoSpec> videos;
  NormStats norm_stats;
  /// Relative path -> CRC32 of raw pixel bytes; filled by the dataset writer.
  std::map<std::string, std::uint32_t> checksums;
};

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};

/// Proportional mirror of the 20/4/4 ratio: val = test =
/// max(1, llround(total * 4/28)), train takes the rest. Requires total >= 3.
SplitCounts split_counts(int total_videos);

CameraFingerprint sample_fingerprint(std::uint64_t seed, double shortcut_strength,
                                     double clean_contrast);

/// Deterministic manifest: chemistry, fingerprints, class-stratified
/// video-disjoint splits, and train-split norm stats.
DatasetManifest sample_manifest(const GeneratorConfig& cfg, std::uint64_t master_seed);

/// Population mean/std of each target over train-split videos, std floored
/// at 1e-6.
NormStats compute_norm_stats(const DatasetManifest& manifest);

std::vector<const VideoSpec*> videos_in_split(const DatasetManifest& manifest, Split split);

/// z-scored regression target vector (pv, p_av, totox, temp_f).
std::array<double, 4> normalized_targets(const ChemicalState& chem, const NormStats& stats);

}  // namespace fryshort::data
