#include "fryshort/data/dataset_io.hpp"

#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fryshort/data/png_io.hpp"

namespace fryshort::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_stem(int video_id, int frame_idx) {
  return "frames/" + std::to_string(video_id) + "/" + std::to_string(frame_idx);
}

struct QuantizedFrame {
  std::vector<std::uint16_t> thermal;
  std::vector<std::uint8_t> rgb;  // interleaved for PNG
  std::vector<std::uint8_t> mask;
};

QuantizedFrame quantize_for_disk(const FramePair& f) {
  QuantizedFrame q;
  const std::size_t n = f.thermal.size();
  q.thermal.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    q.thermal[i] = static_cast<std::uint16_t>(std::lround(f.thermal[i] * 65535.0));
  q.rgb.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      q.rgb[3 * i + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::lround(f.rgb[static_cast<std::size_t>(c) * n + i] * 255.0));
  q.mask = f.mask;
  return q;
}

json fingerprint_to_json(const CameraFingerprint& fp) {
  return json{{"seed", fp.seed},
              {"fpn_amplitude", fp.fpn_amplitude},
              {"vignette_strength", fp.vignette_strength},
              {"thermal_bias", fp.thermal_bias},
              {"wb_gain", fp.wb_gain},
              {"rgb_noise_sigma", fp.rgb_noise_sigma}};
}

CameraFingerprint fingerprint_from_json(const json& j) {
  CameraFingerprint fp;
  fp.seed = j.at("seed").get<std::uint64_t>();
  fp.fpn_amplitude = j.at("fpn_amplitude").get<double>();
  fp.vignette_strength = j.at("vignette_strength").get<double>();
  fp.thermal_bias = j.at("thermal_bias").get<double>();
  fp.wb_gain = j.at("wb_gain").get<std::array<double, 3>>();
  fp.rgb_noise_sigma = j.at("rgb_noise_sigma").get<double>();
  return fp;
}

json stats_to_json(const TargetStats& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; }

TargetStats stats_from_json(const json& j) {
  return TargetStats{j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace

std::uint32_t pixel_crc32(const std::vector<std::uint16_t>& pixels) {
  // canonical byte stream: little-endian u16
  std::vector<std::uint8_t> bytes(pixels.size() * 2);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(pixels[i] & 0xFF);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(pixels[i] >> 8);
  }
  return static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::uint32_t pixel_crc32(const std::vector<std::uint8_t>& pixels) {
  return static_cast<std::uint32_t>(
      crc32(0L, pixels.data(), static_cast<uInt>(pixels.size())));
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["generator_seed"] = m.generator_seed;
  j["image_size"] = {m.config.image_h, m.config.image_w};
  const GeneratorConfig& c = m.config;
  j["config"] = json{{"total_videos", c.total_videos},
                     {"frames_per_video", c.frames_per_video},
                     {"image_h", c.image_h},
                     {"image_w", c.image_w},
                     {"shortcut_strength", c.shortcut_strength},
                     {"clean_contrast", c.clean_contrast},
                     {"good_totox_min", c.good_totox_min},
                     {"good_totox_max", c.good_totox_max},
                     {"replace_totox_min", c.replace_totox_min},
                     {"replace_totox_max", c.replace_totox_max},
                     {"temp_min_f", c.temp_min_f},
                     {"temp_max_f", c.temp_max_f}};
  j["norm_stats"] = json{{"pv", stats_to_json(m.norm_stats.pv)},
                         {"p_av", stats_to_json(m.norm_stats.p_av)},
                         {"totox", stats_to_json(m.norm_stats.totox)},
                         {"temp_f", stats_to_json(m.norm_stats.temp_f)}};
  j["videos"] = json::array();
  for (const auto& v : m.videos) {
    j["videos"].push_back(json{{"video_id", v.video_id},
                               {"oil_type", to_string(v.oil_type)},
                               {"split", to_string(v.split)},
                               {"n_frames", v.n_frames},
                               {"chem", json{{"pv", v.chem.pv},
                                             {"p_av", v.chem.p_av},
                                             {"totox", v.chem.totox},
                                             {"temp_f", v.chem.temp_f}}},
                               {"fingerprint", fingerprint_to_json(v.fingerprint)}});
  }
  j["checksums"] = m.checksums;
  return j.dump(2);
}

DatasetManifest manifest_from_json(const std::string& text) {
  const json j = json::parse(text);
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1)
    throw std::runtime_error("unsupported dataset schema version " +
                             std::to_string(m.schema_version));
  m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
  const json& c = j.at("config");
  m.config.total_videos = c.at("total_videos").get<int>();
  m.config.frames_per_video = c.at("frames_per_video").get<int>();
  m.config.image_h = c.at("image_h").get<int>();
  m.config.image_w = c.at("image_w").get<int>();
  m.config.shortcut_strength = c.at("shortcut_strength").get<double>();
  m.config.clean_contrast = c.at("clean_contrast").get<double>();
  m.config.good_totox_min = c.at("good_totox_min").get<double>();
  m.config.good_totox_max = c.at("good_totox_max").get<double>();
  m.config.replace_totox_min = c.at("replace_totox_min").get<double>();
  m.config.replace_totox_max = c.at("replace_totox_max").get<double>();
  m.config.temp_min_f = c.at("temp_min_f").get<double>();
  m.config.temp_max_f = c.at("temp_max_f").get<double>();
  const json& ns = j.at("norm_stats");
  m.norm_stats.pv = stats_from_json(ns.at("pv"));
  m.norm_stats.p_av = stats_from_json(ns.at("p_av"));
  m.norm_stats.totox = stats_from_json(ns.at("totox"));
  m.norm_stats.temp_f = stats_from_json(ns.at("temp_f"));
  for (const json& vj : j.at("videos")) {
    VideoSpec v;
    v.video_id = vj.at("video_id").get<int>();
    v.oil_type = oil_type_from_string(vj.at("oil_type").get<std::string>());
    v.split = split_from_string(vj.at("split").get<std::string>());
    v.n_frames = vj.at("n_frames").get<int>();
    const json& ch = vj.at("chem");
    v.chem.pv = ch.at("pv").get<double>();
    v.chem.p_av = ch.at("p_av").get<double>();
    v.chem.totox = ch.at("totox").get<double>();
    v.chem.temp_f = ch.at("temp_f").get<double>();
    v.fingerprint = fingerprint_from_json(vj.at("fingerprint"));
    m.videos.push_back(v);
  }
  if (j.contains("checksums"))
    m.checksums = j.at("checksums").get<std::map<std::string, std::uint32_t>>();
  return m;
}

void write_dataset(const DatasetManifest& manifest, const std::string& out_dir) {
  DatasetManifest m = manifest;
  m.checksums.clear();
  fs::create_directories(out_dir);
  for (const auto& v : m.videos) {
    fs::create_directories(fs::path(out_dir) / "frames" / std::to_string(v.video_id));
    for (int f = 0; f < v.n_frames; ++f) {
      const FramePair frame = render_frame(v, f, m.config);
      const QuantizedFrame q = quantize_for_disk(frame);
      const std::string stem = frame_stem(v.video_id, f);
      const std::string base = out_dir + "/" + stem;
      write_png_gray16(base + "_thermal.png", q.thermal, frame.h, frame.w);
      write_png_rgb8(base + "_rgb.png", q.rgb, frame.h, frame.w);
      write_png_gray8(base + "_mask.png", q.mask, frame.h, frame.w);
      m.checksums[stem + "_thermal.png"] = pixel_crc32(q.thermal);
      m.checksums[stem + "_rgb.png"] = pixel_crc32(q.rgb);
      m.checksums[stem + "_mask.png"] = pixel_crc32(q.mask);
    }
  }
  std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest.json in " + out_dir);
  out << manifest_to_json(m) << "\n";
  if (!out) throw std::runtime_error("manifest.json write failed in " + out_dir);
}

DatasetManifest read_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("missing manifest.json in " + dir);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return manifest_from_json(text);
}

namespace {

void check_crc(const DatasetManifest& m, const std::string& rel, std::uint32_t actual) {
  const auto it = m.checksums.find(rel);
  if (it == m.checksums.end()) throw std::runtime_error("no checksum recorded for " + rel);
  if (it->second != actual) throw std::runtime_error("checksum mismatch for " + rel);
}

}  // namespace

FramePair read_frame(const std::string& dir, const DatasetManifest& manifest, int video_id,
                     int frame_idx) {
  const std::string stem = frame_stem(video_id, frame_idx);
  const std::string base = dir + "/" + stem;
  int h = 0, w = 0;
  const auto thermal = read_png_gray16(base + "_thermal.png", h, w);
  check_crc(manifest, stem + "_thermal.png", pixel_crc32(thermal));
  int h2 = 0, w2 = 0;
  const auto rgb = read_png_rgb8(base + "_rgb.png", h2, w2);
  check_crc(manifest, stem + "_rgb.png", pixel_crc32(rgb));
  int h3 = 0, w3 = 0;
  const auto mask = read_png_gray8(base + "_mask.png", h3, w3);
  check_crc(manifest, stem + "_mask.png", pixel_crc32(mask));
  if (h2 != h || w2 != w || h3 != h || w3 != w)
    throw std::runtime_error("frame size mismatch in " + base);

  FramePair f;
  f.h = h;
  f.w = w;
  f.video_id = video_id;
  f.frame_idx = frame_idx;
  const std::size_t n = thermal.size();
  f.thermal.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.thermal[i] = thermal[i] / 65535.0;
  f.rgb.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      f.rgb[static_cast<std::size_t>(c) * n + i] = rgb[3 * i + static_cast<std::size_t>(c)] / 255.0;
  f.mask = mask;
  return f;
}

std::vector<std::string> verify_dataset(const std::string& dir, const DatasetManifest& manifest) {
  std::vector<std::string> bad;
  for (const auto& v : manifest.videos) {
    for (int f = 0; f < v.n_frames; ++f) {
      try {
        read_frame(dir, manifest, v.video_id, f);
      } catch (const std::exception&) {
        bad.push_back(frame_stem(v.video_id, f));
      }
    }
  }
  return bad;
}

std::vector<FramePair> load_split(const std::string& dir, const DatasetManifest& manifest,
                                  Split split) {
  std::vector<FramePair> frames;
  for (const auto& v : manifest.videos) {
    if (v.split != split) continue;
    for (int f = 0; f < v.n_frames; ++f)
      frames.push_back(read_frame(dir, manifest, v.video_id, f));
  }
  return frames;
}

}  // namespace fryshort::data
