#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fryshort/data/manifest.hpp"
#include "fryshort/data/render.hpp"

namespace fryshort::data {

/// Renders every frame of the manifest and writes the dataset directory:
/// manifest.json plus frames/<video_id>/<frame_idx>_{thermal,rgb,mask}.png.
/// Thermal is 16-bit grayscale (round(x*65535)), rgb 8-bit, mask 8-bit with
/// values {0,1,2}. manifest.json records a CRC32 of each file's raw pixel
/// bytes. Throws std::runtime_error on I/O failure.
void write_dataset(const DatasetManifest& manifest, const std::string& out_dir);

/// Parses manifest.json. Throws on missing file, parse error, or
/// schema-version mismatch.
DatasetManifest read_manifest(const std::string& dir);

/// Reads one frame back at on-disk precision and verifies its checksums.
FramePair read_frame(const std::string& dir, const DatasetManifest& manifest, int video_id,
                     int frame_idx);

/// Verifies every file checksum in the manifest; returns a list of offending
/// paths (empty when the dataset is intact).
std::vector<std::string> verify_dataset(const std::string& dir, const DatasetManifest& manifest);

/// JSON round trip used by both the writer and the tests.
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// CRC32 (zlib polynomial) over the canonical raw pixel bytes of a frame
/// file: little-endian u16 stream for thermal, u8 stream otherwise.
std::uint32_t pixel_crc32(const std::vector<std::uint16_t>& pixels);
std::uint32_t pixel_crc32(const std::vector<std::uint8_t>& pixels);

/// All frames of a split, at on-disk precision, ordered by (video, frame).
std::vector<FramePair> load_split(const std::string& dir, const DatasetManifest& manifest,
                                  Split split);

}  // namespace fryshort::data
