#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fryshort::data {

/// Thin libpng wrappers. All functions throw std::runtime_error on I/O or
/// decode failure. Pixel buffers are row-major; rgb is interleaved.

void write_png_gray16(const std::string& path, const std::vector<std::uint16_t>& pixels, int h,
                      int w);
std::vector<std::uint16_t> read_png_gray16(const std::string& path, int& h, int& w);

void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& pixels, int h,
                     int w);
std::vector<std::uint8_t> read_png_gray8(const std::string& path, int& h, int& w);

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& pixels, int h,
                    int w);
std::vector<std::uint8_t> read_png_rgb8(const std::string& path, int& h, int& w);

}  // namespace fryshort::data
