#include "fryshort/data/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace fryshort::data {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Quiet handlers: errors surface as exceptions via setjmp, so keep libpng
// from printing to stderr on its own.
extern "C" void quiet_png_error(png_structp png, png_const_charp) { longjmp(png_jmpbuf(png), 1); }
extern "C" void quiet_png_warning(png_structp, png_const_charp) {}

// libpng uses longjmp for error handling; wrap setup/teardown once.
template <typename Body>
void write_png(const std::string& path, int h, int w, int bit_depth, int color_type,
               Body&& fill_rows) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, quiet_png_error, quiet_png_warning);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write error: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // native little-endian buffers
  fill_rows(png);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

template <typename Body>
void read_png(const std::string& path, int& h, int& w, int expect_bit_depth, int expect_color_type,
              Body&& consume) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, quiet_png_error, quiet_png_warning);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read error: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != expect_bit_depth || color != expect_color_type) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unexpected png format in " + path);
  }
  if (depth == 16) png_set_swap(png);
  consume(png);
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png_gray16(const std::string& path, const std::vector<std::uint16_t>& pixels, int h,
                      int w) {
  if (pixels.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
    throw std::runtime_error("gray16 buffer size mismatch");
  write_png(path, h, w, 16, PNG_COLOR_TYPE_GRAY, [&](png_structp png) {
    for (int y = 0; y < h; ++y)
      png_write_row(png, reinterpret_cast<png_const_bytep>(pixels.data() + static_cast<std::size_t>(y) * w));
  });
}

std::vector<std::uint16_t> read_png_gray16(const std::string& path, int& h, int& w) {
  std::vector<std::uint16_t> pixels;
  read_png(path, h, w, 16, PNG_COLOR_TYPE_GRAY, [&](png_structp png) {
    pixels.resize(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y)
      png_read_row(png, reinterpret_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * w),
                   nullptr);
  });
  return pixels;
}

void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& pixels, int h,
                     int w) {
  if (pixels.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
    throw std::runtime_error("gray8 buffer size mismatch");
  write_png(path, h, w, 8, PNG_COLOR_TYPE_GRAY, [&](png_structp png) {
    for (int y = 0; y < h; ++y)
      png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * w));
  });
}

std::vector<std::uint8_t> read_png_gray8(const std::string& path, int& h, int& w) {
  std::vector<std::uint8_t> pixels;
  read_png(path, h, w, 8, PNG_COLOR_TYPE_GRAY, [&](png_structp png) {
    pixels.resize(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y)
      png_read_row(png, pixels.data() + static_cast<std::size_t>(y) * w, nullptr);
  });
  return pixels;
}

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& pixels, int h,
                    int w) {
  if (pixels.size() != 3 * static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
    throw std::runtime_error("rgb8 buffer size mismatch");
  write_png(path, h, w, 8, PNG_COLOR_TYPE_RGB, [&](png_structp png) {
    for (int y = 0; y < h; ++y)
      png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * w * 3));
  });
}

std::vector<std::uint8_t> read_png_rgb8(const std::string& path, int& h, int& w) {
  std::vector<std::uint8_t> pixels;
  read_png(path, h, w, 8, PNG_COLOR_TYPE_RGB, [&](png_structp png) {
    pixels.resize(3 * static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y)
      png_read_row(png, pixels.data() + static_cast<std::size_t>(y) * w * 3, nullptr);
  });
  return pixels;
}

}  // namespace fryshort::data
