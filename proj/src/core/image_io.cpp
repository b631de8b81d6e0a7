#include "image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "error.hpp"

namespace sculpt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
  }
  fail(Errc::invalid_argument, "unsupported PNG channel count " + std::to_string(channels));
}

std::uint16_t to8(double v) { return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

PngImage read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(Errc::io, "cannot open " + path.string());
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail(Errc::internal, "libpng initialization failed");

  PngImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::format, path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * img.height);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      img.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
  } else {
    for (std::size_t i = 0; i < n; ++i) img.samples[i] = buffer[i];
  }
  return img;
}

void write_png(const std::filesystem::path& path, const PngImage& img) {
  require(img.bit_depth == 8 || img.bit_depth == 16, Errc::invalid_argument, "PNG bit depth must be 8 or 16");
  require(img.samples.size() == static_cast<std::size_t>(img.width) * img.height * img.channels,
          Errc::dimension_mismatch, "PNG sample count does not match dimensions");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(Errc::io, "cannot write " + path.string());
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail(Errc::internal, "libpng initialization failed");

  const int bytes_per_sample = img.bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bytes_per_sample;
  std::vector<std::uint8_t> buffer(rowbytes * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (bytes_per_sample == 2) {
      buffer[2 * i] = static_cast<std::uint8_t>(img.samples[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<std::uint8_t>(img.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<std::uint8_t>(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + rowbytes * y;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::io, path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth, color_type_for(img.channels), PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png8(const std::filesystem::path& path, const Raster& rgb) {
  PngImage img{rgb.width, rgb.height, rgb.channels, 8, {}};
  img.samples.resize(rgb.data.size());
  for (std::size_t i = 0; i < rgb.data.size(); ++i) img.samples[i] = to8(rgb.data[i]);
  write_png(path, img);
}

void write_png8_rgba(const std::filesystem::path& path, const Raster& rgb, const Mask& alpha) {
  require(rgb.channels == 3 && alpha.height == rgb.height && alpha.width == rgb.width, Errc::dimension_mismatch,
          "RGBA export needs an H×W×3 raster and matching alpha");
  PngImage img{rgb.width, rgb.height, 4, 8, {}};
  img.samples.resize(rgb.texels() * 4);
  for (std::size_t p = 0; p < rgb.texels(); ++p) {
    for (int c = 0; c < 3; ++c) img.samples[4 * p + c] = to8(rgb.data[3 * p + c]);
    img.samples[4 * p + 3] = alpha.data[p] ? 255 : 0;
  }
  write_png(path, img);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  PngImage img{mask.width, mask.height, 1, 8, {}};
  img.samples.resize(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i) img.samples[i] = mask.data[i] ? 255 : 0;
  write_png(path, img);
}

Raster read_png_unit(const std::filesystem::path& path) {
  const PngImage img = read_png(path);
  const double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
  Raster r(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.samples.size(); ++i) r.data[i] = img.samples[i] / scale;
  return r;
}

Mask read_mask_png(const std::filesystem::path& path) {
  const PngImage img = read_png(path);
  Mask m(img.height, img.width);
  for (std::size_t p = 0; p < m.data.size(); ++p) m.data[p] = img.samples[p * img.channels] > 127 ? 1 : 0;
  return m;
}

}  // namespace sculpt
