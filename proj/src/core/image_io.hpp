#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "raster.hpp"

namespace sculpt {

// Raw PNG samples. 8-bit images store values 0..255, 16-bit 0..65535.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& image);

// [0,1] raster <-> 8-bit PNG. Values are clamped and rounded.
void write_png8(const std::filesystem::path& path, const Raster& rgb);
void write_png8_rgba(const std::filesystem::path& path, const Raster& rgb, const Mask& alpha);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Raster read_png_unit(const std::filesystem::path& path);  // channels as stored, scaled to [0,1]
Mask read_mask_png(const std::filesystem::path& path);

}  // namespace sculpt
