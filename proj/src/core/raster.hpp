#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sculpt {

// Row-major H×W×C raster of doubles. Row i, column j; for UV-space rasters
// texel (i, j) is centered at uv = ((j + 0.5) / W, (i + 0.5) / H).
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int i, int j, int c = 0) const {
    return (static_cast<std::size_t>(i) * width + j) * channels + c;
  }
  double& at(int i, int j, int c = 0) { return data[index(i, j, c)]; }
  double at(int i, int j, int c = 0) const { return data[index(i, j, c)]; }
  std::size_t texels() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Raster& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Boolean H×W mask, 1 = inside.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}
  std::uint8_t& at(int i, int j) { return data[static_cast<std::size_t>(i) * width + j]; }
  std::uint8_t at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
};

}  // namespace sculpt
