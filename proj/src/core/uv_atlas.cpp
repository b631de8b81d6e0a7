#include "uv_atlas.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "container.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "rasterize.hpp"

namespace sculpt {

namespace fs = std::filesystem;

void UvAtlas::validate() const {
  const auto n = static_cast<std::uint32_t>(vertex_uv.rows());
  require(face_corner_uv.size() == faces.size(), Errc::format, "atlas: face_corner_uv and faces differ in length");
  require(face_region.empty() || face_region.size() == faces.size(), Errc::format,
          "atlas: face_region length does not match faces");
  require(resolution >= 1, Errc::format, "atlas: resolution must be positive");
  auto in_unit = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; };
  for (Eigen::Index v = 0; v < vertex_uv.rows(); ++v)
    require(in_unit(vertex_uv(v, 0)) && in_unit(vertex_uv(v, 1)), Errc::format,
            "atlas: vertex " + std::to_string(v) + " has UV outside [0,1]");
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      require(faces[f][k] < n, Errc::format, "atlas: face " + std::to_string(f) + " indexes a missing vertex");
      require(in_unit(face_corner_uv[f][k].x()) && in_unit(face_corner_uv[f][k].y()), Errc::format,
              "atlas: face " + std::to_string(f) + " has a corner UV outside [0,1]");
    }
  }
}

UvAtlas atlas_from_vertex_uv(const UvCoords& uv, const Faces& faces, int resolution) {
  UvAtlas atlas;
  atlas.vertex_uv = uv;
  atlas.faces = faces;
  atlas.resolution = resolution;
  atlas.face_corner_uv.resize(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int k = 0; k < 3; ++k) atlas.face_corner_uv[f][k] = uv.row(faces[f][k]).transpose();
  return atlas;
}

UvAtlas load_atlas(const fs::path& path) {
  const Container c = Container::read(path);
  const auto& uv_shape = c.shape("uv_coords");
  require(uv_shape.size() == 2 && uv_shape[1] == 2, Errc::format, "uv_coords must be N×2");
  const auto n = uv_shape[0];
  const auto uv = c.get_f32("uv_coords");
  const auto& face_shape = c.shape("faces");
  require(face_shape.size() == 2 && face_shape[1] == 3, Errc::format, "faces must be F×3");
  const auto f = face_shape[0];
  const auto idx = c.get_u32("faces");

  UvCoords vuv(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) vuv.row(i) << uv[2 * i], uv[2 * i + 1];
  Faces faces(f);
  for (std::int64_t i = 0; i < f; ++i) faces[i] = {idx[3 * i], idx[3 * i + 1], idx[3 * i + 2]};
  UvAtlas atlas = atlas_from_vertex_uv(vuv, faces, c.fields().value("uv_resolution", 256));
  if (c.has("face_uv")) {
    const auto corner = c.get_f32("face_uv", {f, 3, 2});
    for (std::int64_t i = 0; i < f; ++i)
      for (int k = 0; k < 3; ++k) atlas.face_corner_uv[i][k] = {corner[6 * i + 2 * k], corner[6 * i + 2 * k + 1]};
  }
  if (c.has("face_regions")) atlas.face_region = c.get_u32("face_regions", {f});
  atlas.validate();
  return atlas;
}

void save_atlas(const UvAtlas& atlas, const fs::path& dir) {
  Container c("uv_atlas");
  c.fields()["uv_resolution"] = atlas.resolution;
  const auto n = static_cast<std::int64_t>(atlas.vertex_uv.rows());
  const auto f = static_cast<std::int64_t>(atlas.faces.size());
  c.put_f32("uv_coords", {n, 2}, std::span<const double>(atlas.vertex_uv.data(), atlas.vertex_uv.size()));
  std::vector<std::uint32_t> idx;
  std::vector<double> corner;
  for (std::int64_t i = 0; i < f; ++i)
    for (int k = 0; k < 3; ++k) {
      idx.push_back(atlas.faces[i][k]);
      corner.push_back(atlas.face_corner_uv[i][k].x());
      corner.push_back(atlas.face_corner_uv[i][k].y());
    }
  c.put_u32("faces", {f, 3}, idx);
  c.put_f32("face_uv", {f, 3, 2}, std::span<const double>(corner));
  if (!atlas.face_region.empty()) c.put_u32("face_regions", {f}, atlas.face_region);
  c.write(dir);
}

DispMap DispMap::zeros(const Mask& mask) {
  return DispMap{Raster(mask.height, mask.width, 3), mask};
}

namespace {

std::array<Vec2, 3> face_pixels(const UvAtlas& atlas, std::size_t f, int resolution) {
  std::array<Vec2, 3> p;
  for (int k = 0; k < 3; ++k)
    p[k] = {atlas.face_corner_uv[f][k].x() * resolution, atlas.face_corner_uv[f][k].y() * resolution};
  return p;
}

}  // namespace

Mask build_mask(const UvAtlas& atlas, int resolution, MaskStats* stats) {
  require(resolution >= 1, Errc::invalid_argument, "mask resolution must be positive");
  Mask mask(resolution, resolution);
  std::size_t degenerate = 0;
  for (std::size_t f = 0; f < atlas.faces.size(); ++f) {
    const auto p = face_pixels(atlas, f, resolution);
    const bool ok = rasterize_triangle(p[0], p[1], p[2], resolution, resolution,
                                       [&](int r, int c, const std::array<double, 3>&) { mask.at(r, c) = 1; });
    degenerate += !ok;
  }
  if (stats) stats->degenerate = degenerate;
  return mask;
}

Raster bake_vertex_values(std::span<const double> values, int channels, const UvAtlas& atlas, int resolution,
                          Mask* coverage, const BakeOptions& options, BakeStats* stats) {
  require(resolution >= 1, Errc::invalid_argument, "bake resolution must be positive");
  require(channels >= 1, Errc::invalid_argument, "bake needs at least one channel");
  require(values.size() == static_cast<std::size_t>(atlas.num_vertices()) * channels, Errc::dimension_mismatch,
          "bake: expected " + std::to_string(atlas.num_vertices()) + "×" + std::to_string(channels) +
              " vertex values, got " + std::to_string(values.size()));
  Raster out(resolution, resolution, channels);
  Mask mask(resolution, resolution);
  std::vector<std::int32_t> writer(out.texels(), -1);
  BakeStats local;

  for (std::size_t f = 0; f < atlas.faces.size(); ++f) {
    const auto p = face_pixels(atlas, f, resolution);
    const Face& face = atlas.faces[f];
    const bool ok = rasterize_triangle(p[0], p[1], p[2], resolution, resolution,
                                       [&](int r, int c, const std::array<double, 3>& b) {
                                         const std::size_t t = static_cast<std::size_t>(r) * resolution + c;
                                         if (mask.data[t]) ++local.overlaps;
                                         mask.data[t] = 1;
                                         writer[t] = static_cast<std::int32_t>(f);
                                         for (int ch = 0; ch < channels; ++ch) {
                                           double acc = 0.0;
                                           for (int k = 0; k < 3; ++k) acc += b[k] * values[face[k] * channels + ch];
                                           out.at(r, c, ch) = acc;
                                         }
                                       });
    local.degenerate += !ok;
  }

  if (options.dilate) {
    static constexpr int kDr[8] = {0, -1, 0, 1, -1, -1, 1, 1};
    static constexpr int kDc[8] = {-1, 0, 1, 0, -1, 1, -1, 1};
    Mask grown = mask;
    for (int r = 0; r < resolution; ++r) {
      for (int c = 0; c < resolution; ++c) {
        if (mask.at(r, c)) continue;
        for (int n = 0; n < 8; ++n) {
          const int rr = r + kDr[n];
          const int cc = c + kDc[n];
          if (rr < 0 || cc < 0 || rr >= resolution || cc >= resolution || !mask.at(rr, cc)) continue;
          const auto f = static_cast<std::size_t>(writer[static_cast<std::size_t>(rr) * resolution + cc]);
          const auto q = face_pixels(atlas, f, resolution);
          const double area = edge_function(q[0], q[1], q[2]);
          const Vec2 pt{c + 0.5, r + 0.5};
          const std::array<double, 3> b{edge_function(q[1], q[2], pt) / area, edge_function(q[2], q[0], pt) / area,
                                        edge_function(q[0], q[1], pt) / area};
          for (int ch = 0; ch < channels; ++ch) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += b[k] * values[atlas.faces[f][k] * channels + ch];
            out.at(r, c, ch) = acc;
          }
          grown.at(r, c) = 1;
          break;
        }
      }
    }
    mask = std::move(grown);
  }

  if (stats) *stats = local;
  if (coverage) *coverage = std::move(mask);
  return out;
}

DispMap bake_dispmap(const Points& values, const UvAtlas& atlas, int resolution, const BakeOptions& options,
                     BakeStats* stats) {
  require(values.rows() == atlas.num_vertices(), Errc::dimension_mismatch,
          "bake_dispmap: " + std::to_string(values.rows()) + " vertex values for an atlas of " +
              std::to_string(atlas.num_vertices()) + " vertices");
  DispMap map;
  map.values = bake_vertex_values(std::span<const double>(values.data(), values.size()), 3, atlas, resolution,
                                  &map.mask, options, stats);
  return map;
}

std::vector<int> bake_face_regions(const UvAtlas& atlas, int resolution) {
  require(atlas.face_region.size() == atlas.faces.size(), Errc::invalid_argument, "atlas has no face regions");
  std::vector<int> regions(static_cast<std::size_t>(resolution) * resolution, -1);
  for (std::size_t f = 0; f < atlas.faces.size(); ++f) {
    const auto p = face_pixels(atlas, f, resolution);
    rasterize_triangle(p[0], p[1], p[2], resolution, resolution, [&](int r, int c, const std::array<double, 3>&) {
      regions[static_cast<std::size_t>(r) * resolution + c] = static_cast<int>(atlas.face_region[f]);
    });
  }
  return regions;
}

void sample_bilinear(const Raster& raster, double u, double v, double* out) {
  const double x = u * raster.width - 0.5;
  const double y = v * raster.height - 0.5;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double ax = x - fx0;
  const double ay = y - fy0;
  const int j0 = std::clamp(static_cast<int>(fx0), 0, raster.width - 1);
  const int j1 = std::clamp(static_cast<int>(fx0) + 1, 0, raster.width - 1);
  const int i0 = std::clamp(static_cast<int>(fy0), 0, raster.height - 1);
  const int i1 = std::clamp(static_cast<int>(fy0) + 1, 0, raster.height - 1);
  for (int c = 0; c < raster.channels; ++c) {
    out[c] = (1.0 - ay) * ((1.0 - ax) * raster.at(i0, j0, c) + ax * raster.at(i0, j1, c)) +
             ay * ((1.0 - ax) * raster.at(i1, j0, c) + ax * raster.at(i1, j1, c));
  }
}

Points sample_dispmap(const DispMap& map, const UvAtlas& atlas, SampleStats* stats) {
  require(map.values.channels == 3, Errc::dimension_mismatch, "displacement map must have 3 channels");
  require(map.mask.height == map.values.height && map.mask.width == map.values.width, Errc::dimension_mismatch,
          "displacement map and mask differ in size");
  Points out(atlas.num_vertices(), 3);
  std::size_t clamped = 0;
  for (int v = 0; v < atlas.num_vertices(); ++v) {
    double u = atlas.vertex_uv(v, 0);
    double w = atlas.vertex_uv(v, 1);
    if (!(u >= 0.0 && u <= 1.0) || !(w >= 0.0 && w <= 1.0)) {
      ++clamped;
      u = std::isfinite(u) ? std::clamp(u, 0.0, 1.0) : 0.0;
      w = std::isfinite(w) ? std::clamp(w, 0.0, 1.0) : 0.0;
    }
    double value[3];
    sample_bilinear(map.values, u, w, value);
    out.row(v) << value[0], value[1], value[2];
  }
  if (stats) stats->clamped = clamped;
  return out;
}

// --- file I/O ---------------------------------------------------------------

void save_dispmap(const DispMap& map, const fs::path& path) {
  const int r = map.values.height;
  if (path.extension() != ".png") {
    Container c("dispmap");
    c.fields()["resolution"] = r;
    c.put_f32("values", {r, map.values.width, 3}, std::span<const double>(map.values.data));
    std::vector<std::uint32_t> m(map.mask.data.begin(), map.mask.data.end());
    c.put_u32("mask", {r, map.values.width}, m);
    c.write(path);
    return;
  }
  double lo = 0.0;
  double hi = 0.0;
  for (double x : map.values.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const double scale = hi > lo ? hi - lo : 1.0;
  PngImage img{map.values.width, r, 3, 16, {}};
  img.samples.resize(map.values.data.size());
  for (std::size_t i = 0; i < map.values.data.size(); ++i)
    img.samples[i] = static_cast<std::uint16_t>(std::lround((map.values.data[i] - lo) / scale * 65535.0));
  write_png(path, img);
  const fs::path mask_path = fs::path(path).replace_extension(".mask.png");
  write_mask_png(mask_path, map.mask);
  json side = {{"scale", scale}, {"offset", lo}, {"mask", mask_path.filename().string()}};
  write_json_file(fs::path(path).replace_extension(".json"), side);
}

DispMap load_dispmap(const fs::path& path) {
  DispMap map;
  if (path.extension() != ".png") {
    const Container c = Container::read(path);
    const auto& shape = c.shape("values");
    require(shape.size() == 3 && shape[2] == 3, Errc::format, "dispmap values must be R×R×3");
    map.values = Raster(static_cast<int>(shape[0]), static_cast<int>(shape[1]), 3);
    map.values.data = c.get_f32("values");
    const auto m = c.get_u32("mask", {shape[0], shape[1]});
    map.mask = Mask(static_cast<int>(shape[0]), static_cast<int>(shape[1]));
    for (std::size_t i = 0; i < m.size(); ++i) map.mask.data[i] = m[i] ? 1 : 0;
    return map;
  }
  const json side = read_json_file(fs::path(path).replace_extension(".json"));
  double scale = 1.0;
  double offset = 0.0;
  std::string mask_name;
  try {
    scale = side.at("scale").get<double>();
    offset = side.at("offset").get<double>();
    mask_name = side.value("mask", std::string());
  } catch (const json::exception& e) {
    fail(Errc::format, path.string() + ": bad dispmap sidecar: " + e.what());
  }
  const PngImage img = read_png(path);
  require(img.channels == 3 && img.bit_depth == 16, Errc::format, path.string() + ": dispmap PNG must be 16-bit RGB");
  map.values = Raster(img.height, img.width, 3);
  for (std::size_t i = 0; i < img.samples.size(); ++i) map.values.data[i] = img.samples[i] / 65535.0 * scale + offset;
  if (!mask_name.empty()) {
    map.mask = read_mask_png(path.parent_path() / mask_name);
    require(map.mask.height == img.height && map.mask.width == img.width, Errc::format,
            path.string() + ": mask size differs from map");
  } else {
    map.mask = Mask(img.height, img.width);
    std::fill(map.mask.data.begin(), map.mask.data.end(), 1);
  }
  for (std::size_t t = 0; t < map.values.texels(); ++t)
    if (!map.mask.data[t])
      for (int c = 0; c < 3; ++c) map.values.data[3 * t + c] = 0.0;
  return map;
}

}  // namespace sculpt
