#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "raster.hpp"

namespace sculpt {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using UvCoords = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Face = std::array<std::uint32_t, 3>;
using Faces = std::vector<Face>;

// Per-vertex UVs for sampling plus seam-aware per-corner UVs for baking.
// Texel (i, j) of an R×R raster is centered at ((j + 0.5) / R, (i + 0.5) / R).
struct UvAtlas {
  UvCoords vertex_uv;                       // N×2 in [0,1]
  std::vector<std::array<Eigen::Vector2d, 3>> face_corner_uv;  // F
  Faces faces;                              // vertex index of each corner
  std::vector<std::uint32_t> face_region;   // optional semantic label per face
  int resolution = 256;

  int num_vertices() const { return static_cast<int>(vertex_uv.rows()); }
  int num_faces() const { return static_cast<int>(faces.size()); }
  // Throws Errc::format on out-of-range UVs or corner indices.
  void validate() const;
};

// Builds an atlas whose corner UVs equal the per-vertex UVs (no seams).
UvAtlas atlas_from_vertex_uv(const UvCoords& uv, const Faces& faces, int resolution = 256);

UvAtlas load_atlas(const std::filesystem::path& path);
void save_atlas(const UvAtlas& atlas, const std::filesystem::path& dir);

// Canonical-space offsets (meters) on an R×R×3 raster; zero outside `mask`.
struct DispMap {
  Raster values;
  Mask mask;

  int resolution() const { return values.height; }
  static DispMap zeros(const Mask& mask);
};

struct MaskStats {
  std::size_t degenerate = 0;
};

// Texel is set iff its center lies inside at least one UV triangle
// (top-left rule on shared edges).
Mask build_mask(const UvAtlas& atlas, int resolution, MaskStats* stats = nullptr);

struct BakeOptions {
  // Grows the mask by one texel ring, filling the new texels by linear
  // extrapolation of a neighbouring texel's triangle. Keeps bilinear taps of
  // chart-border vertices on-mask.
  bool dilate = false;
};

struct BakeStats {
  std::size_t overlaps = 0;    // texels written by more than one face
  std::size_t degenerate = 0;  // zero-area UV triangles skipped
};

// Rasterizes every UV triangle in face order; texel value is the barycentric
// blend of the corner vertices' values. Later faces overwrite earlier ones.
DispMap bake_dispmap(const Points& values, const UvAtlas& atlas, int resolution, const BakeOptions& options = {},
                     BakeStats* stats = nullptr);

// Same rule for an arbitrary per-vertex channel count (values: N×C row-major).
Raster bake_vertex_values(std::span<const double> values, int channels, const UvAtlas& atlas, int resolution,
                          Mask* coverage = nullptr, const BakeOptions& options = {}, BakeStats* stats = nullptr);

// Writes each face's region label into the texels it covers (value -1 where
// nothing is covered). Needs atlas.face_region.
std::vector<int> bake_face_regions(const UvAtlas& atlas, int resolution);

struct SampleStats {
  std::size_t clamped = 0;  // vertex UVs outside [0,1]
};

// Bilinear lookup at every vertex UV. Taps beyond the raster border clamp to
// the edge texel; off-mask texels hold zero and contribute zero.
Points sample_dispmap(const DispMap& map, const UvAtlas& atlas, SampleStats* stats = nullptr);

// Bilinear lookup of one raster at (u, v), clamp-to-edge.
void sample_bilinear(const Raster& raster, double u, double v, double* out);

// File I/O. `.png` paths use a 16-bit RGB PNG with a sidecar `<stem>.json`
// holding {scale, offset, mask} (meters = png / 65535 * scale + offset) and an
// 8-bit mask PNG. Any other path is a raw `.f32` container directory.
void save_dispmap(const DispMap& map, const std::filesystem::path& path);
DispMap load_dispmap(const std::filesystem::path& path);

}  // namespace sculpt
