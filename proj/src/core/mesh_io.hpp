#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "body.hpp"

namespace sculpt {

struct ObjMesh {
  Points vertices;
  Faces faces;
  // Per-corner UVs in raster convention (v = 0 at texture row 0); present
  // when every face references a `vt`.
  std::vector<std::array<Eigen::Vector2d, 3>> corner_uv;
};

// Reads `v`, `vt` and triangular `f` records (v, v/vt, v/vt/vn, v//vn).
ObjMesh read_obj(const std::filesystem::path& path);

// Writes `v`, `vt` and `f v/vt` with one `vt` per face corner. OBJ's vt
// origin is the image bottom, so v is flipped on export and import. When
// `texture_png` is non-empty an MTL next to the OBJ references it.
void write_obj(const std::filesystem::path& path, const Points& vertices, const Faces& faces,
               const std::vector<std::array<Eigen::Vector2d, 3>>& corner_uv, const std::string& texture_png = {});

}  // namespace sculpt
