#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "body.hpp"
#include "labeler.hpp"
#include "renderer.hpp"

namespace sculpt {

// Procedural capsule-like body: an open tube of rings standing on y = 0 with
// root, hip and shoulder joints in a chain, smooth skin weights, two shape
// directions and a cylindrical UV atlas (faces labelled upper = 0, lower = 1).
struct ToyBody {
  BodyModel model;
  UvAtlas atlas;
};

inline constexpr std::uint32_t kRegionUpper = 0;
inline constexpr std::uint32_t kRegionLower = 1;

ToyBody make_toy_body(int uv_resolution = 32);

// Fixed bank of toy-body poses (hip and shoulder rotations, no global turn).
const std::vector<Pose>& toy_pose_bank();

// Analytic per-vertex clothing offsets (meters, canonical space) for a
// clothing type: radial inflation of the upper and lower regions whose
// thickness depends on sleeve and trouser length.
Points clothing_offsets(const BodyModel& model, ClothingType type);

struct GeometryDatasetOptions {
  std::size_t count = 64;
  std::vector<ClothingType> modes{ClothingType::short_sleeve_short_trouser, ClothingType::long_sleeve_long_trouser};
  int resolution = 32;
  double noise = 0.002;  // per-vertex σ in meters
  std::uint64_t seed = 0;
};

// Writes maps/NNNNNN.png (16-bit + sidecars), body/ and the index. Modes
// are drawn uniformly from `modes`.
void synth_geometry_dataset(const ToyBody& body, const std::filesystem::path& dir,
                            const GeometryDatasetOptions& options = {});

struct TextureDatasetOptions {
  std::size_t count = 64;
  std::vector<std::string> palette{"red", "blue", "green", "yellow"};
  std::vector<ClothingType> modes{ClothingType::short_sleeve_short_trouser, ClothingType::long_sleeve_long_trouser};
  int resolution = 64;          // rendered image size
  int texture_resolution = 32;  // painted UV texture size
  std::uint64_t seed = 0;
};

// Region-constant UV texture: upper faces get `upper`, lower faces `lower`.
// Texels no face covers take the nearest covered texel's color.
Raster paint_region_texture(const UvAtlas& atlas, int resolution, const std::array<double, 3>& upper,
                            const std::array<double, 3>& lower);

// Writes images/NNNNNN.png (RGBA renders), body/, camera.json and the index.
void synth_texture_dataset(const ToyBody& body, const Camera& camera, const std::filesystem::path& dir,
                           const TextureDatasetOptions& options = {});

}  // namespace sculpt
