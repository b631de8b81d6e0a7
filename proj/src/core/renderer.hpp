#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "body.hpp"
#include "raster.hpp"
#include "rng.hpp"

namespace sculpt {

// Pinhole camera. Camera space is right-handed, looks down −z, y up; image
// rows grow downward. p_cam = rotation · p_world + translation.
struct Camera {
  double focal = 1.0;  // pixels
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 1;
  int height = 1;

  void validate() const;
};

// Frontal camera for a body of `body_height` meters standing on y = 0 at the
// origin: the body fills `fill` of the image height from `distance` meters,
// rotated by `yaw` radians about the vertical axis.
Camera default_camera(int width, int height, double body_height = 1.8, double distance = 2.5, double fill = 0.8,
                      double yaw = 0.0);

Camera load_camera(const std::filesystem::path& path);
void save_camera(const Camera& camera, const std::filesystem::path& path);

// Sparse record of how each covered pixel reads the texture: pixel p's color
// is Σ weight · texture[texel] over entries [offsets[p], offsets[p+1]).
struct TexGradTape {
  int image_width = 0;
  int image_height = 0;
  int texture_width = 0;
  int texture_height = 0;
  std::vector<std::uint32_t> offsets;  // H·W + 1
  std::vector<std::uint32_t> texels;   // texel index i·W_tex + j
  std::vector<double> weights;
};

struct RenderOutput {
  Raster rgb;    // H×W×3
  Mask alpha;    // coverage
  TexGradTape tape;
  std::vector<std::int32_t> face_index;  // winning face per pixel, −1 if none
};

struct RenderOptions {
  double near = 1e-3;  // triangles with a vertex closer than this are skipped
};

// Z-buffered, perspective-correct, unlit rasterization: color is the
// bilinear texture lookup at the interpolated face-corner UV. Depth ties go
// to the lower face index.
RenderOutput render(const ClothedMesh& mesh, const UvAtlas& atlas, const Raster& texture, const Camera& camera,
                    const Eigen::Vector3d& background = Eigen::Vector3d::Ones(), const RenderOptions& options = {});

// Re-applies a tape to a texture (the texture-linear part of render).
Raster apply_texture_tape(const TexGradTape& tape, const Raster& texture, const Mask& alpha,
                          const Eigen::Vector3d& background);

// Adjoint of the texture-to-pixel map: scatters image gradients to texels.
Raster texture_backward(const Raster& output_grad, const TexGradTape& tape);

struct PatchBatch {
  int size = 0;
  Raster patches;  // (count·size)×size×3, patch k occupies rows [k·size, (k+1)·size)
  std::vector<std::pair<int, int>> corners;  // (row, col) top-left
  bool fallback = false;                     // no position met the foreground rule
};

// Draws `count` top-left corners uniformly among positions whose
// size×size window is at least half foreground.
std::vector<std::pair<int, int>> sample_patch_corners(const Mask& alpha, int count, int size, Rng& rng,
                                                      bool* fallback = nullptr);
PatchBatch extract_patches(const Raster& image, const Mask& alpha, int count, int size, Rng& rng);

}  // namespace sculpt
