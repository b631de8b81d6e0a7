#include "renderer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "container.hpp"
#include "error.hpp"
#include "rasterize.hpp"

namespace sculpt {

namespace fs = std::filesystem;

void Camera::validate() const {
  require(std::isfinite(focal) && focal > 0.0, Errc::invalid_argument, "camera focal must be positive");
  require(width >= 1 && height >= 1, Errc::invalid_argument, "camera image size must be positive");
  require(rotation.allFinite() && translation.allFinite() && std::isfinite(cx) && std::isfinite(cy),
          Errc::invalid_argument, "camera has non-finite parameters");
}

Camera default_camera(int width, int height, double body_height, double distance, double fill, double yaw) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.focal = fill * height * distance / body_height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
  cam.translation = -cam.rotation * Eigen::Vector3d(0.0, 0.5 * body_height, 0.0) + Eigen::Vector3d(0.0, 0.0, -distance);
  return cam;
}

Camera load_camera(const fs::path& path) {
  const json j = read_json_file(path);
  Camera cam;
  try {
    cam.focal = j.at("focal").get<double>();
    const auto pp = j.at("principal_point").get<std::vector<double>>();
    require(pp.size() == 2, Errc::format, "principal_point must have 2 entries");
    cam.cx = pp[0];
    cam.cy = pp[1];
    const auto r = j.at("rotation").get<std::vector<double>>();
    require(r.size() == 9, Errc::format, "rotation must be 9 values, row-major");
    for (int i = 0; i < 9; ++i) cam.rotation(i / 3, i % 3) = r[i];
    const auto t = j.at("translation").get<std::vector<double>>();
    require(t.size() == 3, Errc::format, "translation must have 3 entries");
    cam.translation = {t[0], t[1], t[2]};
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
  cam.validate();
  return cam;
}

void save_camera(const Camera& cam, const fs::path& path) {
  std::vector<double> r;
  for (int i = 0; i < 9; ++i) r.push_back(cam.rotation(i / 3, i % 3));
  write_json_file(path, json{{"focal", cam.focal},
                             {"principal_point", {cam.cx, cam.cy}},
                             {"rotation", r},
                             {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}},
                             {"width", cam.width},
                             {"height", cam.height}});
}

namespace {

struct Tap {
  std::uint32_t texel[4];
  double weight[4];
};

Tap bilinear_taps(int tw, int th, double u, double v) {
  const double x = u * tw - 0.5;
  const double y = v * th - 0.5;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double ax = x - fx0;
  const double ay = y - fy0;
  const int j0 = std::clamp(static_cast<int>(fx0), 0, tw - 1);
  const int j1 = std::clamp(static_cast<int>(fx0) + 1, 0, tw - 1);
  const int i0 = std::clamp(static_cast<int>(fy0), 0, th - 1);
  const int i1 = std::clamp(static_cast<int>(fy0) + 1, 0, th - 1);
  Tap t;
  t.texel[0] = static_cast<std::uint32_t>(i0 * tw + j0);
  t.texel[1] = static_cast<std::uint32_t>(i0 * tw + j1);
  t.texel[2] = static_cast<std::uint32_t>(i1 * tw + j0);
  t.texel[3] = static_cast<std::uint32_t>(i1 * tw + j1);
  t.weight[0] = (1.0 - ay) * (1.0 - ax);
  t.weight[1] = (1.0 - ay) * ax;
  t.weight[2] = ay * (1.0 - ax);
  t.weight[3] = ay * ax;
  return t;
}

}  // namespace

RenderOutput render(const ClothedMesh& mesh, const UvAtlas& atlas, const Raster& texture, const Camera& camera,
                    const Eigen::Vector3d& background, const RenderOptions& options) {
  camera.validate();
  require(texture.height >= 1 && texture.width >= 1 && texture.channels == 3, Errc::invalid_argument,
          "texture must be a nonempty H×W×3 raster");
  require(mesh.vertices.allFinite(), Errc::invalid_argument, "render: mesh has non-finite vertices");
  require(atlas.faces.size() == mesh.faces.size(), Errc::dimension_mismatch, "render: atlas and mesh face counts differ");

  const int w = camera.width;
  const int h = camera.height;
  const auto nv = mesh.vertices.rows();
  std::vector<Vec2> screen(static_cast<std::size_t>(nv));
  std::vector<double> depth(static_cast<std::size_t>(nv));
  for (Eigen::Index v = 0; v < nv; ++v) {
    const Eigen::Vector3d pc = camera.rotation * mesh.vertices.row(v).transpose() + camera.translation;
    const double d = -pc.z();
    depth[v] = d;
    if (d >= options.near) screen[v] = {camera.cx + camera.focal * pc.x() / d, camera.cy - camera.focal * pc.y() / d};
  }

  const std::size_t npix = static_cast<std::size_t>(w) * h;
  std::vector<double> zbuf(npix, std::numeric_limits<double>::infinity());
  std::vector<std::int32_t> owner(npix, -1);
  std::vector<std::array<double, 3>> bary(npix);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    const double d0 = depth[face[0]], d1 = depth[face[1]], d2 = depth[face[2]];
    if (d0 < options.near || d1 < options.near || d2 < options.near) continue;
    rasterize_triangle(screen[face[0]], screen[face[1]], screen[face[2]], w, h,
                       [&](int r, int c, const std::array<double, 3>& b) {
                         const double s = b[0] / d0 + b[1] / d1 + b[2] / d2;
                         const double z = 1.0 / s;
                         const std::size_t p = static_cast<std::size_t>(r) * w + c;
                         // Depths within rounding of each other count as a
                         // tie, which the earlier (lower) face keeps.
                         if (z < zbuf[p] * (1.0 - 1e-12)) {
                           zbuf[p] = z;
                           owner[p] = static_cast<std::int32_t>(f);
                           bary[p] = {b[0] / d0 * z, b[1] / d1 * z, b[2] / d2 * z};
                         }
                       });
  }

  RenderOutput out;
  out.alpha = Mask(h, w);
  out.face_index = owner;
  TexGradTape& tape = out.tape;
  tape.image_width = w;
  tape.image_height = h;
  tape.texture_width = texture.width;
  tape.texture_height = texture.height;
  tape.offsets.assign(npix + 1, 0);
  for (std::size_t p = 0; p < npix; ++p) {
    tape.offsets[p] = static_cast<std::uint32_t>(tape.texels.size());
    if (owner[p] < 0) continue;
    out.alpha.data[p] = 1;
    const auto& corners = atlas.face_corner_uv[static_cast<std::size_t>(owner[p])];
    const auto& l = bary[p];
    const double u = l[0] * corners[0].x() + l[1] * corners[1].x() + l[2] * corners[2].x();
    const double v = l[0] * corners[0].y() + l[1] * corners[1].y() + l[2] * corners[2].y();
    const Tap tap = bilinear_taps(texture.width, texture.height, u, v);
    for (int k = 0; k < 4; ++k) {
      tape.texels.push_back(tap.texel[k]);
      tape.weights.push_back(tap.weight[k]);
    }
  }
  tape.offsets[npix] = static_cast<std::uint32_t>(tape.texels.size());
  out.rgb = apply_texture_tape(tape, texture, out.alpha, background);
  return out;
}

Raster apply_texture_tape(const TexGradTape& tape, const Raster& texture, const Mask& alpha,
                          const Eigen::Vector3d& background) {
  require(texture.width == tape.texture_width && texture.height == tape.texture_height && texture.channels == 3,
          Errc::dimension_mismatch, "texture does not match the render tape");
  const int w = tape.image_width;
  const int h = tape.image_height;
  Raster rgb(h, w, 3);
  for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p) {
    if (!alpha.data[p]) {
      for (int c = 0; c < 3; ++c) rgb.data[3 * p + c] = background[c];
      continue;
    }
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (auto e = tape.offsets[p]; e < tape.offsets[p + 1]; ++e)
        acc += tape.weights[e] * texture.data[3 * static_cast<std::size_t>(tape.texels[e]) + c];
      rgb.data[3 * p + c] = acc;
    }
  }
  return rgb;
}

Raster texture_backward(const Raster& output_grad, const TexGradTape& tape) {
  require(output_grad.height == tape.image_height && output_grad.width == tape.image_width &&
              output_grad.channels == 3,
          Errc::dimension_mismatch, "texture_backward: gradient does not match the render tape");
  require(tape.offsets.size() == static_cast<std::size_t>(tape.image_width) * tape.image_height + 1,
          Errc::dimension_mismatch, "texture_backward: malformed tape");
  Raster grad(tape.texture_height, tape.texture_width, 3);
  for (std::size_t p = 0; p + 1 < tape.offsets.size(); ++p)
    for (auto e = tape.offsets[p]; e < tape.offsets[p + 1]; ++e)
      for (int c = 0; c < 3; ++c)
        grad.data[3 * static_cast<std::size_t>(tape.texels[e]) + c] += tape.weights[e] * output_grad.data[3 * p + c];
  return grad;
}

std::vector<std::pair<int, int>> sample_patch_corners(const Mask& alpha, int count, int size, Rng& rng,
                                                      bool* fallback) {
  const int h = alpha.height;
  const int w = alpha.width;
  require(size >= 1 && size <= std::min(h, w), Errc::invalid_argument,
          "patch size " + std::to_string(size) + " exceeds image " + std::to_string(w) + "x" + std::to_string(h));
  require(count >= 0, Errc::invalid_argument, "patch count must be nonnegative");
  std::vector<int> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      sat[(r + 1) * (w + 1) + c + 1] =
          alpha.at(r, c) + sat[r * (w + 1) + c + 1] + sat[(r + 1) * (w + 1) + c] - sat[r * (w + 1) + c];
  std::vector<std::pair<int, int>> candidates;
  std::vector<std::pair<int, int>> all;
  for (int r = 0; r + size <= h; ++r)
    for (int c = 0; c + size <= w; ++c) {
      const int fg = sat[(r + size) * (w + 1) + c + size] - sat[r * (w + 1) + c + size] -
                     sat[(r + size) * (w + 1) + c] + sat[r * (w + 1) + c];
      all.emplace_back(r, c);
      if (2 * fg >= size * size) candidates.emplace_back(r, c);
    }
  const bool fb = candidates.empty();
  if (fallback) *fallback = fb;
  const auto& pool = fb ? all : candidates;
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < count; ++k) out.push_back(pool[rng.below(pool.size())]);
  return out;
}

PatchBatch extract_patches(const Raster& image, const Mask& alpha, int count, int size, Rng& rng) {
  require(image.channels == 3 && image.height == alpha.height && image.width == alpha.width, Errc::dimension_mismatch,
          "extract_patches: image and alpha differ in size");
  PatchBatch batch;
  batch.size = size;
  batch.corners = sample_patch_corners(alpha, count, size, rng, &batch.fallback);
  batch.patches = Raster(count * size, size, 3);
  for (int k = 0; k < count; ++k) {
    const auto [r0, c0] = batch.corners[k];
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        for (int ch = 0; ch < 3; ++ch) batch.patches.at(k * size + r, c, ch) = image.at(r0 + r, c0 + c, ch);
  }
  return batch;
}

}  // namespace sculpt
