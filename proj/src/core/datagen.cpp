#include "datagen.hpp"

#include <cmath>
#include <deque>

#include "dataset.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace sculpt {

namespace fs = std::filesystem;

namespace {

constexpr int kRings = 18;
constexpr int kSegments = 12;
constexpr double kHeight = 1.8;
constexpr double kUvMargin = 0.0625;
constexpr double kHipY = 0.95;
constexpr double kPi = 3.14159265358979323846;
const double kJointY[3] = {0.5, kHipY, 1.4};

double ring_y(int r) { return kHeight * r / (kRings - 1); }
double ring_radius(int r) { return 0.22 + 0.1 * std::sin(kPi * r / (kRings - 1)); }
int vid(int r, int s) { return r * kSegments + (s % kSegments); }

// Smooth step across the hip: 1 well above it, 0 well below.
double upper_weight(double y) { return 1.0 / (1.0 + std::exp(-(y - kHipY) / 0.04)); }

}  // namespace

ToyBody make_toy_body(int uv_resolution) {
  const int n = kRings * kSegments;
  BodyModel m;
  m.template_vertices.resize(n, 3);
  m.uv_coords.resize(n, 2);
  for (int r = 0; r < kRings; ++r)
    for (int s = 0; s < kSegments; ++s) {
      const double phi = 2.0 * kPi * s / kSegments;
      const double rad = ring_radius(r);
      m.template_vertices.row(vid(r, s)) << rad * std::sin(phi), ring_y(r), rad * std::cos(phi);
      m.uv_coords.row(vid(r, s)) << static_cast<double>(s) / kSegments,
          kUvMargin + (1.0 - 2.0 * kUvMargin) * r / (kRings - 1);
    }

  auto uv = [&](int r, int s) {
    return Eigen::Vector2d(static_cast<double>(s) / kSegments,
                           kUvMargin + (1.0 - 2.0 * kUvMargin) * r / (kRings - 1));
  };
  for (int r = 0; r + 1 < kRings; ++r) {
    const std::uint32_t region = 0.5 * (ring_y(r) + ring_y(r + 1)) > kHipY ? kRegionUpper : kRegionLower;
    for (int s = 0; s < kSegments; ++s) {
      const auto a = static_cast<std::uint32_t>(vid(r, s));
      const auto b = static_cast<std::uint32_t>(vid(r, s + 1));
      const auto c = static_cast<std::uint32_t>(vid(r + 1, s + 1));
      const auto d = static_cast<std::uint32_t>(vid(r + 1, s));
      m.faces.push_back({a, b, c});
      m.face_uv.push_back({uv(r, s), uv(r, s + 1), uv(r + 1, s + 1)});
      m.faces.push_back({a, c, d});
      m.face_uv.push_back({uv(r, s), uv(r + 1, s + 1), uv(r + 1, s)});
      m.face_regions.push_back(region);
      m.face_regions.push_back(region);
    }
  }

  // Shape directions: radial girth and overall height.
  m.shape_dirs = Eigen::MatrixXd::Zero(3 * n, 2);
  for (int v = 0; v < n; ++v) {
    const Eigen::Vector3d p = m.template_vertices.row(v);
    m.shape_dirs(3 * v + 0, 0) = 0.1 * p.x();
    m.shape_dirs(3 * v + 2, 0) = 0.1 * p.z();
    m.shape_dirs(3 * v + 1, 1) = 0.05 * p.y();
  }

  // Joints: chain root → hip → shoulder, each regressed from its nearest ring.
  m.parents = {kNoParent, 0, 1};
  m.joint_regressor = Eigen::MatrixXd::Zero(3, n);
  for (int k = 0; k < 3; ++k) {
    const int ring = static_cast<int>(std::lround(kJointY[k] / kHeight * (kRings - 1)));
    for (int s = 0; s < kSegments; ++s) m.joint_regressor(k, vid(ring, s)) = 1.0 / kSegments;
  }
  // Ring-average joint heights differ slightly from kJointY; weights use the regressed ones.
  const Eigen::MatrixXd jy = m.joint_regressor * m.template_vertices.col(1);

  m.skin_weights.resize(n, 3);
  for (int v = 0; v < n; ++v) {
    const double y = m.template_vertices(v, 1);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = (y - jy(k)) / 0.3;
      m.skin_weights(v, k) = std::exp(-0.5 * d * d);
      total += m.skin_weights(v, k);
    }
    m.skin_weights.row(v) /= total;
  }

  // Small smooth pose correctives: 9 features per articulated joint.
  m.pose_dirs = Eigen::MatrixXd::Zero(3 * n, 18);
  for (int v = 0; v < n; ++v) {
    const Eigen::Vector3d p = m.template_vertices.row(v);
    const double radial = std::hypot(p.x(), p.z());
    for (int j = 0; j < 2; ++j) {
      const double near = std::exp(-0.5 * std::pow((p.y() - jy(j + 1)) / 0.15, 2));
      for (int f = 0; f < 9; ++f) {
        const double amp = 0.004 * near * std::cos(0.7 * f + j);
        m.pose_dirs(3 * v + 0, 9 * j + f) = amp * p.x() / radial;
        m.pose_dirs(3 * v + 2, 9 * j + f) = amp * p.z() / radial;
      }
    }
  }
  m.validate();
  ToyBody out{std::move(m), {}};
  out.atlas = out.model.atlas(uv_resolution);
  return out;
}

const std::vector<Pose>& toy_pose_bank() {
  static const std::vector<Pose> bank = [] {
    const double raw[][6] = {
        {0.0, 0.0, 0.0, 0.0, 0.0, 0.0},     {0.3, 0.0, 0.0, -0.2, 0.0, 0.0},  {0.0, 0.0, 0.25, 0.0, 0.0, -0.25},
        {-0.2, 0.1, 0.0, 0.15, 0.0, 0.1},   {0.0, 0.4, 0.0, 0.0, -0.3, 0.0},  {0.15, 0.0, -0.2, 0.0, 0.2, 0.15},
        {0.1, -0.3, 0.1, -0.1, 0.2, -0.1},  {-0.25, 0.0, 0.0, 0.3, 0.0, 0.0},
    };
    std::vector<Pose> out;
    for (const auto& row : raw) {
      Pose p;
      for (int i = 0; i < 6; ++i) p.body[i] = row[i];
      out.push_back(p);
    }
    return out;
  }();
  return bank;
}

Points clothing_offsets(const BodyModel& model, ClothingType type) {
  double upper = 0.01;
  double lower = 0.01;
  switch (type) {
    case ClothingType::short_sleeve_short_trouser: upper = 0.01, lower = 0.01; break;
    case ClothingType::short_sleeve_long_trouser: upper = 0.01, lower = 0.03; break;
    case ClothingType::long_sleeve_long_trouser: upper = 0.03, lower = 0.03; break;
    case ClothingType::long_sleeve_short_trouser: upper = 0.03, lower = 0.01; break;
    case ClothingType::shirt_long_trouser: upper = 0.02, lower = 0.03; break;
    case ClothingType::shirt_short_trouser: upper = 0.02, lower = 0.01; break;
  }
  const int n = model.num_vertices();
  Points out(n, 3);
  for (int v = 0; v < n; ++v) {
    const Eigen::Vector3d p = model.template_vertices.row(v);
    const double radial = std::hypot(p.x(), p.z());
    const double w = upper_weight(p.y());
    const double amp = w * upper + (1.0 - w) * lower;
    out.row(v) << (radial > 0.0 ? amp * p.x() / radial : 0.0), 0.0, (radial > 0.0 ? amp * p.z() / radial : 0.0);
  }
  return out;
}

void synth_geometry_dataset(const ToyBody& body, const fs::path& dir, const GeometryDatasetOptions& opt) {
  require(opt.count >= 1, Errc::invalid_argument, "geometry dataset count must be at least 1");
  require(!opt.modes.empty() && opt.modes.size() <= kNumClothingTypes, Errc::invalid_argument,
          "geometry dataset needs 1 to 6 clothing modes");
  require(opt.resolution >= 4, Errc::invalid_argument, "geometry dataset resolution must be at least 4");
  fs::create_directories(dir / "maps");
  save_body_model(body.model, dir / "body");
  const auto& bank = toy_pose_bank();

  // Draw every sample's choices up front so the worker schedule cannot matter.
  struct Plan {
    ClothingType mode;
    std::size_t pose;
    std::uint64_t noise_seed;
  };
  Rng rng(opt.seed);
  std::vector<Plan> plans(opt.count);
  for (auto& p : plans) {
    p.mode = opt.modes[rng.below(opt.modes.size())];
    p.pose = rng.below(bank.size());
    p.noise_seed = rng.next_u64();
  }

  std::vector<json> records(opt.count);
  parallel_for(opt.count, [&](std::size_t i) {
    const Plan& p = plans[i];
    Points offsets = clothing_offsets(body.model, p.mode);
    Rng noise(p.noise_seed);
    for (Eigen::Index v = 0; v < offsets.rows(); ++v)
      for (int c = 0; c < 3; ++c) offsets(v, c) += opt.noise * noise.normal();
    const DispMap map = bake_dispmap(offsets, body.atlas, opt.resolution, BakeOptions{true});
    char name[32];
    std::snprintf(name, sizeof name, "maps/%06zu.png", i);
    save_dispmap(map, dir / name);
    GeometryRecord rec;
    rec.dispmap = name;
    rec.theta = bank[p.pose].body;
    rec.c_g = encode_clothing_type(p.mode);
    records[i] = geometry_record_to_json(rec);
  });
  DatasetInfo info;
  info.kind = "geometry";
  info.resolution = opt.resolution;
  json modes = json::array();
  for (auto m : opt.modes) modes.push_back(static_cast<int>(m));
  info.extra = {{"generator", "synthetic"}, {"modes", modes}, {"noise", opt.noise}, {"seed", opt.seed}};
  write_dataset(dir, info, records);
}

Raster paint_region_texture(const UvAtlas& atlas, int resolution, const std::array<double, 3>& upper,
                            const std::array<double, 3>& lower) {
  require(atlas.face_region.size() == atlas.faces.size(), Errc::invalid_argument,
          "painting a region texture needs face regions");
  const auto regions = bake_face_regions(atlas, resolution);
  Raster tex(resolution, resolution, 3);
  std::vector<int> label = regions;
  // Breadth-first fill of uncovered texels from their nearest covered one.
  std::deque<std::size_t> queue;
  for (std::size_t t = 0; t < label.size(); ++t)
    if (label[t] >= 0) queue.push_back(t);
  while (!queue.empty()) {
    const std::size_t t = queue.front();
    queue.pop_front();
    const int i = static_cast<int>(t) / resolution;
    const int j = static_cast<int>(t) % resolution;
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int ni = i + di[k];
      const int nj = j + dj[k];
      if (ni < 0 || nj < 0 || ni >= resolution || nj >= resolution) continue;
      const std::size_t u = static_cast<std::size_t>(ni) * resolution + nj;
      if (label[u] >= 0) continue;
      label[u] = label[t];
      queue.push_back(u);
    }
  }
  for (std::size_t t = 0; t < label.size(); ++t) {
    const auto& c = label[t] == static_cast<int>(kRegionLower) ? lower : upper;
    for (int ch = 0; ch < 3; ++ch) tex.data[3 * t + ch] = c[ch];
  }
  return tex;
}

void synth_texture_dataset(const ToyBody& body, const Camera& camera, const fs::path& dir,
                           const TextureDatasetOptions& opt) {
  require(opt.count >= 1, Errc::invalid_argument, "texture dataset count must be at least 1");
  require(!opt.palette.empty(), Errc::invalid_argument, "texture dataset palette must not be empty");
  require(!opt.modes.empty() && opt.modes.size() <= kNumClothingTypes, Errc::invalid_argument,
          "texture dataset needs 1 to 6 clothing modes");
  require(camera.width == opt.resolution && camera.height == opt.resolution, Errc::invalid_argument,
          "camera size must match the dataset resolution");
  for (const auto& name : opt.palette) lookup_color(name);
  fs::create_directories(dir / "images");
  save_body_model(body.model, dir / "body");
  save_camera(camera, dir / "camera.json");
  const auto& bank = toy_pose_bank();

  struct Plan {
    std::string upper, lower;
    ClothingType mode;
    std::size_t pose;
  };
  Rng rng(opt.seed);
  std::vector<Plan> plans(opt.count);
  for (auto& p : plans) {
    p.upper = opt.palette[rng.below(opt.palette.size())];
    p.lower = opt.palette[rng.below(opt.palette.size())];
    p.mode = opt.modes[rng.below(opt.modes.size())];
    p.pose = rng.below(bank.size());
  }

  const BodyShape shape = BodyShape::zeros(body.model.num_betas());
  std::vector<json> records(opt.count);
  parallel_for(opt.count, [&](std::size_t i) {
    const Plan& p = plans[i];
    const Raster tex =
        paint_region_texture(body.atlas, opt.texture_resolution, lookup_color(p.upper).rgb, lookup_color(p.lower).rgb);
    const Points canonical =
        clothed_template(body.model, shape, bank[p.pose], clothing_offsets(body.model, p.mode));
    const ClothedMesh mesh = lbs(body.model, canonical, shape, bank[p.pose]);
    const RenderOutput img = render(mesh, body.atlas, tex, camera);
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.png", i);
    write_png8_rgba(dir / name, img.rgb, img.alpha);
    TextureRecord rec;
    rec.image = name;
    rec.c_g = encode_clothing_type(p.mode);
    rec.c_t = mock_text_encoder(build_color_prompt(p.upper, p.lower).text);
    rec.theta = bank[p.pose].body;
    records[i] = texture_record_to_json(rec);
  });
  DatasetInfo info;
  info.kind = "texture";
  info.resolution = opt.resolution;
  info.camera = "camera.json";
  json modes = json::array();
  for (auto m : opt.modes) modes.push_back(static_cast<int>(m));
  info.extra = {{"generator", "synthetic"},
                {"palette", opt.palette},
                {"modes", modes},
                {"texture_resolution", opt.texture_resolution},
                {"seed", opt.seed}};
  write_dataset(dir, info, records);
}

}  // namespace sculpt
