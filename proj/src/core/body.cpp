#include "body.hpp"

#include <cmath>
#include <string>

#include "container.hpp"
#include "error.hpp"

namespace sculpt {

namespace fs = std::filesystem;

void BodyModel::validate() const {
  const Eigen::Index n = template_vertices.rows();
  const Eigen::Index k = static_cast<Eigen::Index>(parents.size());
  require(n > 0, Errc::format, "body model has no vertices");
  require(k >= 1, Errc::format, "body model has no joints");
  require(shape_dirs.rows() == 3 * n, Errc::format, "shape_dirs must have 3N rows");
  require(pose_dirs.rows() == 3 * n && pose_dirs.cols() == 9 * (k - 1), Errc::format,
          "pose_dirs must be 3N×9(K-1)");
  require(joint_regressor.rows() == k && joint_regressor.cols() == n, Errc::format, "joint_regressor must be K×N");
  require(skin_weights.rows() == n && skin_weights.cols() == k, Errc::format, "skin_weights must be N×K");
  require(k - 1 <= kPoseDim / 3, Errc::format, "more articulated joints than the 69-d pose holds");
  require(parents[0] == kNoParent, Errc::format, "kinematic tree: joint 0 must be the root");
  for (Eigen::Index j = 1; j < k; ++j)
    require(parents[j] < static_cast<std::uint32_t>(j), Errc::format,
            "kinematic tree: joint " + std::to_string(j) + " must have an earlier parent");
  for (Eigen::Index v = 0; v < n; ++v) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      require(skin_weights(v, j) >= 0.0, Errc::format, "negative skin weight at vertex " + std::to_string(v));
      sum += skin_weights(v, j);
    }
    require(std::abs(sum - 1.0) <= 1e-6, Errc::format,
            "skin weights of vertex " + std::to_string(v) + " sum to " + std::to_string(sum));
  }
  for (const Face& f : faces)
    for (auto idx : f) require(idx < static_cast<std::uint32_t>(n), Errc::format, "face indexes a missing vertex");
  require(uv_coords.rows() == 0 || uv_coords.rows() == n, Errc::format, "uv_coords must be N×2");
  require(face_uv.empty() || face_uv.size() == faces.size(), Errc::format, "face_uv must be F×3×2");
  require(face_regions.empty() || face_regions.size() == faces.size(), Errc::format, "face_regions must be F");
}

UvAtlas BodyModel::atlas(int resolution) const {
  require(uv_coords.rows() == num_vertices(), Errc::format, "body model carries no UV coordinates");
  UvAtlas a = atlas_from_vertex_uv(uv_coords, faces, resolution);
  if (!face_uv.empty()) a.face_corner_uv = face_uv;
  a.face_region = face_regions;
  a.validate();
  return a;
}

namespace {

Eigen::MatrixXd matrix_from(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
  return m;
}

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
  return out;
}

}  // namespace

BodyModel load_body_model(const fs::path& path) {
  const Container c = Container::read(path);
  BodyModel m;
  std::int64_t n = 0, k = 0, s = 0;
  try {
    n = c.fields().at("N").get<std::int64_t>();
    k = c.fields().at("K_total").get<std::int64_t>();
    s = c.fields().at("S").get<std::int64_t>();
  } catch (const json::exception& e) {
    fail(Errc::format, path.string() + ": manifest lacks N/K_total/S: " + e.what());
  }
  require(n > 0 && k >= 1 && s >= 0, Errc::format, "manifest: invalid N/K_total/S");
  const auto tv = c.get_f32("template_vertices", {n, 3});
  m.template_vertices = Points(n, 3);
  for (std::int64_t i = 0; i < n * 3; ++i) m.template_vertices.data()[i] = tv[i];

  const auto& fshape = c.shape("faces");
  require(fshape.size() == 2 && fshape[1] == 3, Errc::format, "faces must be F×3");
  const auto f = c.get_u32("faces");
  m.faces.resize(fshape[0]);
  for (std::int64_t i = 0; i < fshape[0]; ++i) m.faces[i] = {f[3 * i], f[3 * i + 1], f[3 * i + 2]};

  m.shape_dirs = matrix_from(c.get_f32("shape_dirs", {n, 3, s}), 3 * n, s);
  m.pose_dirs = matrix_from(c.get_f32("pose_dirs", {n, 3, 9 * (k - 1)}), 3 * n, 9 * (k - 1));
  m.joint_regressor = matrix_from(c.get_f32("joint_regressor", {k, n}), k, n);
  m.skin_weights = matrix_from(c.get_f32("skin_weights", {n, k}), n, k);
  m.parents = c.get_u32("parents", {k});
  // Weights are stored at f32; restore the exact row sums.
  for (std::int64_t v = 0; v < n; ++v) {
    const double sum = m.skin_weights.row(v).sum();
    if (sum > 0.0 && std::abs(sum - 1.0) < 1e-5) m.skin_weights.row(v) /= sum;
  }
  if (c.has("uv_coords")) {
    const auto uv = c.get_f32("uv_coords", {n, 2});
    m.uv_coords = UvCoords(n, 2);
    for (std::int64_t i = 0; i < n * 2; ++i) m.uv_coords.data()[i] = uv[i];
  }
  if (c.has("face_uv")) {
    const auto fu = c.get_f32("face_uv", {fshape[0], 3, 2});
    m.face_uv.resize(fshape[0]);
    for (std::int64_t i = 0; i < fshape[0]; ++i)
      for (int j = 0; j < 3; ++j) m.face_uv[i][j] = {fu[6 * i + 2 * j], fu[6 * i + 2 * j + 1]};
  }
  if (c.has("face_regions")) m.face_regions = c.get_u32("face_regions", {fshape[0]});
  m.validate();
  return m;
}

void save_body_model(const BodyModel& m, const fs::path& dir) {
  m.validate();
  const std::int64_t n = m.num_vertices();
  const std::int64_t k = m.num_joints();
  const std::int64_t s = m.num_betas();
  const auto f = static_cast<std::int64_t>(m.faces.size());
  Container c("body_model");
  c.fields()["N"] = n;
  c.fields()["K_total"] = k;
  c.fields()["S"] = s;
  c.put_f32("template_vertices", {n, 3}, std::span<const double>(m.template_vertices.data(), n * 3));
  std::vector<std::uint32_t> faces;
  for (const Face& fc : m.faces) faces.insert(faces.end(), fc.begin(), fc.end());
  c.put_u32("faces", {f, 3}, faces);
  c.put_f32("shape_dirs", {n, 3, s}, row_major(m.shape_dirs));
  c.put_f32("pose_dirs", {n, 3, 9 * (k - 1)}, row_major(m.pose_dirs));
  c.put_f32("joint_regressor", {k, n}, row_major(m.joint_regressor));
  c.put_f32("skin_weights", {n, k}, row_major(m.skin_weights));
  c.put_u32("parents", {k}, m.parents);
  if (m.uv_coords.rows() == n) c.put_f32("uv_coords", {n, 2}, std::span<const double>(m.uv_coords.data(), n * 2));
  if (!m.face_uv.empty()) {
    std::vector<double> fu;
    for (const auto& corners : m.face_uv)
      for (const auto& uv : corners) {
        fu.push_back(uv.x());
        fu.push_back(uv.y());
      }
    c.put_f32("face_uv", {f, 3, 2}, fu);
  }
  if (!m.face_regions.empty()) c.put_u32("face_regions", {f}, m.face_regions);
  c.write(dir);
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  require(w.allFinite(), Errc::invalid_argument, "rodrigues: non-finite axis-angle");
  const double theta = w.norm();
  Eigen::Matrix3d k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  if (theta < 1e-8) {
    // Second-order Taylor expansion of exp([w]x).
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::VectorXd pose_feature(const Pose& pose, int articulated) {
  require(articulated >= 0 && articulated <= kPoseDim / 3, Errc::invalid_argument,
          "pose_feature: articulated joint count out of range");
  Eigen::VectorXd f(9 * articulated);
  for (int j = 0; j < articulated; ++j) {
    const Eigen::Matrix3d r = rodrigues(pose.joint(j)) - Eigen::Matrix3d::Identity();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) f(9 * j + 3 * a + b) = r(a, b);
  }
  return f;
}

void check_pose(const BodyModel& model, const Pose& pose) {
  for (double x : pose.body) require(std::isfinite(x), Errc::invalid_argument, "pose: non-finite body_pose value");
  require(pose.root_orient.allFinite() && pose.translation.allFinite(), Errc::invalid_argument,
          "pose: non-finite root orientation or translation");
  for (int i = 3 * model.num_articulated(); i < kPoseDim; ++i)
    require(pose.body[i] == 0.0, Errc::invalid_argument,
            "pose: entry " + std::to_string(i) + " is beyond the model's " + std::to_string(model.num_articulated()) +
                " articulated joints");
}

Points pose_blendshape_from_feature(const BodyModel& model, const Eigen::VectorXd& feature) {
  require(feature.size() == model.pose_dirs.cols(), Errc::dimension_mismatch,
          "pose_blendshape: feature has " + std::to_string(feature.size()) + " entries, basis expects " +
              std::to_string(model.pose_dirs.cols()));
  const Eigen::VectorXd flat = model.pose_dirs * feature;
  Points out(model.num_vertices(), 3);
  for (int v = 0; v < model.num_vertices(); ++v) out.row(v) << flat(3 * v), flat(3 * v + 1), flat(3 * v + 2);
  return out;
}

Points pose_blendshape(const BodyModel& model, const Pose& pose) {
  check_pose(model, pose);
  return pose_blendshape_from_feature(model, pose_feature(pose, model.num_articulated()));
}

Points shaped_template(const BodyModel& model, const BodyShape& shape) {
  require(shape.betas.size() == model.num_betas(), Errc::dimension_mismatch,
          "shaped_template: " + std::to_string(shape.betas.size()) + " betas for a model with " +
              std::to_string(model.num_betas()));
  const Eigen::VectorXd flat = model.shape_dirs * shape.betas;
  Points out = model.template_vertices;
  for (int v = 0; v < model.num_vertices(); ++v)
    for (int c = 0; c < 3; ++c) out(v, c) += flat(3 * v + c);
  return out;
}

Points joint_locations(const BodyModel& model, const Points& shaped) {
  require(shaped.rows() == model.num_vertices(), Errc::dimension_mismatch, "joint_locations: vertex count mismatch");
  return model.joint_regressor * shaped;
}

Points clothed_template(const BodyModel& model, const BodyShape& shape, const Pose& pose, const Points& offsets) {
  require(offsets.rows() == model.num_vertices(), Errc::dimension_mismatch,
          "clothed_template: " + std::to_string(offsets.rows()) + " offsets for " +
              std::to_string(model.num_vertices()) + " vertices");
  return shaped_template(model, shape) + pose_blendshape(model, pose) + offsets;
}

std::vector<Eigen::Matrix4d> skinning_transforms(const BodyModel& model, const Points& joints, const Pose& pose) {
  check_pose(model, pose);
  const int k = model.num_joints();
  require(joints.rows() == k, Errc::dimension_mismatch, "skinning_transforms: joint count mismatch");
  std::vector<Eigen::Matrix4d> world(k);
  for (int j = 0; j < k; ++j) {
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    local.topLeftCorner<3, 3>() = rodrigues(j == 0 ? pose.root_orient : pose.joint(j - 1));
    if (j == 0) {
      local.topRightCorner<3, 1>() = joints.row(0).transpose() + pose.translation;
      world[0] = local;
    } else {
      const auto p = model.parents[j];
      if (p >= static_cast<std::uint32_t>(j)) fail(Errc::format, "kinematic tree is not parent-before-child");
      local.topRightCorner<3, 1>() = (joints.row(j) - joints.row(p)).transpose();
      world[j] = world[p] * local;
    }
  }
  for (int j = 0; j < k; ++j) {
    const Eigen::Vector3d rest = joints.row(j).transpose();
    world[j].topRightCorner<3, 1>() -= world[j].topLeftCorner<3, 3>() * rest;
  }
  return world;
}

namespace {

std::vector<Eigen::Matrix4d> blend(const BodyModel& model, const std::vector<Eigen::Matrix4d>& a) {
  const int n = model.num_vertices();
  std::vector<Eigen::Matrix4d> out(n);
  for (int v = 0; v < n; ++v) {
    Eigen::Matrix4d t = Eigen::Matrix4d::Zero();
    for (int j = 0; j < model.num_joints(); ++j) {
      const double w = model.skin_weights(v, j);
      if (w != 0.0) t += w * a[j];
    }
    out[v] = t;
  }
  return out;
}

}  // namespace

std::vector<Eigen::Matrix4d> vertex_transforms(const BodyModel& model, const BodyShape& shape, const Pose& pose) {
  const Points joints = joint_locations(model, shaped_template(model, shape));
  return blend(model, skinning_transforms(model, joints, pose));
}

ClothedMesh lbs(const BodyModel& model, const Points& canonical, const BodyShape& shape, const Pose& pose) {
  require(canonical.rows() == model.num_vertices(), Errc::dimension_mismatch, "lbs: vertex count mismatch");
  require(canonical.allFinite(), Errc::invalid_argument, "lbs: non-finite canonical vertices");
  const auto t = vertex_transforms(model, shape, pose);
  ClothedMesh mesh{Points(model.num_vertices(), 3), model.faces};
  for (int v = 0; v < model.num_vertices(); ++v) {
    const Eigen::Vector3d p = canonical.row(v).transpose();
    mesh.vertices.row(v) = (t[v].topLeftCorner<3, 3>() * p + t[v].topRightCorner<3, 1>()).transpose();
  }
  return mesh;
}

ClothedMesh pose_clothed_body(const BodyModel& model, const BodyShape& shape, const Pose& pose, const DispMap& map,
                              const UvAtlas& atlas) {
  require(atlas.num_vertices() == model.num_vertices(), Errc::dimension_mismatch,
          "atlas topology does not match the body model");
  const Points offsets = sample_dispmap(map, atlas);
  return lbs(model, clothed_template(model, shape, pose, offsets), shape, pose);
}

}  // namespace sculpt
