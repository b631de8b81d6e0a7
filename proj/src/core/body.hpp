#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "uv_atlas.hpp"

namespace sculpt {

inline constexpr std::uint32_t kNoParent = 0xFFFFFFFFu;
inline constexpr int kSmplVertices = 6890;
inline constexpr int kSmplJoints = 24;
inline constexpr int kPoseDim = 69;  // 23 articulated joints × axis-angle

// Parametric body: canonical template, linear shape and pose-corrective
// bases, joint regressor, skinning weights and kinematic tree. Row 3·v + c
// of the (3N)×· bases holds coordinate c of vertex v.
struct BodyModel {
  Points template_vertices;                 // N×3 meters
  Faces faces;                              // F×3
  Eigen::MatrixXd shape_dirs;               // 3N×S meters per unit beta
  Eigen::MatrixXd pose_dirs;                // 3N×9(K-1)
  Eigen::MatrixXd joint_regressor;          // K×N
  Eigen::MatrixXd skin_weights;             // N×K, rows sum to 1
  std::vector<std::uint32_t> parents;       // K, parents[0] = kNoParent
  UvCoords uv_coords;                       // optional N×2
  std::vector<std::array<Eigen::Vector2d, 3>> face_uv;  // optional, seam-aware
  std::vector<std::uint32_t> face_regions;  // optional

  int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_articulated() const { return num_joints() - 1; }
  int num_betas() const { return static_cast<int>(shape_dirs.cols()); }

  // Throws Errc::format on any broken invariant: array sizes, weight rows
  // that are negative or do not sum to 1 ± 1e-6, a kinematic tree that is
  // not a single root with parents preceding children, bad face indices.
  void validate() const;

  // Atlas built from uv_coords / face_uv / face_regions. Throws when the
  // model carries no UVs.
  UvAtlas atlas(int resolution = 256) const;
};

BodyModel load_body_model(const std::filesystem::path& path);
void save_body_model(const BodyModel& model, const std::filesystem::path& dir);

// θ ∈ R^69 excludes the global orientation. A model with K_total < 24 joints
// reads the first 3·(K_total−1) entries; the rest must be zero.
struct Pose {
  std::array<double, kPoseDim> body{};
  Eigen::Vector3d root_orient = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose rest() { return {}; }
  Eigen::Vector3d joint(int articulated_index) const {
    return {body[3 * articulated_index], body[3 * articulated_index + 1], body[3 * articulated_index + 2]};
  }
};

struct BodyShape {
  Eigen::VectorXd betas;
  static BodyShape zeros(int s) { return {Eigen::VectorXd::Zero(s)}; }
};

struct ClothedMesh {
  Points vertices;
  Faces faces;
};

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle);

// Concatenated (R(ω_k) − I), row-major, for `articulated` joints.
Eigen::VectorXd pose_feature(const Pose& pose, int articulated = kPoseDim / 3);

// Throws Errc::invalid_argument for non-finite values or nonzero entries
// beyond the model's joint count.
void check_pose(const BodyModel& model, const Pose& pose);

Points pose_blendshape(const BodyModel& model, const Pose& pose);
Points pose_blendshape_from_feature(const BodyModel& model, const Eigen::VectorXd& feature);
Points shaped_template(const BodyModel& model, const BodyShape& shape);
Points joint_locations(const BodyModel& model, const Points& shaped);
Points clothed_template(const BodyModel& model, const BodyShape& shape, const Pose& pose, const Points& offsets);

// World transforms of each joint with the rest joint location factored out,
// i.e. A_k = G_k · [I | −j_k]; these are what the skin weights blend.
std::vector<Eigen::Matrix4d> skinning_transforms(const BodyModel& model, const Points& joints, const Pose& pose);

// Per-vertex blend Σ_k w_vk A_k.
std::vector<Eigen::Matrix4d> vertex_transforms(const BodyModel& model, const BodyShape& shape, const Pose& pose);

ClothedMesh lbs(const BodyModel& model, const Points& canonical_vertices, const BodyShape& shape, const Pose& pose);

// lbs(clothed_template(…, sample_dispmap(map, atlas))).
ClothedMesh pose_clothed_body(const BodyModel& model, const BodyShape& shape, const Pose& pose, const DispMap& map,
                              const UvAtlas& atlas);

}  // namespace sculpt
