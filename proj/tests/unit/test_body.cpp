#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>

#include "body.hpp"
#include "datagen.hpp"
#include "doctest.h"
#include "error.hpp"
#include "rng.hpp"

using namespace sculpt;
namespace fs = std::filesystem;

namespace {

Eigen::Vector3d random_axis_angle(Rng& rng, double max_angle) {
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  return axis.normalized() * rng.uniform(0.0, max_angle);
}

Pose random_pose(const BodyModel& m, Rng& rng) {
  Pose p;
  for (int i = 0; i < 3 * m.num_articulated(); ++i) p.body[i] = rng.uniform(-0.8, 0.8);
  return p;
}

double max_abs_diff(const Points& a, const Points& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Skinning written independently with quaternions and explicit parent
// chains, used as an oracle for lbs.
Points quaternion_skinning(const BodyModel& m, const Points& canonical, const Pose& pose) {
  const Points joints = m.joint_regressor * m.template_vertices;
  const int k = m.num_joints();
  std::vector<Eigen::Quaterniond> rot(k);
  std::vector<Eigen::Vector3d> pos(k);
  for (int j = 0; j < k; ++j) {
    const Eigen::Vector3d w = j == 0 ? pose.root_orient : pose.joint(j - 1);
    const Eigen::Quaterniond q(w.norm() > 0 ? Eigen::AngleAxisd(w.norm(), w.normalized())
                                            : Eigen::AngleAxisd(0.0, Eigen::Vector3d::UnitX()));
    if (j == 0) {
      rot[0] = q;
      pos[0] = joints.row(0).transpose() + pose.translation;
    } else {
      const auto p = m.parents[j];
      rot[j] = rot[p] * q;
      pos[j] = pos[p] + rot[p] * (joints.row(j) - joints.row(p)).transpose();
    }
  }
  Points out = Points::Zero(canonical.rows(), 3);
  for (int v = 0; v < canonical.rows(); ++v)
    for (int j = 0; j < k; ++j) {
      const Eigen::Vector3d local = canonical.row(v).transpose() - joints.row(j).transpose();
      out.row(v) += m.skin_weights(v, j) * (rot[j] * local + pos[j]).transpose();
    }
  return out;
}

}  // namespace

TEST_SUITE("body model") {
  TEST_CASE("Rodrigues agrees with the angle-axis rotation") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
      const Eigen::Vector3d w = random_axis_angle(rng, M_PI);
      const Eigen::Matrix3d ref = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
      CHECK((rodrigues(w) - ref).cwiseAbs().maxCoeff() < 1e-14);
    }
    const Eigen::Vector3d tiny(1e-12, -2e-12, 3e-12);
    CHECK((rodrigues(tiny) - Eigen::AngleAxisd(tiny.norm(), tiny.normalized()).toRotationMatrix())
              .cwiseAbs()
              .maxCoeff() < 1e-15);
    CHECK(rodrigues(Eigen::Vector3d::Zero()) == Eigen::Matrix3d::Identity());
  }

  TEST_CASE("Rodrigues produces proper rotations") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
      const Eigen::Matrix3d r = rodrigues(random_axis_angle(rng, 3.0));
      CHECK((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-13);
      CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-13));
    }
  }

  TEST_CASE("toy body is a valid three-joint model") {
    const ToyBody toy = make_toy_body();
    const BodyModel& m = toy.model;
    CHECK_NOTHROW(m.validate());
    CHECK(m.num_joints() == 3);
    CHECK(m.num_betas() == 2);
    CHECK(m.num_vertices() >= 150);
    CHECK(m.num_vertices() <= 250);
    for (int v = 0; v < m.num_vertices(); ++v) CHECK(m.skin_weights.row(v).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("rest pose skinning returns the shaped template") {
    const BodyModel m = make_toy_body().model;
    BodyShape shape = BodyShape::zeros(m.num_betas());
    shape.betas << 0.7, -1.3;
    const Points canonical = clothed_template(m, shape, Pose::rest(), Points::Zero(m.num_vertices(), 3));
    CHECK(max_abs_diff(lbs(m, canonical, shape, Pose::rest()).vertices, shaped_template(m, shape)) < 1e-9);
  }

  TEST_CASE("shape blendshapes are linear in beta") {
    const BodyModel m = make_toy_body().model;
    BodyShape a = BodyShape::zeros(2), b = BodyShape::zeros(2), ab = BodyShape::zeros(2);
    a.betas << 1.0, 0.0;
    b.betas << 0.0, 2.0;
    ab.betas << 1.0, 2.0;
    const Points t = m.template_vertices;
    CHECK(max_abs_diff(shaped_template(m, ab) - t, (shaped_template(m, a) - t) + (shaped_template(m, b) - t)) < 1e-12);
  }

  TEST_CASE("posing matches a quaternion skinning oracle") {
    const BodyModel m = make_toy_body().model;
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
      Pose p = random_pose(m, rng);
      p.root_orient = random_axis_angle(rng, 2.0);
      p.translation = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
      const Points canonical = m.template_vertices;  // skip blendshapes to isolate skinning
      CHECK(max_abs_diff(lbs(m, canonical, BodyShape::zeros(2), p).vertices, quaternion_skinning(m, canonical, p)) <
            1e-12);
    }
  }

  TEST_CASE("global rotation is equivariant about the root joint") {
    const BodyModel m = make_toy_body().model;
    const BodyShape shape = BodyShape::zeros(m.num_betas());
    const Eigen::Vector3d root = (m.joint_regressor * m.template_vertices).row(0).transpose();
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
      Pose p = random_pose(m, rng);
      const Points canonical = clothed_template(m, shape, p, Points::Zero(m.num_vertices(), 3));
      const Points base = lbs(m, canonical, shape, p).vertices;
      const Eigen::Vector3d w = random_axis_angle(rng, M_PI);
      p.root_orient = w;
      const Points turned = lbs(m, canonical, shape, p).vertices;
      const Eigen::Matrix3d r = rodrigues(w);
      Points expected(base.rows(), 3);
      for (int v = 0; v < base.rows(); ++v)
        expected.row(v) = (r * (base.row(v).transpose() - root) + root).transpose();
      CHECK(max_abs_diff(turned, expected) < 1e-9);
    }
  }

  TEST_CASE("translation shifts every vertex") {
    const BodyModel m = make_toy_body().model;
    const BodyShape shape = BodyShape::zeros(2);
    Pose p;
    const Points base = lbs(m, m.template_vertices, shape, p).vertices;
    p.translation = Eigen::Vector3d(0.1, -0.2, 0.3);
    const Points moved = lbs(m, m.template_vertices, shape, p).vertices;
    CHECK(max_abs_diff(moved.rowwise() - p.translation.transpose(), base) < 1e-15);
  }

  TEST_CASE("pose entries beyond the model's joints must be zero") {
    const BodyModel m = make_toy_body().model;
    Pose p;
    p.body[3 * m.num_articulated()] = 0.1;
    CHECK_THROWS_AS(check_pose(m, p), Error);
    p.body[3 * m.num_articulated()] = 0.0;
    p.body[0] = std::nan("");
    CHECK_THROWS_AS(check_pose(m, p), Error);
  }

  TEST_CASE("pose blendshapes vanish at rest") {
    const BodyModel m = make_toy_body().model;
    CHECK(pose_blendshape(m, Pose::rest()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pose_feature(Pose::rest(), 2).isZero(0.0));
  }

  TEST_CASE("validation catches broken invariants") {
    const BodyModel good = make_toy_body().model;
    BodyModel m = good;
    m.skin_weights(0, 0) += 0.01;
    CHECK_THROWS_AS(m.validate(), Error);
    m = good;
    m.skin_weights(0, 0) = -m.skin_weights(0, 0);
    CHECK_THROWS_AS(m.validate(), Error);
    m = good;
    m.parents[1] = 2;  // child before parent
    CHECK_THROWS_AS(m.validate(), Error);
    m = good;
    m.faces[0][0] = static_cast<std::uint32_t>(m.num_vertices());
    CHECK_THROWS_AS(m.validate(), Error);
    m = good;
    m.pose_dirs.conservativeResize(m.pose_dirs.rows(), m.pose_dirs.cols() - 1);
    CHECK_THROWS_AS(m.validate(), Error);
  }

  TEST_CASE("container round trip keeps the model to single precision") {
    const BodyModel m = make_toy_body().model;
    const fs::path dir = fs::temp_directory_path() / "sculpt_test_body";
    fs::remove_all(dir);
    save_body_model(m, dir);
    const BodyModel r = load_body_model(dir);
    CHECK(r.num_vertices() == m.num_vertices());
    CHECK(r.faces == m.faces);
    CHECK(r.parents == m.parents);
    CHECK(max_abs_diff(r.template_vertices, m.template_vertices) < 1e-6);
    CHECK((r.skin_weights - m.skin_weights).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.face_regions == m.face_regions);
    for (int v = 0; v < r.num_vertices(); ++v) CHECK(r.skin_weights.row(v).sum() == doctest::Approx(1.0).epsilon(1e-12));
    fs::remove_all(dir);
  }

  TEST_CASE("loading a missing model reports an I/O error") {
    try {
      (void)load_body_model("/nonexistent/sculpt/body");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK((e.code() == Errc::io || e.code() == Errc::format));
    }
  }
}
