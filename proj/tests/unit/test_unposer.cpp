#include <cmath>
#include <filesystem>
#include <fstream>

#include "datagen.hpp"
#include "dataset.hpp"
#include "doctest.h"
#include "error.hpp"
#include "rng.hpp"
#include "unposer.hpp"

using namespace sculpt;
namespace fs = std::filesystem;

namespace {

Pose random_pose(const BodyModel& m, Rng& rng) {
  Pose p;
  for (int i = 0; i < 3 * m.num_articulated(); ++i) p.body[i] = rng.uniform(-0.7, 0.7);
  p.root_orient = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  p.translation = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
  return p;
}

BodyShape random_shape(const BodyModel& m, Rng& rng) {
  BodyShape s = BodyShape::zeros(m.num_betas());
  for (int i = 0; i < m.num_betas(); ++i) s.betas[i] = rng.uniform(-1.5, 1.5);
  return s;
}

Points posed(const BodyModel& m, const BodyShape& s, const Pose& p, const Points& offsets) {
  return lbs(m, clothed_template(m, s, p, offsets), s, p).vertices;
}

}  // namespace

TEST_SUITE("unposer") {
  TEST_CASE("unposing a posed clothed body recovers its offsets") {
    const BodyModel m = make_toy_body().model;
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      const BodyShape s = random_shape(m, rng);
      const Pose p = random_pose(m, rng);
      Points d(m.num_vertices(), 3);
      for (int v = 0; v < d.rows(); ++v) d.row(v) << rng.normal() * 0.02, rng.normal() * 0.02, rng.normal() * 0.02;
      const UnposeResult r = unpose_registration(m, posed(m, s, p, d), s, p);
      CHECK(r.singular_count == 0);
      CHECK((r.offsets - d).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("mesh to map to mesh stays within 2 mm at 256") {
    const ToyBody toy = make_toy_body(256);
    const BodyModel& m = toy.model;
    Rng rng(32);
    for (int t = 0; t < kNumClothingTypes; ++t) {
      const BodyShape s = random_shape(m, rng);
      const Pose p = random_pose(m, rng);
      const Points registered = posed(m, s, p, clothing_offsets(m, clothing_type_from_code(t)));
      const DispMap map =
          registration_to_dispmap(m, toy.atlas, registered, s, p, 256, BakeOptions{.dilate = true});
      const Points back = pose_clothed_body(m, s, p, map, toy.atlas).vertices;
      CHECK((back - registered).cwiseAbs().maxCoeff() < 2e-3);
    }
  }

  TEST_CASE("singular blended transforms are flagged and zeroed") {
    BodyModel m = make_toy_body().model;
    // Half root, half a joint turned by pi: the blend collapses a plane.
    m.skin_weights.row(0).setZero();
    m.skin_weights(0, 0) = 0.5;
    m.skin_weights(0, 1) = 0.5;
    Pose p;
    p.body[0] = M_PI;
    const BodyShape s = BodyShape::zeros(m.num_betas());
    const Points d = Points::Constant(m.num_vertices(), 3, 0.01);
    const UnposeResult r = unpose_registration(m, posed(m, s, p, d), s, p);
    CHECK(r.singular_count >= 1);
    CHECK(r.singular[0] == 1);
    CHECK(r.offsets.row(0).isZero(0.0));
    for (int v = 1; v < m.num_vertices(); ++v)
      if (!r.singular[v]) CHECK((r.offsets.row(v) - d.row(v)).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("unpose rejects a vertex count mismatch") {
    const BodyModel m = make_toy_body().model;
    CHECK_THROWS_AS(unpose_registration(m, Points::Zero(5, 3), BodyShape::zeros(2), Pose{}), Error);
  }

  TEST_CASE("batch unposing writes a valid dataset and counts failures") {
    const ToyBody toy = make_toy_body(32);
    const BodyModel& m = toy.model;
    const fs::path root = fs::temp_directory_path() / "sculpt_test_unpose";
    fs::remove_all(root);
    fs::create_directories(root / "reg");
    Rng rng(33);
    for (int i = 0; i < 3; ++i) {
      Registration reg;
      reg.name = "r" + std::to_string(i);
      reg.shape = random_shape(m, rng);
      reg.pose = random_pose(m, rng);
      reg.pose.translation.setZero();
      reg.clothing_type = clothing_type_from_code(2 * i);
      reg.vertices = posed(m, reg.shape, reg.pose, clothing_offsets(m, reg.clothing_type));
      save_registration(reg, root / "reg", m);
      const Registration back = load_registration(root / "reg" / (reg.name + ".obj"), m);
      CHECK((back.vertices - reg.vertices).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(back.clothing_type == reg.clothing_type);
      CHECK(back.pose.body == reg.pose.body);
    }
    {
      std::ofstream bad(root / "reg" / "r9.obj");
      bad << "v 0 0 0\nf 1 1 1\n";
    }
    BatchUnposeOptions opt;
    opt.resolution = 32;
    const BatchUnposeReport report = batch_unpose(root / "reg", m, toy.atlas, root / "out", opt);
    CHECK(report.processed == 3);
    CHECK(report.failed == 1);
    CHECK_FALSE(report.ok);
    CHECK(validate_dataset(root / "out").ok);
    const auto recs = read_geometry_index(root / "out");
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].dispmap == "maps/r0.png");
    CHECK(decode_clothing_type(recs[1].c_g) == ClothingType::long_sleeve_long_trouser);

    opt.max_failure_fraction = 0.5;
    CHECK(batch_unpose(root / "reg", m, toy.atlas, root / "out2", opt).ok);
    fs::remove_all(root);
  }
}
