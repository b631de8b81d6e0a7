#include <cmath>
#include <filesystem>

#include "body.hpp"
#include "datagen.hpp"
#include "doctest.h"
#include "error.hpp"
#include "renderer.hpp"
#include "rng.hpp"

using namespace sculpt;
namespace fs = std::filesystem;

namespace {

Raster random_texture(int r, Rng& rng) {
  Raster t(r, r, 3);
  for (double& x : t.data) x = rng.uniform(0.0, 1.0);
  return t;
}

double dot(const Raster& a, const Raster& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

struct Scene {
  ToyBody toy = make_toy_body();
  ClothedMesh mesh;
  Camera camera = default_camera(32, 32);
};

Scene toy_scene() {
  Scene s;
  Pose p = toy_pose_bank()[1];
  s.mesh = lbs(s.toy.model, s.toy.model.template_vertices, BodyShape::zeros(s.toy.model.num_betas()), p);
  return s;
}

Camera identity_camera(int size, double focal) {
  Camera c;
  c.width = c.height = size;
  c.focal = focal;
  c.cx = c.cy = 0.5 * size;
  return c;
}

}  // namespace

TEST_SUITE("renderer") {
  TEST_CASE("texture backward is the adjoint of the texture map") {
    const Scene s = toy_scene();
    Rng rng(21);
    const Raster tex = random_texture(16, rng);
    const RenderOutput ro = render(s.mesh, s.toy.atlas, tex, s.camera, Eigen::Vector3d::Zero());
    REQUIRE(ro.alpha.count() > 50);
    for (int trial = 0; trial < 5; ++trial) {
      const Raster t = random_texture(16, rng);
      Raster g(32, 32, 3);
      for (double& x : g.data) x = rng.normal();
      const Raster img = apply_texture_tape(ro.tape, t, ro.alpha, Eigen::Vector3d::Zero());
      const double lhs = dot(img, g);
      const double rhs = dot(t, texture_backward(g, ro.tape));
      CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
    }
  }

  TEST_CASE("texture gradients match central differences") {
    const Scene s = toy_scene();
    Rng rng(22);
    Raster tex = random_texture(16, rng);
    Raster g(32, 32, 3);
    for (double& x : g.data) x = rng.normal();
    auto loss = [&](const Raster& t) { return dot(render(s.mesh, s.toy.atlas, t, s.camera).rgb, g); };
    const Raster analytic = texture_backward(g, render(s.mesh, s.toy.atlas, tex, s.camera).tape);
    const double eps = 1e-4;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < tex.data.size(); ++i) {
      const double keep = tex.data[i];
      tex.data[i] = keep + eps;
      const double up = loss(tex);
      tex.data[i] = keep - eps;
      const double down = loss(tex);
      tex.data[i] = keep;
      const double fd = (up - down) / (2.0 * eps);
      num += (fd - analytic.data[i]) * (fd - analytic.data[i]);
      den += analytic.data[i] * analytic.data[i];
    }
    CHECK(den > 0.0);
    CHECK(std::sqrt(num / den) < 1e-4);
  }

  TEST_CASE("interpolation is perspective correct") {
    // Plane z = -3 - x, seen by an identity camera; u and v follow world x, y.
    ClothedMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << -1, -1, -2, 1, -1, -4, 1, 1, -4, -1, 1, -2;
    mesh.faces = {{0, 1, 2}, {0, 2, 3}};
    UvCoords uv(4, 2);
    uv << 0, 1, 1, 1, 1, 0, 0, 0;
    const UvAtlas atlas = atlas_from_vertex_uv(uv, mesh.faces, 64);
    const int tr = 64;
    Raster tex(tr, tr, 3);
    for (int i = 0; i < tr; ++i)
      for (int j = 0; j < tr; ++j) {
        tex.at(i, j, 0) = (j + 0.5) / tr;
        tex.at(i, j, 1) = (i + 0.5) / tr;
      }
    const Camera cam = identity_camera(48, 30.0);
    const RenderOutput ro = render(mesh, atlas, tex, cam);
    int checked = 0;
    double worst = 0.0;
    for (int r = 0; r < 48; ++r)
      for (int c = 0; c < 48; ++c) {
        const double a = (c + 0.5 - cam.cx) / cam.focal;
        const double b = (cam.cy - r - 0.5) / cam.focal;
        const double t = 3.0 / (1.0 - a);
        const double u = (t * a + 1.0) / 2.0;
        const double v = (1.0 - t * b) / 2.0;
        const double lo = 1.0 / tr, hi = 1.0 - 1.0 / tr;
        if (u < lo || u > hi || v < lo || v > hi) continue;
        REQUIRE(ro.alpha.at(r, c) == 1);
        worst = std::max({worst, std::abs(ro.rgb.at(r, c, 0) - u), std::abs(ro.rgb.at(r, c, 1) - v)});
        ++checked;
      }
    CHECK(checked > 300);
    CHECK(worst < 1e-9);
  }

  TEST_CASE("a split quad covers its interior without holes") {
    ClothedMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << -1, -1, -3, 1, -1, -3, 1, 1, -3, -1, 1, -3;
    mesh.faces = {{0, 1, 2}, {0, 2, 3}};
    UvCoords uv(4, 2);
    uv << 0, 1, 1, 1, 1, 0, 0, 0;
    const UvAtlas atlas = atlas_from_vertex_uv(uv, mesh.faces, 8);
    // focal 24 at depth 3 puts the quad corners on pixel centers 8 px from
    // the image center, so the diagonal passes through pixel centers.
    const Camera cam = identity_camera(32, 24.0);
    const RenderOutput ro = render(mesh, atlas, Raster(8, 8, 3, 0.5), cam);
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c) {
        const bool inside = c + 0.5 >= 8.0 && c + 0.5 < 24.0 && r + 0.5 >= 8.0 && r + 0.5 < 24.0;
        CHECK(ro.alpha.at(r, c) == (inside ? 1 : 0));
      }
  }

  TEST_CASE("depth ties go to the lower face index and nearer faces win") {
    ClothedMesh mesh;
    mesh.vertices.resize(6, 3);
    mesh.vertices << -1, -1, -3, 1, -1, -3, 0, 1, -3,  // far pair shares depth
        -1, -1, -2, 1, -1, -2, 0, 1, -2;
    UvCoords uv = UvCoords::Zero(6, 2);
    Raster tex(2, 2, 3, 0.0);
    const Camera cam = identity_camera(32, 12.0);

    mesh.faces = {{0, 1, 2}, {2, 1, 0}};
    const RenderOutput tie = render(mesh, atlas_from_vertex_uv(uv, mesh.faces, 2), tex, cam);
    int covered = 0;
    for (auto f : tie.face_index) {
      CHECK(f != 1);
      covered += f == 0;
    }
    CHECK(covered > 20);

    mesh.faces = {{0, 1, 2}, {3, 4, 5}};
    const RenderOutput near = render(mesh, atlas_from_vertex_uv(uv, mesh.faces, 2), tex, cam);
    const int centre = 16 * 32 + 16;
    CHECK(near.face_index[centre] == 1);
  }

  TEST_CASE("faces behind the near plane are skipped") {
    ClothedMesh mesh;
    mesh.vertices.resize(3, 3);
    mesh.vertices << -1, -1, 1, 1, -1, -3, 0, 1, -3;
    mesh.faces = {{0, 1, 2}};
    const RenderOutput ro = render(mesh, atlas_from_vertex_uv(UvCoords::Zero(3, 2), mesh.faces, 2), Raster(2, 2, 3),
                                   identity_camera(16, 8.0));
    CHECK(ro.alpha.count() == 0);
  }

  TEST_CASE("the default camera frames the toy body") {
    const Scene s = toy_scene();
    const RenderOutput ro = render(s.mesh, s.toy.atlas, Raster(8, 8, 3, 0.3), s.camera);
    CHECK(ro.alpha.count() > 100);
    for (int c = 0; c < 32; ++c) {
      CHECK(ro.alpha.at(0, c) == 0);
      CHECK(ro.alpha.at(31, c) == 0);
    }
    for (std::size_t p = 0; p < ro.alpha.data.size(); ++p)
      if (!ro.alpha.data[p]) CHECK(ro.rgb.data[3 * p] == 1.0);
  }

  TEST_CASE("camera JSON round trips and rejects malformed files") {
    Camera cam = default_camera(40, 30, 1.7, 3.0, 0.8, 0.4);
    cam.cx = 19.25;
    const fs::path dir = fs::temp_directory_path() / "sculpt_test_camera";
    fs::create_directories(dir);
    save_camera(cam, dir / "cam.json");
    const Camera back = load_camera(dir / "cam.json");
    CHECK(back.width == 40);
    CHECK(back.height == 30);
    CHECK(back.focal == cam.focal);
    CHECK(back.cx == cam.cx);
    CHECK((back.rotation - cam.rotation).norm() == 0.0);
    CHECK((back.translation - cam.translation).norm() == 0.0);
    {
      std::FILE* f = std::fopen((dir / "bad.json").c_str(), "w");
      std::fputs("{\"focal\": 10}", f);
      std::fclose(f);
    }
    try {
      (void)load_camera(dir / "bad.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::format);
    }
    fs::remove_all(dir);
  }

  TEST_CASE("patch corners favour mostly-foreground windows") {
    Rng rng(23);
    Mask m(24, 24);
    for (int r = 4; r < 20; ++r)
      for (int c = 6; c < 14; ++c) m.at(r, c) = 1;
    bool fallback = true;
    const auto corners = sample_patch_corners(m, 200, 8, rng, &fallback);
    CHECK_FALSE(fallback);
    for (auto [r0, c0] : corners) {
      REQUIRE(r0 >= 0);
      REQUIRE(c0 >= 0);
      REQUIRE(r0 + 8 <= 24);
      REQUIRE(c0 + 8 <= 24);
      int fg = 0;
      for (int r = r0; r < r0 + 8; ++r)
        for (int c = c0; c < c0 + 8; ++c) fg += m.at(r, c);
      CHECK(2 * fg >= 64);
    }
    const auto empty = sample_patch_corners(Mask(24, 24), 10, 8, rng, &fallback);
    CHECK(fallback);
    CHECK(empty.size() == 10);
    CHECK_THROWS_AS(sample_patch_corners(m, 1, 25, rng), Error);
  }

  TEST_CASE("extracted patches copy the image window") {
    Rng rng(24);
    Raster img = random_texture(20, rng);
    Mask m(20, 20);
    std::fill(m.data.begin(), m.data.end(), 1);
    const PatchBatch pb = extract_patches(img, m, 3, 5, rng);
    for (int k = 0; k < 3; ++k) {
      const auto [r0, c0] = pb.corners[k];
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) CHECK(pb.patches.at(k * 5 + r, c, 2) == img.at(r0 + r, c0 + c, 2));
    }
  }
}
