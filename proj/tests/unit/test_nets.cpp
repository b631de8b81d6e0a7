#include <cmath>
#include <vector>

#include "datagen.hpp"
#include "doctest.h"
#include "error.hpp"
#include "nets.hpp"
#include "rng.hpp"
#include "uv_atlas.hpp"

using namespace sculpt;
using ad::Tape;
using ad::Tensor;

namespace {

GeneratorConfig small_generator() {
  GeneratorConfig c;
  c.resolution = 16;
  c.channels = {16, 16, 8};
  c.style_dim = 32;
  c.cg_embed = 8;
  c.pose_embed = 16;
  return c;
}

DiscriminatorConfig small_disc() {
  DiscriminatorConfig c;
  c.channels = {8, 16, 16};
  c.cond_embed = 4;
  c.hidden = 16;
  return c;
}

std::vector<double> normals(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<double> one_hot(int n, int code) {
  std::vector<double> v(static_cast<std::size_t>(n) * kConditionTypes, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * kConditionTypes + code] = 1.0;
  return v;
}

// Randomizes every parameter so zero-initialized heads cannot hide leaks.
void scramble(ad::ParamSet& ps, Rng& rng, double scale) {
  for (auto& [name, p] : ps.items())
    for (double& x : p.value) x += scale * rng.normal();
}

struct GeoRun {
  std::vector<double> map;
  std::vector<std::vector<double>> features;
  std::vector<ad::Shape> shapes;
};

GeoRun run_geo(const GeneratorConfig& cfg, const ad::ParamSet& ps, const Mask& mask, const std::vector<double>& z,
               int n, int code) {
  Tape tape;
  const auto p = ad::bind(tape, ps, false);
  Rng prng(99);
  const GeoForward out = g_geo_forward(cfg, p, tape.constant({n, kLatentDim}, z),
                                       tape.constant({n, kConditionTypes}, one_hot(n, code)),
                                       tape.constant({n, 69}, std::vector<double>(static_cast<std::size_t>(n) * 69, 0.0)),
                                       mask_tensor(tape, mask));
  GeoRun r;
  r.map = out.map.value();
  for (const auto& f : out.features) {
    r.features.push_back(f.value());
    r.shapes.push_back(f.shape());
  }
  return r;
}

std::vector<double> run_tex(const GeneratorConfig& cfg, const ad::ParamSet& ps, const std::vector<double>& z_t,
                            const std::vector<double>& c_t, const GeoRun* geo, int n) {
  Tape tape;
  const auto p = ad::bind(tape, ps, false);
  std::vector<Tensor> feats;
  if (geo)
    for (std::size_t l = 0; l < geo->features.size(); ++l) feats.push_back(tape.constant(geo->shapes[l], geo->features[l]));
  const Tensor out = g_tex_forward(cfg, p, tape.constant({n, kLatentDim}, z_t),
                                   tape.constant({n, kConditionTypes}, one_hot(n, 2)), tape.constant({n, kLatentDim}, c_t),
                                   geo ? &feats : nullptr);
  return out.value();
}

void zero_gates(const GeneratorConfig& cfg, ad::ParamSet& ps) {
  for (int l = 0; l <= cfg.levels(); ++l) ps.at("syn." + std::to_string(l) + ".gate").value.assign(1, 0.0);
}

}  // namespace

TEST_SUITE("networks") {
  TEST_CASE("untrained geometry generator adds no clothing") {
    const auto cfg = small_generator();
    const Mask mask = build_mask(make_toy_body().atlas, cfg.resolution);
    const auto ps = init_geometry_generator(cfg, 1);
    Rng rng(2);
    const GeoRun r = run_geo(cfg, ps, mask, normals(rng, 3 * kLatentDim), 3, 0);
    for (double x : r.map) CHECK(x == 0.0);
    CHECK(r.features.size() == static_cast<std::size_t>(cfg.levels() + 1));
  }

  TEST_CASE("geometry output is exactly zero off the UV mask") {
    const auto cfg = small_generator();
    const Mask mask = build_mask(make_toy_body().atlas, cfg.resolution);
    REQUIRE(mask.count() > 0);
    REQUIRE(mask.count() < mask.data.size());
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      auto ps = init_geometry_generator(cfg, 10 + trial);
      scramble(ps, rng, 0.3);
      const GeoRun r = run_geo(cfg, ps, mask, normals(rng, 4 * kLatentDim), 4, trial % kConditionTypes);
      std::size_t nonzero_on = 0;
      for (int s = 0; s < 4; ++s)
        for (std::size_t t = 0; t < mask.data.size(); ++t)
          for (int c = 0; c < 3; ++c) {
            const double v = r.map[(s * mask.data.size() + t) * 3 + c];
            if (!mask.data[t]) CHECK(v == 0.0);
            else nonzero_on += v != 0.0;
          }
      CHECK(nonzero_on > 0);
    }
  }

  TEST_CASE("initialization is deterministic in the seed") {
    const auto cfg = small_generator();
    CHECK(init_geometry_generator(cfg, 5).hash() == init_geometry_generator(cfg, 5).hash());
    CHECK(init_geometry_generator(cfg, 5).hash() != init_geometry_generator(cfg, 6).hash());
    CHECK(init_texture_generator(cfg, 5).hash() == init_texture_generator(cfg, 5).hash());
  }

  TEST_CASE("texture output lies in the unit interval") {
    const auto cfg = small_generator();
    auto ps = init_texture_generator(cfg, 7);
    Rng rng(8);
    scramble(ps, rng, 0.5);
    const auto out = run_tex(cfg, ps, normals(rng, 2 * kLatentDim), normals(rng, 2 * kLatentDim), nullptr, 2);
    CHECK(out.size() == 2u * 16 * 16 * 3);
    for (double x : out) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }

  TEST_CASE("zero geometry features reproduce the uncoupled generator bit for bit") {
    const auto cfg = small_generator();
    const Mask mask = build_mask(make_toy_body().atlas, cfg.resolution);
    const auto tex = init_texture_generator(cfg, 9);
    Rng rng(10);
    GeoRun zero = run_geo(cfg, init_geometry_generator(cfg, 11), mask, normals(rng, kLatentDim), 1, 0);
    for (auto& f : zero.features) std::fill(f.begin(), f.end(), 0.0);
    const auto z_t = normals(rng, kLatentDim);
    const auto c_t = normals(rng, kLatentDim);
    CHECK(run_tex(cfg, tex, z_t, c_t, &zero, 1) == run_tex(cfg, tex, z_t, c_t, nullptr, 1));
  }

  TEST_CASE("coupling makes the texture depend on the geometry latent") {
    const auto cfg = small_generator();
    const Mask mask = build_mask(make_toy_body().atlas, cfg.resolution);
    const auto geo = init_geometry_generator(cfg, 12);
    auto tex = init_texture_generator(cfg, 13);
    Rng rng(14);
    const auto z_t = normals(rng, kLatentDim);
    const auto c_t = normals(rng, kLatentDim);
    int changed = 0;
    for (int pair = 0; pair < 100; ++pair) {
      const GeoRun a = run_geo(cfg, geo, mask, normals(rng, kLatentDim), 1, 0);
      const GeoRun b = run_geo(cfg, geo, mask, normals(rng, kLatentDim), 1, 0);
      changed += run_tex(cfg, tex, z_t, c_t, &a, 1) != run_tex(cfg, tex, z_t, c_t, &b, 1);
    }
    CHECK(changed == 100);

    zero_gates(cfg, tex);
    for (int pair = 0; pair < 20; ++pair) {
      const GeoRun a = run_geo(cfg, geo, mask, normals(rng, kLatentDim), 1, 0);
      const GeoRun b = run_geo(cfg, geo, mask, normals(rng, kLatentDim), 1, 0);
      CHECK(run_tex(cfg, tex, z_t, c_t, &a, 1) == run_tex(cfg, tex, z_t, c_t, &b, 1));
    }
  }

  TEST_CASE("mismatched coupling features are rejected") {
    const auto cfg = small_generator();
    const auto tex = init_texture_generator(cfg, 15);
    Rng rng(16);
    Tape tape;
    const auto p = ad::bind(tape, tex, false);
    std::vector<Tensor> feats{tape.constant({1, 4, 4, 16}, std::vector<double>(256, 0.0))};
    try {
      (void)g_tex_forward(cfg, p, tape.constant({1, kLatentDim}, normals(rng, kLatentDim)),
                          tape.constant({1, kConditionTypes}, one_hot(1, 0)),
                          tape.constant({1, kLatentDim}, normals(rng, kLatentDim)), &feats);
      FAIL("expected a coupling error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::coupling);
    }
  }

  TEST_CASE("discriminator starts at zero logits and checks its inputs") {
    const auto cfg = small_disc();
    const int cond_dim = kConditionTypes + 69;
    const auto ps = init_discriminator(cfg, 16, cond_dim, 17);
    Rng rng(18);
    Tape tape;
    const auto p = ad::bind(tape, ps, false);
    const Tensor logits = d_forward(cfg, p, tape.constant({3, 16, 16, 3}, normals(rng, 3 * 16 * 16 * 3)),
                                    tape.constant({3, cond_dim}, normals(rng, 3 * cond_dim)));
    CHECK(logits.shape() == ad::Shape{3, 1});
    for (double x : logits.value()) CHECK(x == 0.0);
    CHECK_THROWS_AS(d_forward(cfg, p, tape.constant({3, 8, 8, 3}, normals(rng, 3 * 8 * 8 * 3)),
                              tape.constant({3, cond_dim}, normals(rng, 3 * cond_dim))),
                    Error);
    CHECK_THROWS_AS(d_forward(cfg, p, tape.constant({3, 16, 16, 3}, normals(rng, 3 * 16 * 16 * 3)),
                              tape.constant({3, 5}, normals(rng, 15))),
                    Error);
  }

  TEST_CASE("generator configs validate their shapes") {
    GeneratorConfig c = small_generator();
    c.resolution = 24;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small_generator();
    c.channels = {16, 8};
    CHECK_THROWS_AS(c.validate(), Error);
    const GeneratorConfig back = generator_config_from_json(to_json(small_generator()));
    CHECK(back.channels == small_generator().channels);
    CHECK(back.style_dim == small_generator().style_dim);
  }
}
