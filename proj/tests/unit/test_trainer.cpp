#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "datagen.hpp"
#include "doctest.h"
#include "error.hpp"
#include "renderer.hpp"
#include "rng.hpp"
#include "trainer.hpp"

using namespace sculpt;
using ad::Tape;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.generator.resolution = 16;
  c.generator.channels = {8, 8, 8};
  c.generator.style_dim = 16;
  c.generator.cg_embed = 4;
  c.generator.pose_embed = 8;
  c.discriminator.channels = {8, 8, 8};
  c.discriminator.cond_embed = 4;
  c.discriminator.hidden = 8;
  c.batch_size = 2;
  c.steps = 3;
  c.fd_every = 0;
  c.fd_samples = 2;
  c.patch_size = 8;
  c.patches_per_image = 2;
  c.seed = 5;
  return c;
}

// Small geometry and texture datasets shared by the training cases.
struct Fixture {
  fs::path root = fs::temp_directory_path() / "sculpt_test_trainer";
  fs::path geo = root / "geo";
  fs::path tex = root / "tex";

  Fixture() {
    fs::remove_all(root);
    const ToyBody body = make_toy_body(16);
    GeometryDatasetOptions go;
    go.count = 8;
    go.resolution = 16;
    synth_geometry_dataset(body, geo, go);
    TextureDatasetOptions to;
    to.count = 6;
    to.resolution = 16;
    to.texture_resolution = 16;
    to.palette = {"teal"};
    synth_texture_dataset(body, default_camera(16, 16), tex, to);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("losses at zero logits take their closed-form values") {
    Tape tape;
    const Tensor zero = tape.constant({5, 1}, std::vector<double>(5, 0.0));
    CHECK(std::abs(nonsat_g_loss(zero).item() - std::log(2.0)) < 1e-12);
    CHECK(std::abs(nonsat_d_loss(zero, zero).item() - 2.0 * std::log(2.0)) < 1e-12);
  }

  TEST_CASE("losses match softplus for arbitrary logits") {
    Rng rng(1);
    std::vector<double> r(7), f(7);
    for (auto& x : r) x = 5.0 * rng.normal();
    for (auto& x : f) x = 5.0 * rng.normal();
    double g = 0.0, d = 0.0;
    for (int i = 0; i < 7; ++i) {
      g += softplus(-f[i]) / 7.0;
      d += (softplus(-r[i]) + softplus(f[i])) / 7.0;
    }
    Tape tape;
    CHECK(nonsat_g_loss(tape.constant({7, 1}, f)).item() == doctest::Approx(g).epsilon(1e-13));
    CHECK(nonsat_d_loss(tape.constant({7, 1}, r), tape.constant({7, 1}, f)).item() ==
          doctest::Approx(d).epsilon(1e-13));
  }

  TEST_CASE("R1 of a linear discriminator is half gamma times the squared weight norm") {
    Rng rng(2);
    for (double gamma : {1.0, 10.0, 0.25}) {
      Tape tape;
      std::vector<double> wv(12), xv(4 * 12);
      for (auto& v : wv) v = rng.normal();
      for (auto& v : xv) v = rng.normal();
      const Tensor w = tape.variable({12, 1}, wv);
      const Tensor x = tape.variable({4, 2, 2, 3}, xv);
      const Tensor logits = ad::matmul(ad::reshape(x, {4, 12}), w);
      const Tensor r1 = r1_penalty(logits, x, gamma);
      double norm2 = 0.0;
      for (double v : wv) norm2 += v * v;
      CHECK(std::abs(r1.item() - 0.5 * gamma * norm2) < 1e-12);
      // Its gradient with respect to the weights is gamma · w.
      const auto g = tape.grad(r1, {w});
      for (int i = 0; i < 12; ++i) CHECK(std::abs(g[0].value()[i] - gamma * wv[i]) < 1e-12);
    }
  }

  TEST_CASE("pixel FD is zero for identical sets and grows with a shift") {
    Rng rng(3);
    std::vector<Raster> a;
    for (int i = 0; i < 6; ++i) {
      Raster r(16, 16, 3);
      for (double& x : r.data) x = rng.uniform(0.0, 1.0);
      a.push_back(r);
    }
    auto b = a;
    for (auto& r : b)
      for (double& x : r.data) x += 0.2;
    CHECK(std::abs(pixel_fd(a, a)) < 1e-5);  // matrix square root round-off
    CHECK(pixel_fd(a, b) > 0.1);
  }

  TEST_CASE("training configs round trip through JSON and reject bad input") {
    TrainConfig c = tiny_config();
    c.r1_gamma = 3.5;
    c.coupling = false;
    c.ema_kimg = 2.0;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    json j = to_json(c);
    j["not_a_key"] = 1;
    CHECK_THROWS_AS(train_config_from_json(j), Error);
    c.r1_gamma = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    c.global_disc = c.patch_disc = false;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    c.patch_size = 12;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("the ablation matrix covers the six discriminator and coupling variants") {
    const auto m = ablation_matrix(tiny_config());
    REQUIRE(m.size() == 6);
    CHECK(m[0].first == "a");
    CHECK_FALSE(m[0].second.coupling);
    CHECK(m[1].second.global_disc);
    CHECK_FALSE(m[1].second.patch_disc);
    CHECK_FALSE(m[2].second.global_disc);
    CHECK(m[2].second.patch_size == 32);
    CHECK(m[3].second.patch_size == 64);
    for (std::size_t i = 1; i < 6; ++i) CHECK(m[i].second.coupling);
    CHECK(m[4].second.global_disc);
    CHECK(m[4].second.patch_disc);
    CHECK(m[5].second.patch_size == 64);
  }

  TEST_CASE("geometry training is deterministic and checkpoints round trip") {
    const Fixture& f = fixture();
    const TrainConfig cfg = tiny_config();
    const auto a = train_geometry(cfg, f.geo, f.root / "geo_a");
    const auto b = train_geometry(cfg, f.geo, f.root / "geo_b");
    CHECK(a.log.size() == 3);
    CHECK(a.mask_violations == 0);
    CHECK(slurp(f.root / "geo_a" / "metrics.csv") == slurp(f.root / "geo_b" / "metrics.csv"));
    CHECK(a.checkpoint.generator.hash() == b.checkpoint.generator.hash());
    CHECK(a.checkpoint.generator_ema.hash() == b.checkpoint.generator_ema.hash());
    CHECK(a.checkpoint.generator_ema.hash() != a.checkpoint.generator.hash());
    for (const auto& s : a.log) {
      CHECK(std::isfinite(s.d_loss));
      CHECK(std::isfinite(s.g_loss));
    }

    const Checkpoint loaded = load_checkpoint(f.root / "geo_a" / "checkpoint");
    CHECK(loaded.stage == "geometry");
    CHECK(loaded.step == 3);
    CHECK(loaded.mask.data == a.checkpoint.mask.data);
    CHECK(loaded.data_scale == doctest::Approx(a.checkpoint.data_scale).epsilon(1e-7));
    for (const auto* pair : {&loaded.generator, &loaded.generator_ema}) {
      const auto& orig = pair == &loaded.generator ? a.checkpoint.generator : a.checkpoint.generator_ema;
      CHECK(pair->names() == orig.names());
      for (const auto& name : orig.names()) {
        const auto& x = orig.at(name).value;
        const auto& y = pair->at(name).value;
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - y[i]) <= 1e-6 * std::max(1.0, std::abs(x[i])));
      }
    }
  }

  TEST_CASE("texture training leaves the geometry checkpoint untouched") {
    const Fixture& f = fixture();
    TrainConfig cfg = tiny_config();
    (void)train_geometry(cfg, f.geo, f.root / "geo_t");
    const fs::path ck = f.root / "geo_t" / "checkpoint";
    const auto r = train_texture(cfg, ck, f.tex, f.root / "tex_t");
    CHECK(r.geometry_hash_before == r.geometry_hash_after);
    CHECK(r.geometry_file_hash_before == r.geometry_file_hash_after);
    CHECK(r.geometry_file_hash_after == checkpoint_file_hash(ck));
    CHECK(r.checkpoint.stage == "texture");
    CHECK(r.mask_violations == 0);
    const auto again = train_texture(cfg, ck, f.tex, f.root / "tex_t2");
    CHECK(slurp(f.root / "tex_t" / "metrics.csv") == slurp(f.root / "tex_t2" / "metrics.csv"));

    const Checkpoint geo = load_checkpoint(ck);
    const TextureSample s = sample_texture(geo, r.checkpoint, ClothingType::long_sleeve_long_trouser,
                                           std::vector<double>(kLatentDim, 0.1), toy_pose_bank()[0].body, 3);
    CHECK(s.texture.height == 16);
    for (double x : s.texture.data) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    const auto color = mean_foreground_color(geo, r.checkpoint, f.tex, 2, 1);
    for (double c : color) CHECK(std::isfinite(c));
  }

  TEST_CASE("without coupling the gates stay at zero") {
    const Fixture& f = fixture();
    TrainConfig cfg = tiny_config();
    (void)train_geometry(cfg, f.geo, f.root / "geo_g");
    cfg.coupling = false;
    const auto r = train_texture(cfg, f.root / "geo_g" / "checkpoint", f.tex, f.root / "tex_g");
    for (int l = 0; l <= cfg.generator.levels(); ++l) {
      const std::string name = "syn." + std::to_string(l) + ".gate";
      CHECK(r.checkpoint.generator.at(name).value[0] == 0.0);
      CHECK(r.checkpoint.generator_ema.at(name).value[0] == 0.0);
    }
  }

  TEST_CASE("texture training refuses a mismatched geometry checkpoint") {
    const Fixture& f = fixture();
    TrainConfig cfg = tiny_config();
    (void)train_geometry(cfg, f.geo, f.root / "geo_m");
    cfg.generator.channels = {8, 8, 4};
    CHECK_THROWS_AS(train_texture(cfg, f.root / "geo_m" / "checkpoint", f.tex, f.root / "tex_m"), Error);
    CHECK_THROWS_AS(train_texture(cfg, f.geo, f.tex, f.root / "tex_m"), Error);
  }
}
