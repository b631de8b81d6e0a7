#include "nets.hpp"

#include <cmath>
#include <string>

#include "error.hpp"
#include "rng.hpp"

namespace sculpt {

using ad::Bound;
using ad::ParamSet;
using ad::Shape;
using ad::Tensor;

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

std::string lvl(const char* prefix, int level, const char* name) {
  return std::string(prefix) + std::to_string(level) + "." + name;
}

// He-scaled Gaussian weights for a layer with `fan_in` inputs.
void add_weight(ParamSet& ps, Rng& rng, const std::string& name, Shape shape, double fan_in, double gain = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
  const double std = gain * std::sqrt(2.0 / fan_in);
  for (auto& x : v) x = std * rng.normal();
  ps.add(name, std::move(shape), std::move(v));
}

void add_const(ParamSet& ps, const std::string& name, Shape shape, double value) {
  ps.add(name, shape, std::vector<double>(static_cast<std::size_t>(ad::numel(shape)), value));
}

void add_linear(ParamSet& ps, Rng& rng, const std::string& name, int in, int out, double gain = 1.0) {
  add_weight(ps, rng, name + ".w", {in, out}, in, gain);
  add_const(ps, name + ".b", {out}, 0.0);
}

Tensor dense(const Bound& p, const std::string& name, const Tensor& x) {
  return ad::linear(x, p[name + ".w"], p[name + ".b"]);
}

Tensor mapping(const GeneratorConfig& cfg, const Bound& p, Tensor x) {
  for (int i = 0; i < cfg.mapping_layers; ++i) x = ad::leaky_relu(dense(p, "map.fc" + std::to_string(i), x));
  return x;
}

void add_mapping(const GeneratorConfig& cfg, ParamSet& ps, Rng& rng, int in) {
  for (int i = 0; i < cfg.mapping_layers; ++i) {
    add_linear(ps, rng, "map.fc" + std::to_string(i), in, cfg.style_dim);
    in = cfg.style_dim;
  }
}

void add_synthesis(const GeneratorConfig& cfg, ParamSet& ps, Rng& rng) {
  const int c0 = cfg.channels[0];
  std::vector<double> cst(static_cast<std::size_t>(16 * c0));
  for (auto& x : cst) x = rng.normal();
  ps.add("syn.const", {1, 4, 4, c0}, std::move(cst));
  for (int l = 0; l <= cfg.levels(); ++l) {
    const int cin = l == 0 ? c0 : cfg.channels[l - 1];
    const int cout = cfg.channels[l];
    add_weight(ps, rng, lvl("syn.", l, "conv.w"), {9 * cin, cout}, 9.0 * cin);
    add_const(ps, lvl("syn.", l, "conv.b"), {cout}, 0.0);
    // Style modulation starts near identity: small weights, zero bias.
    add_weight(ps, rng, lvl("syn.", l, "mod.w"), {cfg.style_dim, 2 * cout}, cfg.style_dim, 0.1);
    add_const(ps, lvl("syn.", l, "mod.b"), {2 * cout}, 0.0);
  }
}

// One synthesis block: [upsample] → conv → per-sample scale/shift → lrelu.
Tensor block(const GeneratorConfig& cfg, const Bound& p, int l, const Tensor& x, const Tensor& style) {
  const int c = cfg.channels[l];
  Tensor h = l == 0 ? x : ad::upsample2(x);
  h = ad::conv2d(h, p[lvl("syn.", l, "conv.w")], p[lvl("syn.", l, "conv.b")], 3);
  const Tensor ms = dense(p, lvl("syn.", l, "mod"), style);
  const auto n = style.dim(0);
  const Tensor scale = ad::reshape(ad::affine(ad::slice(ms, 1, 0, c), 1.0, 1.0), {n, 1, 1, c});
  const Tensor shift = ad::reshape(ad::slice(ms, 1, c, 2 * c), {n, 1, 1, c});
  return ad::leaky_relu(ad::add(ad::mul(h, scale), shift));
}

Tensor start(const Bound& p, std::int64_t n) {
  const Tensor& c = p["syn.const"];
  return ad::broadcast_to(c, {n, 4, 4, c.dim(3)});
}

Tensor head(const Bound& p, const Tensor& x) { return ad::conv2d(x, p["head.w"], p["head.b"], 1); }

void check_rows(const Tensor& t, std::int64_t n, std::int64_t cols, const char* what) {
  require(t.valid() && t.rank() == 2 && t.dim(0) == n && t.dim(1) == cols, Errc::dimension_mismatch,
          std::string(what) + " must be [" + std::to_string(n) + "," + std::to_string(cols) + "], got " +
              (t.valid() ? ad::shape_str(t.shape()) : std::string("none")));
}

std::vector<int> disc_widths(const DiscriminatorConfig& cfg, int resolution) {
  int levels = 0;
  for (int r = resolution; r > 4; r /= 2) ++levels;
  std::vector<int> w;
  for (int i = 0; i <= levels; ++i) w.push_back(cfg.channels[std::min<std::size_t>(i, cfg.channels.size() - 1)]);
  return w;
}

}  // namespace

void GeneratorConfig::validate() const {
  require(resolution >= 4 && is_power_of_two(resolution), Errc::invalid_argument,
          "generator resolution must be 4·2^L, got " + std::to_string(resolution));
  int levels = 0;
  for (int r = resolution; r > 4; r /= 2) ++levels;
  require(static_cast<int>(channels.size()) == levels + 1, Errc::invalid_argument,
          "generator needs " + std::to_string(levels + 1) + " channel widths for resolution " +
              std::to_string(resolution) + ", got " + std::to_string(channels.size()));
  for (int c : channels) require(c >= 1, Errc::invalid_argument, "generator channel widths must be positive");
  require(style_dim >= 1 && mapping_layers >= 1 && cg_embed >= 1 && pose_embed >= 1, Errc::invalid_argument,
          "generator mapping sizes must be positive");
}

void DiscriminatorConfig::validate() const {
  require(!channels.empty(), Errc::invalid_argument, "discriminator needs at least one channel width");
  for (int c : channels) require(c >= 1, Errc::invalid_argument, "discriminator channel widths must be positive");
  require(cond_embed >= 1 && hidden >= 1, Errc::invalid_argument, "discriminator sizes must be positive");
}

json to_json(const GeneratorConfig& c) {
  return {{"resolution", c.resolution}, {"channels", c.channels}, {"style_dim", c.style_dim},
          {"mapping_layers", c.mapping_layers}, {"cg_embed", c.cg_embed}, {"pose_embed", c.pose_embed}};
}

json to_json(const DiscriminatorConfig& c) {
  return {{"channels", c.channels}, {"cond_embed", c.cond_embed}, {"hidden", c.hidden}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  try {
    c.resolution = j.value("resolution", c.resolution);
    c.channels = j.value("channels", c.channels);
    c.style_dim = j.value("style_dim", c.style_dim);
    c.mapping_layers = j.value("mapping_layers", c.mapping_layers);
    c.cg_embed = j.value("cg_embed", c.cg_embed);
    c.pose_embed = j.value("pose_embed", c.pose_embed);
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  try {
    c.channels = j.value("channels", c.channels);
    c.cond_embed = j.value("cond_embed", c.cond_embed);
    c.hidden = j.value("hidden", c.hidden);
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("discriminator config: ") + e.what());
  }
  c.validate();
  return c;
}

ParamSet init_geometry_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet ps;
  add_linear(ps, rng, "map.cg", kConditionTypes, cfg.cg_embed);
  add_linear(ps, rng, "map.pose", 69, cfg.pose_embed);
  add_mapping(cfg, ps, rng, kLatentDim + cfg.cg_embed + cfg.pose_embed);
  add_synthesis(cfg, ps, rng);
  add_const(ps, "head.w", {cfg.channels.back(), 3}, 0.0);
  add_const(ps, "head.b", {3}, 0.0);
  return ps;
}

ParamSet init_texture_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet ps;
  add_linear(ps, rng, "map.cg", kConditionTypes, cfg.cg_embed);
  add_mapping(cfg, ps, rng, kLatentDim + cfg.cg_embed + kLatentDim);
  add_synthesis(cfg, ps, rng);
  for (int l = 0; l <= cfg.levels(); ++l) add_const(ps, lvl("syn.", l, "gate"), {1}, 1.0);
  add_weight(ps, rng, "head.w", {cfg.channels.back(), 3}, cfg.channels.back(), 0.1);
  add_const(ps, "head.b", {3}, 0.0);
  return ps;
}

ParamSet init_discriminator(const DiscriminatorConfig& cfg, int resolution, int cond_dim, std::uint64_t seed) {
  cfg.validate();
  require(resolution >= 4 && is_power_of_two(resolution), Errc::invalid_argument,
          "discriminator input must be a power of two ≥ 4, got " + std::to_string(resolution));
  Rng rng(seed);
  ParamSet ps;
  const auto w = disc_widths(cfg, resolution);
  add_linear(ps, rng, "cond", cond_dim, cfg.cond_embed);
  add_weight(ps, rng, "in.w", {9 * (3 + cfg.cond_embed), w[0]}, 9.0 * (3 + cfg.cond_embed));
  add_const(ps, "in.b", {w[0]}, 0.0);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    add_weight(ps, rng, lvl("down", static_cast<int>(i), "w"), {9 * w[i], w[i + 1]}, 9.0 * w[i]);
    add_const(ps, lvl("down", static_cast<int>(i), "b"), {w[i + 1]}, 0.0);
  }
  add_linear(ps, rng, "fc", 16 * w.back(), cfg.hidden);
  add_const(ps, "out.w", {cfg.hidden, 1}, 0.0);
  add_const(ps, "out.b", {1}, 0.0);
  return ps;
}

GeoForward g_geo_forward(const GeneratorConfig& cfg, const Bound& p, const Tensor& z, const Tensor& c_g,
                         const Tensor& pose, const Tensor& mask) {
  require(z.valid() && z.rank() == 2, Errc::dimension_mismatch, "g_geo_forward: z must be [N,512]");
  const auto n = z.dim(0);
  check_rows(z, n, kLatentDim, "z_g");
  check_rows(c_g, n, kConditionTypes, "c_g");
  check_rows(pose, n, 69, "pose");
  require(mask.valid() && mask.shape() == Shape{1, cfg.resolution, cfg.resolution, 1}, Errc::dimension_mismatch,
          "g_geo_forward: mask must be [1," + std::to_string(cfg.resolution) + "," + std::to_string(cfg.resolution) +
              ",1]");
  const Tensor in = ad::concat({z, dense(p, "map.cg", c_g), dense(p, "map.pose", pose)}, 1);
  const Tensor style = mapping(cfg, p, in);
  GeoForward out;
  Tensor h = start(p, n);
  for (int l = 0; l <= cfg.levels(); ++l) {
    h = block(cfg, p, l, h, style);
    out.features.push_back(h);
  }
  out.map = ad::mul(head(p, h), mask);
  return out;
}

Tensor g_tex_forward(const GeneratorConfig& cfg, const Bound& p, const Tensor& z, const Tensor& c_g,
                     const Tensor& c_t, const std::vector<Tensor>* geo) {
  require(z.valid() && z.rank() == 2, Errc::dimension_mismatch, "g_tex_forward: z must be [N,512]");
  const auto n = z.dim(0);
  check_rows(z, n, kLatentDim, "z_t");
  check_rows(c_g, n, kConditionTypes, "c_g");
  check_rows(c_t, n, kLatentDim, "c_t");
  if (geo)
    require(static_cast<int>(geo->size()) == cfg.levels() + 1, Errc::coupling,
            "coupling: expected " + std::to_string(cfg.levels() + 1) + " geometry feature levels, got " +
                std::to_string(geo->size()));
  const Tensor style = mapping(cfg, p, ad::concat({z, dense(p, "map.cg", c_g), c_t}, 1));
  Tensor h = start(p, n);
  for (int l = 0; l <= cfg.levels(); ++l) {
    h = block(cfg, p, l, h, style);
    if (geo) {
      const Tensor& f = (*geo)[static_cast<std::size_t>(l)];
      require(f.valid() && f.shape() == h.shape(), Errc::coupling,
              "coupling: level " + std::to_string(l) + " geometry features " +
                  (f.valid() ? ad::shape_str(f.shape()) : std::string("none")) + " do not match texture block " +
                  ad::shape_str(h.shape()));
      h = ad::add(h, ad::mul(f, ad::reshape(p[lvl("syn.", l, "gate")], {1, 1, 1, 1})));
    }
  }
  return ad::sigmoid(head(p, h));
}

Tensor d_forward(const DiscriminatorConfig& cfg, const Bound& p, const Tensor& x, const Tensor& cond) {
  require(x.valid() && x.rank() == 4 && x.dim(3) == 3 && x.dim(1) == x.dim(2), Errc::dimension_mismatch,
          "discriminator input must be [N,R,R,3], got " + (x.valid() ? ad::shape_str(x.shape()) : std::string("none")));
  const auto n = x.dim(0);
  const auto r = x.dim(1);
  const Tensor& cw = p["cond.w"];
  check_rows(cond, n, cw.dim(0), "discriminator condition");
  const auto w = disc_widths(cfg, static_cast<int>(r));
  const bool depth_ok = (w.size() == 1 || p.tensors.count("down" + std::to_string(w.size() - 2) + ".w")) &&
                        !p.tensors.count("down" + std::to_string(w.size() - 1) + ".w");
  require(depth_ok, Errc::dimension_mismatch,
          "discriminator parameters were built for another input resolution than " + std::to_string(r));
  const Tensor e = ad::leaky_relu(dense(p, "cond", cond));
  const auto ce = e.dim(1);
  const Tensor cmap = ad::broadcast_to(ad::reshape(e, {n, 1, 1, ce}), {n, r, r, ce});
  Tensor h = ad::leaky_relu(ad::conv2d(ad::concat({x, cmap}, 3), p["in.w"], p["in.b"], 3));
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const std::string name = "down" + std::to_string(i);
    h = ad::avgpool2(ad::leaky_relu(ad::conv2d(h, p[name + ".w"], p[name + ".b"], 3)));
  }
  require(h.dim(1) == 4 && p["fc.w"].dim(0) == 16 * h.dim(3), Errc::dimension_mismatch,
          "discriminator parameters were built for another input resolution than " + std::to_string(r));
  h = ad::leaky_relu(dense(p, "fc", ad::reshape(h, {n, 16 * h.dim(3)})));
  return dense(p, "out", h);
}

Tensor mask_tensor(ad::Tape& tape, const Mask& mask) {
  std::vector<double> v(mask.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask.data[i] ? 1.0 : 0.0;
  return tape.constant({1, mask.height, mask.width, 1}, std::move(v));
}

}  // namespace sculpt
