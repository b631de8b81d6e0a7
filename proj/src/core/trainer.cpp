#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "body.hpp"
#include "container.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "renderer.hpp"
#include "rng.hpp"

namespace sculpt {

namespace fs = std::filesystem;
using ad::Bound;
using ad::ParamSet;
using ad::Tape;
using ad::Tensor;

// --- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  generator.validate();
  discriminator.validate();
  require(batch_size >= 1, Errc::invalid_argument, "batch_size must be at least 1");
  require(steps >= 0, Errc::invalid_argument, "steps must be nonnegative");
  require(adam.lr > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
              adam.eps > 0.0,
          Errc::invalid_argument, "invalid Adam hyperparameters");
  require(r1_gamma >= 0.0, Errc::invalid_argument, "r1_gamma must be nonnegative");
  require(ema_kimg >= 0.0 && ema_rampup >= 0.0, Errc::invalid_argument, "ema_kimg and ema_rampup must be nonnegative");
  require(global_disc || patch_disc, Errc::invalid_argument, "at least one texture discriminator must be enabled");
  require(patch_size >= 4 && (patch_size & (patch_size - 1)) == 0, Errc::invalid_argument,
          "patch_size must be a power of two ≥ 4");
  require(patches_per_image >= 1, Errc::invalid_argument, "patches_per_image must be at least 1");
  require(fd_every >= 0 && fd_samples >= 2 && checkpoint_every >= 0, Errc::invalid_argument,
          "invalid logging cadence");
}

json to_json(const TrainConfig& c) {
  return {{"name", c.name},
          {"generator", to_json(c.generator)},
          {"discriminator", to_json(c.discriminator)},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"r1_gamma", c.r1_gamma},
          {"ema_kimg", c.ema_kimg},
          {"ema_rampup", c.ema_rampup},
          {"seed", c.seed},
          {"flip_augment", c.flip_augment},
          {"coupling", c.coupling},
          {"global_disc", c.global_disc},
          {"patch_disc", c.patch_disc},
          {"patch_size", c.patch_size},
          {"patches_per_image", c.patches_per_image},
          {"fd_every", c.fd_every},
          {"fd_samples", c.fd_samples},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j) {
  require(j.is_object(), Errc::format, "training config must be a JSON object");
  TrainConfig c;
  static const char* known[] = {"name",         "generator",    "discriminator", "batch_size", "steps",
                                "lr",           "beta1",        "beta2",         "eps",        "r1_gamma",
                                "seed",         "flip_augment", "coupling",      "global_disc", "patch_disc",
                                "patch_size",   "patches_per_image", "fd_every", "fd_samples", "checkpoint_every",
                                "ema_kimg",     "ema_rampup"};
  for (const auto& [key, value] : j.items())
    require(std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) !=
                std::end(known),
            Errc::format, "training config: unknown key '" + key + "'");
  try {
    c.name = j.value("name", c.name);
    if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
    if (j.contains("discriminator")) c.discriminator = discriminator_config_from_json(j.at("discriminator"));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.r1_gamma = j.value("r1_gamma", c.r1_gamma);
    c.ema_kimg = j.value("ema_kimg", c.ema_kimg);
    c.ema_rampup = j.value("ema_rampup", c.ema_rampup);
    c.seed = j.value("seed", c.seed);
    c.flip_augment = j.value("flip_augment", c.flip_augment);
    c.coupling = j.value("coupling", c.coupling);
    c.global_disc = j.value("global_disc", c.global_disc);
    c.patch_disc = j.value("patch_disc", c.patch_disc);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.patches_per_image = j.value("patches_per_image", c.patches_per_image);
    c.fd_every = j.value("fd_every", c.fd_every);
    c.fd_samples = j.value("fd_samples", c.fd_samples);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) { return train_config_from_json(read_json_file(path)); }

// --- losses -------------------------------------------------------------------

Tensor nonsat_g_loss(const Tensor& fake_logits) { return ad::mean(ad::softplus(ad::neg(fake_logits))); }

Tensor nonsat_d_loss(const Tensor& real_logits, const Tensor& fake_logits) {
  return ad::add(ad::mean(ad::softplus(ad::neg(real_logits))), ad::mean(ad::softplus(fake_logits)));
}

Tensor r1_penalty(const Tensor& real_logits, const Tensor& real, double gamma) {
  require(real.valid() && real.requires_grad(), Errc::invalid_argument, "r1_penalty: real batch must require grad");
  Tape& tape = *real.tape();
  const Tensor g = tape.grad(ad::sum(real_logits), {real}, true)[0];
  const double n = static_cast<double>(real.dim(0));
  return ad::affine(ad::sum(ad::square(g)), 0.5 * gamma / n, 0.0);
}

double pixel_fd(const std::vector<Raster>& real, const std::vector<Raster>& fake) {
  require(real.size() >= 2 && fake.size() >= 2, Errc::invalid_argument, "pixel_fd needs at least two images per side");
  auto features = [](const std::vector<Raster>& imgs) {
    const int h = imgs[0].height;
    const int w = imgs[0].width;
    require(h % 8 == 0 && w % 8 == 0 && imgs[0].channels == 3, Errc::invalid_argument,
            "pixel_fd needs H×W×3 images with sides divisible by 8");
    Eigen::MatrixXd f(static_cast<Eigen::Index>(imgs.size()), 192);
    for (std::size_t n = 0; n < imgs.size(); ++n) {
      const Raster& im = imgs[n];
      require(im.height == h && im.width == w && im.channels == 3, Errc::invalid_argument,
              "pixel_fd images differ in size");
      f.row(static_cast<Eigen::Index>(n)).setZero();
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          for (int c = 0; c < 3; ++c) f(static_cast<Eigen::Index>(n), ((i * 8 / h) * 8 + j * 8 / w) * 3 + c) += im.at(i, j, c);
      f.row(static_cast<Eigen::Index>(n)) /= (h / 8.0) * (w / 8.0);
    }
    return f;
  };
  const Eigen::MatrixXd a = features(real);
  const Eigen::MatrixXd b = features(fake);
  require(a.cols() == b.cols(), Errc::invalid_argument, "pixel_fd real and fake images differ in size");
  auto gaussian = [](const Eigen::MatrixXd& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = f.colwise().mean().transpose();
    const Eigen::MatrixXd c = f.rowwise() - mu.transpose();
    cov = c.transpose() * c / static_cast<double>(f.rows() - 1);
  };
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd s1, s2;
  gaussian(a, mu1, s1);
  gaussian(b, mu2, s2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
  const Eigen::VectorXd l1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root1 = e1.eigenvectors() * l1.asDiagonal() * e1.eigenvectors().transpose();
  const Eigen::MatrixXd m = root1 * s2 * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_root = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_root;
}

// --- checkpoints ------------------------------------------------------------

namespace {

void put_params(Container& c, const std::string& prefix, const ParamSet& ps) {
  for (const auto& [name, p] : ps.items()) c.put_f32(prefix + name, p.shape, std::span<const double>(p.value));
}

void put_adam(Container& c, const std::string& prefix, const ParamSet& ps, const ad::AdamState& st) {
  c.fields()[prefix + "step"] = st.step;
  c.fields()[prefix + "skipped"] = st.skipped;
  for (const auto& [name, m] : st.m) c.put_f32(prefix + "m." + name, ps.at(name).shape, std::span<const double>(m));
  for (const auto& [name, v] : st.v) c.put_f32(prefix + "v." + name, ps.at(name).shape, std::span<const double>(v));
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  Container c("checkpoint");
  c.fields()["stage"] = ck.stage;
  c.fields()["config"] = to_json(ck.config);
  c.fields()["step"] = ck.step;
  c.fields()["data_scale"] = ck.data_scale;
  c.fields()["extra"] = ck.extra;
  put_params(c, "g.", ck.generator);
  put_params(c, "e.", ck.generator_ema);
  put_params(c, "d.", ck.disc);
  put_params(c, "p.", ck.disc_patch);
  put_adam(c, "adam.g.", ck.generator, ck.opt_g);
  put_adam(c, "adam.d.", ck.disc, ck.opt_d);
  put_adam(c, "adam.p.", ck.disc_patch, ck.opt_dp);
  if (ck.mask.height > 0) {
    std::vector<std::uint32_t> m(ck.mask.data.begin(), ck.mask.data.end());
    c.put_u32("mask", {ck.mask.height, ck.mask.width}, m);
  }
  if (fs::exists(dir)) fs::remove_all(dir);
  c.write(dir);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const Container c = Container::read(dir);
  require(c.kind() == "checkpoint", Errc::format, dir.string() + " is not a checkpoint (kind " + c.kind() + ")");
  Checkpoint ck;
  try {
    const json& f = c.fields();
    ck.stage = f.at("stage").get<std::string>();
    ck.config = train_config_from_json(f.at("config"));
    ck.step = f.at("step").get<std::int64_t>();
    ck.data_scale = f.at("data_scale").get<double>();
    ck.extra = f.value("extra", json::object());
    for (auto [prefix, st] : {std::pair{"adam.g.", &ck.opt_g}, std::pair{"adam.d.", &ck.opt_d},
                              std::pair{"adam.p.", &ck.opt_dp}}) {
      st->step = f.value(std::string(prefix) + "step", std::int64_t{0});
      st->skipped = f.value(std::string(prefix) + "skipped", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    fail(Errc::format, dir.string() + ": " + e.what());
  }
  for (const auto& name : c.names()) {
    if (name == "mask") {
      const auto& s = c.shape("mask");
      require(s.size() == 2, Errc::format, "checkpoint mask must be 2-D");
      ck.mask = Mask(static_cast<int>(s[0]), static_cast<int>(s[1]));
      const auto m = c.get_u32("mask");
      for (std::size_t i = 0; i < m.size(); ++i) ck.mask.data[i] = m[i] ? 1 : 0;
      continue;
    }
    const auto values = c.get_f32(name);
    const auto& shape = c.shape(name);
    const std::pair<const char*, ParamSet*> psets[] = {
        {"g.", &ck.generator}, {"e.", &ck.generator_ema}, {"d.", &ck.disc}, {"p.", &ck.disc_patch}};
    bool matched = false;
    for (const auto& [prefix, ps] : psets)
      if (starts_with(name, prefix)) {
        ps->add(name.substr(2), shape, values);
        matched = true;
      }
    if (matched) continue;
    const std::pair<const char*, ad::AdamState*> states[] = {
        {"adam.g.", &ck.opt_g}, {"adam.d.", &ck.opt_d}, {"adam.p.", &ck.opt_dp}};
    for (const auto& [prefix, st] : states) {
      if (!starts_with(name, prefix)) continue;
      const std::string rest = name.substr(std::string(prefix).size());
      if (starts_with(rest, "m."))
        st->m[rest.substr(2)] = values;
      else if (starts_with(rest, "v."))
        st->v[rest.substr(2)] = values;
      else
        fail(Errc::format, "checkpoint: unexpected array " + name);
      matched = true;
    }
    require(matched, Errc::format, "checkpoint: unexpected array " + name);
  }
  if (ck.generator_ema.count() == 0) ck.generator_ema = ck.generator;
  return ck;
}

std::uint64_t checkpoint_file_hash(const fs::path& dir) {
  require(fs::is_directory(dir), Errc::io, "checkpoint directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    h = fnv1a64(name.data(), name.size(), h);
    const auto bytes = read_file_bytes(f);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

// --- shared helpers -----------------------------------------------------------

namespace {

constexpr int kPoseDims = 69;

// ema ← g + β(ema − g) with β = 0.5^(batch / half-life in images).
void update_ema(ParamSet& ema, const ParamSet& g, const TrainConfig& cfg, std::int64_t step) {
  const double seen = static_cast<double>(step) * cfg.batch_size;
  double half_life = cfg.ema_kimg * 1000.0;
  if (cfg.ema_rampup > 0.0) half_life = std::min(half_life, seen * cfg.ema_rampup);
  const double beta = half_life > 0.0 ? std::pow(0.5, cfg.batch_size / half_life) : 0.0;
  for (auto& [name, p] : ema.items()) {
    const auto& src = g.at(name).value;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = src[i] + beta * (p.value[i] - src[i]);
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return fnv1a64(&stream, sizeof stream, fnv1a64(&seed, sizeof seed));
}

std::vector<double> normals(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<double> one_hot_rows(const std::vector<int>& codes) {
  std::vector<double> v(codes.size() * kConditionTypes, 0.0);
  for (std::size_t i = 0; i < codes.size(); ++i) v[i * kConditionTypes + static_cast<std::size_t>(codes[i])] = 1.0;
  return v;
}

std::map<std::string, std::vector<double>> grads_by_name(const Bound& bound, const std::vector<Tensor>& grads,
                                                         const std::vector<std::string>& skip = {}) {
  std::map<std::string, std::vector<double>> out;
  std::size_t k = 0;
  for (const auto& [name, t] : bound.tensors) {
    if (std::find(skip.begin(), skip.end(), name) == skip.end()) out.emplace(name, grads[k].value());
    ++k;
  }
  return out;
}

std::size_t count_off_mask(const std::vector<double>& maps, const Mask& mask) {
  const std::size_t texels = mask.data.size();
  std::size_t bad = 0;
  for (std::size_t i = 0; i < maps.size(); ++i)
    if (!mask.data[(i / 3) % texels] && maps[i] != 0.0) ++bad;
  return bad;
}

std::string csv_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_metrics(const fs::path& out_dir, const std::vector<StepLog>& log) {
  write_text_file(out_dir / "metrics.csv", metrics_csv(log));
}

struct GeoData {
  std::vector<std::vector<double>> maps;  // normalized, R·R·3
  std::vector<std::array<double, kPoseDims>> theta;
  std::vector<int> label;
  std::vector<int> categories;  // distinct labels present
  Mask mask;
  double scale = 1.0;
  int resolution = 0;
};

std::vector<int> distinct(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

GeoData load_geometry_data(const fs::path& dir, int resolution) {
  const DatasetInfo info = read_dataset_info(dir);
  require(info.kind == "geometry", Errc::invalid_argument, dir.string() + " is not a geometry dataset");
  const auto records = read_geometry_index(dir);
  require(!records.empty(), Errc::invalid_argument, "geometry dataset " + dir.string() + " is empty");
  GeoData d;
  d.resolution = resolution;
  d.mask = Mask(resolution, resolution);
  double max_abs = 0.0;
  for (const auto& r : records) {
    DispMap m = load_dispmap(dir / r.dispmap);
    require(m.resolution() == resolution, Errc::invalid_argument,
            "dataset map " + r.dispmap + " is " + std::to_string(m.resolution()) + "² but the generator makes " +
                std::to_string(resolution) + "²");
    for (std::size_t t = 0; t < d.mask.data.size(); ++t) d.mask.data[t] |= m.mask.data[t];
    for (double x : m.values.data) max_abs = std::max(max_abs, std::abs(x));
    d.maps.push_back(std::move(m.values.data));
    d.theta.push_back(r.theta);
    d.label.push_back(static_cast<int>(decode_clothing_type(r.c_g)));
  }
  d.scale = max_abs > 0.0 ? max_abs : 1.0;
  for (auto& m : d.maps)
    for (double& x : m) x /= d.scale;
  d.categories = distinct(d.label);
  return d;
}

std::vector<double> geo_condition(const std::vector<int>& codes, const std::vector<std::array<double, kPoseDims>>& th) {
  std::vector<double> v;
  v.reserve(codes.size() * (kConditionTypes + kPoseDims));
  const auto oh = one_hot_rows(codes);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    v.insert(v.end(), oh.begin() + static_cast<std::ptrdiff_t>(i * kConditionTypes),
             oh.begin() + static_cast<std::ptrdiff_t>((i + 1) * kConditionTypes));
    v.insert(v.end(), th[i].begin(), th[i].end());
  }
  return v;
}

std::vector<double> flatten_theta(const std::vector<std::array<double, kPoseDims>>& th) {
  std::vector<double> v;
  for (const auto& t : th) v.insert(v.end(), t.begin(), t.end());
  return v;
}

struct GeoBatch {
  std::vector<double> z;
  std::vector<int> codes;
  std::vector<std::array<double, kPoseDims>> theta;
};

GeoForward run_geo(Tape& tape, const GeneratorConfig& cfg, const Bound& g, const GeoBatch& b, const Mask& mask) {
  const auto n = static_cast<std::int64_t>(b.codes.size());
  return g_geo_forward(cfg, g, tape.constant({n, kLatentDim}, b.z), tape.constant({n, kConditionTypes}, one_hot_rows(b.codes)),
                       tape.constant({n, kPoseDims}, flatten_theta(b.theta)), mask_tensor(tape, mask));
}

}  // namespace

std::string metrics_csv(const std::vector<StepLog>& log) {
  std::string s = "step,d_loss,g_loss,r1,pixel_fd,mask_violations\n";
  for (const auto& l : log) {
    s += std::to_string(l.step) + "," + csv_number(l.d_loss) + "," + csv_number(l.g_loss) + "," + csv_number(l.r1) +
         "," + (l.pixel_fd >= 0.0 ? csv_number(l.pixel_fd) : std::string()) + "," + std::to_string(l.mask_violations) +
         "\n";
  }
  return s;
}

// --- stage 1 -----------------------------------------------------------------------

TrainResult train_geometry(const TrainConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                           const ProgressFn& progress) {
  cfg.validate();
  const GeoData data = load_geometry_data(data_dir, cfg.generator.resolution);
  const int r = cfg.generator.resolution;
  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  const std::int64_t b = cfg.batch_size;
  const int cond_dim = kConditionTypes + kPoseDims;

  Checkpoint ck;
  ck.stage = "geometry";
  ck.config = cfg;
  ck.generator = init_geometry_generator(cfg.generator, derive_seed(cfg.seed, 1));
  ck.generator_ema = ck.generator;
  ck.disc = init_discriminator(cfg.discriminator, r, cond_dim, derive_seed(cfg.seed, 2));
  ck.data_scale = data.scale;
  ck.mask = data.mask;
  ck.extra = {{"categories", data.categories}};

  fs::create_directories(out_dir);
  TrainResult res;
  Rng rng(derive_seed(cfg.seed, 3));

  auto sample_fakes = [&](Rng& g, std::size_t n) {
    GeoBatch fb;
    fb.z = normals(g, n * kLatentDim);
    for (std::size_t i = 0; i < n; ++i) {
      fb.codes.push_back(data.categories[g.below(data.categories.size())]);
      fb.theta.push_back(data.theta[g.below(data.theta.size())]);
    }
    return fb;
  };

  auto fd_now = [&](std::int64_t step) {
    Rng g(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(step)));
    const auto n = static_cast<std::size_t>(cfg.fd_samples);
    std::vector<Raster> real, fake;
    for (std::size_t i = 0; i < n; ++i) {
      Raster im(r, r, 3);
      im.data = data.maps[g.below(data.maps.size())];
      real.push_back(std::move(im));
    }
    const GeoBatch fb = sample_fakes(g, n);
    Tape tape;
    const Bound gp = ad::bind(tape, ck.generator_ema, false);
    const Tensor m = run_geo(tape, cfg.generator, gp, fb, data.mask).map;
    const std::size_t per = static_cast<std::size_t>(r) * r * 3;
    for (std::size_t i = 0; i < n; ++i) {
      Raster im(r, r, 3);
      im.data.assign(m.value().begin() + static_cast<std::ptrdiff_t>(i * per),
                     m.value().begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
      fake.push_back(std::move(im));
    }
    return pixel_fd(real, fake);
  };

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    StepLog log;
    log.step = step;

    // Discriminator step.
    std::vector<double> real_vals;
    std::vector<int> real_codes;
    std::vector<std::array<double, kPoseDims>> real_theta;
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto k = rng.below(data.maps.size());
      real_vals.insert(real_vals.end(), data.maps[k].begin(), data.maps[k].end());
      real_codes.push_back(data.label[k]);
      real_theta.push_back(data.theta[k]);
    }
    GeoBatch fb = sample_fakes(rng, bsz);
    {
      Tape tape;
      const Bound gp = ad::bind(tape, ck.generator, false);
      const Bound dp = ad::bind(tape, ck.disc, true);
      const Tensor fake = run_geo(tape, cfg.generator, gp, fb, data.mask).map;
      log.mask_violations += count_off_mask(fake.value(), data.mask);
      const Tensor real = tape.variable({b, r, r, 3}, real_vals);
      const Tensor lr = d_forward(cfg.discriminator, dp, real, tape.constant({b, cond_dim}, geo_condition(real_codes, real_theta)));
      const Tensor lf = d_forward(cfg.discriminator, dp, fake, tape.constant({b, cond_dim}, geo_condition(fb.codes, fb.theta)));
      Tensor loss = nonsat_d_loss(lr, lf);
      log.d_loss = loss.item();
      if (cfg.r1_gamma > 0.0) {
        const Tensor r1 = r1_penalty(lr, real, cfg.r1_gamma);
        log.r1 = r1.item();
        loss = ad::add(loss, r1);
      }
      const auto grads = tape.grad(loss, dp.list());
      ad::adam_step(ck.disc, grads_by_name(dp, grads), ck.opt_d, cfg.adam);
    }

    // Generator step.
    fb = sample_fakes(rng, bsz);
    {
      Tape tape;
      const Bound gp = ad::bind(tape, ck.generator, true);
      const Bound dp = ad::bind(tape, ck.disc, false);
      const Tensor fake = run_geo(tape, cfg.generator, gp, fb, data.mask).map;
      log.mask_violations += count_off_mask(fake.value(), data.mask);
      const Tensor lf = d_forward(cfg.discriminator, dp, fake, tape.constant({b, cond_dim}, geo_condition(fb.codes, fb.theta)));
      const Tensor loss = nonsat_g_loss(lf);
      log.g_loss = loss.item();
      const auto grads = tape.grad(loss, gp.list());
      ad::adam_step(ck.generator, grads_by_name(gp, grads), ck.opt_g, cfg.adam);
    }
    update_ema(ck.generator_ema, ck.generator, cfg, step);

    ck.step = step;
    if ((cfg.fd_every > 0 && step % cfg.fd_every == 0) || step == cfg.steps) log.pixel_fd = fd_now(step);
    res.mask_violations += log.mask_violations;
    res.log.push_back(log);
    if (progress) progress(log);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      save_checkpoint(ck, out_dir / ("checkpoint_" + std::to_string(step)));
      write_metrics(out_dir, res.log);
    }
  }
  res.skipped_steps = ck.opt_g.skipped + ck.opt_d.skipped;
  save_checkpoint(ck, out_dir / "checkpoint");
  write_metrics(out_dir, res.log);
  res.checkpoint = std::move(ck);
  return res;
}

// --- stage 2 -----------------------------------------------------------------------

namespace {

struct TexData {
  std::vector<Raster> images;  // H×W×3 in [0,1]
  std::vector<Mask> alpha;
  std::vector<int> label;
  std::vector<std::vector<double>> c_t;
  std::vector<std::array<double, kPoseDims>> theta;
  int resolution = 0;
};

TexData load_texture_data(const fs::path& dir) {
  const DatasetInfo info = read_dataset_info(dir);
  require(info.kind == "texture", Errc::invalid_argument, dir.string() + " is not a texture dataset");
  const auto records = read_texture_index(dir);
  require(!records.empty(), Errc::invalid_argument, "texture dataset " + dir.string() + " is empty");
  TexData d;
  d.resolution = info.resolution;
  for (const auto& r : records) {
    const Raster rgba = read_png_unit(dir / r.image);
    require(rgba.channels == 4 && rgba.height == info.resolution && rgba.width == info.resolution, Errc::format,
            r.image + " must be an RGBA image of the dataset resolution");
    Raster rgb(rgba.height, rgba.width, 3);
    Mask a(rgba.height, rgba.width);
    for (std::size_t t = 0; t < rgba.texels(); ++t) {
      for (int c = 0; c < 3; ++c) rgb.data[3 * t + c] = rgba.data[4 * t + c];
      a.data[t] = rgba.data[4 * t + 3] > 0.5 ? 1 : 0;
    }
    d.images.push_back(std::move(rgb));
    d.alpha.push_back(std::move(a));
    d.label.push_back(static_cast<int>(decode_clothing_type(r.c_g)));
    d.c_t.push_back(r.c_t);
    d.theta.push_back(r.theta);
  }
  return d;
}

// Rows of the patch crop map: output row (k, i, j) reads image pixel
// (corner + (i, j)) of sample k / per_image.
std::shared_ptr<ad::SparseRows> patch_map(const std::vector<std::pair<int, int>>& corners, int per_image, int h, int w,
                                          int size, std::int64_t images) {
  auto m = std::make_shared<ad::SparseRows>();
  m->in_rows = images * h * w;
  m->out_rows = static_cast<std::int64_t>(corners.size()) * size * size;
  m->offsets.reserve(static_cast<std::size_t>(m->out_rows) + 1);
  for (std::size_t k = 0; k < corners.size(); ++k) {
    const std::int64_t img = static_cast<std::int64_t>(k) / per_image;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        m->offsets.push_back(static_cast<std::uint32_t>(m->index.size()));
        m->index.push_back(static_cast<std::uint32_t>((img * h + corners[k].first + i) * w + corners[k].second + j));
        m->weight.push_back(1.0);
      }
  }
  m->offsets.push_back(static_cast<std::uint32_t>(m->index.size()));
  return m;
}

std::vector<double> tex_condition(const std::vector<int>& codes, const std::vector<const std::vector<double>*>& ct,
                                  int repeat) {
  std::vector<double> v;
  const auto oh = one_hot_rows(codes);
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (int k = 0; k < repeat; ++k) {
      v.insert(v.end(), oh.begin() + static_cast<std::ptrdiff_t>(i * kConditionTypes),
               oh.begin() + static_cast<std::ptrdiff_t>((i + 1) * kConditionTypes));
      v.insert(v.end(), ct[i]->begin(), ct[i]->end());
    }
  return v;
}

std::vector<std::string> gate_names(const GeneratorConfig& cfg) {
  std::vector<std::string> out;
  for (int l = 0; l <= cfg.levels(); ++l) out.push_back("syn." + std::to_string(l) + ".gate");
  return out;
}

Raster displacement_values(const std::vector<double>& maps, std::size_t index, int r, double scale) {
  Raster out(r, r, 3);
  const std::size_t per = static_cast<std::size_t>(r) * r * 3;
  for (std::size_t i = 0; i < per; ++i) out.data[i] = maps[index * per + i] * scale;
  return out;
}

}  // namespace

TrainResult train_texture(const TrainConfig& cfg, const fs::path& geo_ckpt, const fs::path& data_dir,
                          const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  TrainResult res;
  res.geometry_file_hash_before = checkpoint_file_hash(geo_ckpt);
  const Checkpoint geo = load_checkpoint(geo_ckpt);
  require(geo.stage == "geometry", Errc::invalid_argument, geo_ckpt.string() + " is not a geometry checkpoint");
  const GeneratorConfig& gcfg = cfg.generator;
  require(geo.config.generator.resolution == gcfg.resolution && geo.config.generator.channels == gcfg.channels,
          Errc::invalid_argument,
          "geometry checkpoint generator (resolution " + std::to_string(geo.config.generator.resolution) +
              ") does not match the texture generator blocks");
  require(geo.mask.height == gcfg.resolution, Errc::invalid_argument, "geometry checkpoint has no matching UV mask");
  res.geometry_hash_before = geo.generator_ema.hash();

  const TexData data = load_texture_data(data_dir);
  const DatasetInfo info = read_dataset_info(data_dir);
  const BodyModel model = load_body_model(data_dir / info.body);
  const UvAtlas atlas = model.atlas(gcfg.resolution);
  require(!info.camera.empty(), Errc::format, "texture dataset has no camera");
  const Camera camera = load_camera(data_dir / info.camera);
  const int h = data.resolution;
  const int w = data.resolution;
  const int t = gcfg.resolution;
  require(!cfg.patch_disc || cfg.patch_size <= h, Errc::invalid_argument,
          "patch_size " + std::to_string(cfg.patch_size) + " exceeds render size " + std::to_string(h));
  const int cond_dim = kConditionTypes + kLatentDim;
  const int kp = cfg.patches_per_image;
  const int ps = cfg.patch_size;

  Checkpoint ck;
  ck.stage = "texture";
  ck.config = cfg;
  ck.generator = init_texture_generator(gcfg, derive_seed(cfg.seed, 11));
  const auto gates = gate_names(gcfg);
  if (!cfg.coupling)
    for (const auto& g : gates) ck.generator.at(g).value.assign(1, 0.0);
  ck.generator_ema = ck.generator;
  if (cfg.global_disc) ck.disc = init_discriminator(cfg.discriminator, h, cond_dim, derive_seed(cfg.seed, 12));
  if (cfg.patch_disc) ck.disc_patch = init_discriminator(cfg.discriminator, ps, cond_dim, derive_seed(cfg.seed, 13));
  ck.data_scale = geo.data_scale;
  ck.mask = geo.mask;
  ck.extra = {{"geometry_checkpoint", fs::absolute(geo_ckpt).string()},
              {"geometry_hash", std::to_string(res.geometry_hash_before)}};
  const std::vector<std::string> frozen = cfg.coupling ? std::vector<std::string>{} : gates;

  fs::create_directories(out_dir);
  Rng rng(derive_seed(cfg.seed, 14));
  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  const std::int64_t b = cfg.batch_size;
  const BodyShape shape = BodyShape::zeros(model.num_betas());
  const Raster blank(t, t, 3);

  struct Fakes {
    std::vector<std::vector<double>> feature_values;
    std::vector<ad::Shape> feature_shapes;
    std::vector<double> z_t;
    std::vector<int> codes;
    std::vector<const std::vector<double>*> c_t;
    std::shared_ptr<ad::SparseRows> render_map;
    std::vector<double> background;  // [B·H·W, 3]
    std::vector<Mask> alpha;
    std::size_t violations = 0;
  };

  // Samples conditions, runs the frozen geometry generator, poses and
  // rasterizes every body. Texture enters later through render_map.
  auto make_fakes = [&](Rng& g, std::size_t n) {
    Fakes f;
    GeoBatch gb;
    gb.z = normals(g, n * kLatentDim);
    f.z_t = normals(g, n * kLatentDim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = g.below(data.images.size());
      gb.codes.push_back(data.label[k]);
      gb.theta.push_back(data.theta[k]);
      f.codes.push_back(data.label[k]);
      f.c_t.push_back(&data.c_t[k]);
    }
    Tape tape;
    const Bound gp = ad::bind(tape, geo.generator_ema, false);
    const GeoForward out = run_geo(tape, gcfg, gp, gb, geo.mask);
    f.violations = count_off_mask(out.map.value(), geo.mask);
    for (const auto& feat : out.features) {
      f.feature_values.push_back(feat.value());
      f.feature_shapes.push_back(feat.shape());
    }
    auto map = std::make_shared<ad::SparseRows>();
    map->in_rows = static_cast<std::int64_t>(n) * t * t;
    map->out_rows = static_cast<std::int64_t>(n) * h * w;
    f.background.assign(static_cast<std::size_t>(map->out_rows) * 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      DispMap dm;
      dm.values = displacement_values(out.map.value(), i, t, geo.data_scale);
      dm.mask = geo.mask;
      Pose pose;
      pose.body = gb.theta[i];
      const ClothedMesh mesh = pose_clothed_body(model, shape, pose, dm, atlas);
      const RenderOutput ro = render(mesh, atlas, blank, camera);
      const auto& tp = ro.tape;
      for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
        map->offsets.push_back(static_cast<std::uint32_t>(map->index.size()));
        for (auto e = tp.offsets[p]; e < tp.offsets[p + 1]; ++e) {
          map->index.push_back(static_cast<std::uint32_t>(i * t * t + tp.texels[e]));
          map->weight.push_back(tp.weights[e]);
        }
        if (!ro.alpha.data[p])
          for (int c = 0; c < 3; ++c) f.background[(i * h * w + p) * 3 + c] = 1.0;
      }
      f.alpha.push_back(ro.alpha);
    }
    map->offsets.push_back(static_cast<std::uint32_t>(map->index.size()));
    f.render_map = map;
    return f;
  };

  auto texture_forward = [&](Tape& tape, const Bound& gp, const Fakes& f) {
    const auto n = static_cast<std::int64_t>(f.codes.size());
    std::vector<Tensor> feats;
    for (std::size_t l = 0; l < f.feature_values.size(); ++l)
      feats.push_back(tape.constant(f.feature_shapes[l], f.feature_values[l]));
    std::vector<double> ct;
    for (const auto* v : f.c_t) ct.insert(ct.end(), v->begin(), v->end());
    return g_tex_forward(gcfg, gp, tape.constant({n, kLatentDim}, f.z_t),
                         tape.constant({n, kConditionTypes}, one_hot_rows(f.codes)), tape.constant({n, kLatentDim}, ct),
                         &feats);
  };

  auto render_forward = [&](Tape& tape, const Tensor& tex, const Fakes& f) {
    const auto n = static_cast<std::int64_t>(f.codes.size());
    const Tensor rows = ad::gather_rows(ad::reshape(tex, {n * t * t, 3}), f.render_map);
    const Tensor img = ad::add(rows, tape.constant({n * h * w, 3}, f.background));
    return ad::reshape(img, {n, h, w, 3});
  };

  auto fd_now = [&](std::int64_t step) {
    Rng g(derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(step)));
    const auto n = static_cast<std::size_t>(cfg.fd_samples);
    std::vector<Raster> real, fake;
    for (std::size_t i = 0; i < n; ++i) real.push_back(data.images[g.below(data.images.size())]);
    const Fakes f = make_fakes(g, n);
    Tape tape;
    const Bound gp = ad::bind(tape, ck.generator_ema, false);
    const Tensor img = render_forward(tape, texture_forward(tape, gp, f), f);
    const std::size_t per = static_cast<std::size_t>(h) * w * 3;
    for (std::size_t i = 0; i < n; ++i) {
      Raster im(h, w, 3);
      im.data.assign(img.value().begin() + static_cast<std::ptrdiff_t>(i * per),
                     img.value().begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
      fake.push_back(std::move(im));
    }
    return pixel_fd(real, fake);
  };

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    StepLog log;
    log.step = step;

    // Real batch, optionally mirrored.
    std::vector<double> real_vals;
    std::vector<int> real_codes;
    std::vector<const std::vector<double>*> real_ct;
    std::vector<std::pair<int, int>> real_corners;
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto k = rng.below(data.images.size());
      Raster im = data.images[k];
      Mask a = data.alpha[k];
      if (cfg.flip_augment && rng.below(2) == 1) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w / 2; ++x) {
            for (int c = 0; c < 3; ++c) std::swap(im.at(y, x, c), im.at(y, w - 1 - x, c));
            std::swap(a.at(y, x), a.at(y, w - 1 - x));
          }
      }
      real_vals.insert(real_vals.end(), im.data.begin(), im.data.end());
      real_codes.push_back(data.label[k]);
      real_ct.push_back(&data.c_t[k]);
      if (cfg.patch_disc) {
        const auto c = sample_patch_corners(a, kp, ps, rng);
        real_corners.insert(real_corners.end(), c.begin(), c.end());
      }
    }
    const Fakes f = make_fakes(rng, bsz);
    log.mask_violations = f.violations;
    std::vector<std::pair<int, int>> fake_corners;
    if (cfg.patch_disc)
      for (std::size_t i = 0; i < bsz; ++i) {
        const auto c = sample_patch_corners(f.alpha[i], kp, ps, rng);
        fake_corners.insert(fake_corners.end(), c.begin(), c.end());
      }
    const auto real_patch_map = cfg.patch_disc ? patch_map(real_corners, kp, h, w, ps, b) : nullptr;
    const auto fake_patch_map = cfg.patch_disc ? patch_map(fake_corners, kp, h, w, ps, b) : nullptr;
    const auto real_cond = tex_condition(real_codes, real_ct, 1);
    const auto fake_cond = tex_condition(f.codes, f.c_t, 1);
    const auto real_cond_p = tex_condition(real_codes, real_ct, kp);
    const auto fake_cond_p = tex_condition(f.codes, f.c_t, kp);
    const std::int64_t np = b * kp;

    // Discriminator step.
    {
      Tape tape;
      const Bound gp = ad::bind(tape, ck.generator, false);
      Tensor fake_img;
      {
        const Tensor tex = texture_forward(tape, gp, f);
        fake_img = render_forward(tape, tex, f);
      }
      Tensor loss = tape.scalar(0.0);
      Tensor r1 = tape.scalar(0.0);
      Bound dg, dpch;
      if (cfg.global_disc) {
        dg = ad::bind(tape, ck.disc, true);
        const Tensor real = tape.variable({b, h, w, 3}, real_vals);
        const Tensor lr = d_forward(cfg.discriminator, dg, ad::affine(real, 2.0, -1.0), tape.constant({b, cond_dim}, real_cond));
        const Tensor lf =
            d_forward(cfg.discriminator, dg, ad::affine(fake_img, 2.0, -1.0), tape.constant({b, cond_dim}, fake_cond));
        loss = ad::add(loss, nonsat_d_loss(lr, lf));
        if (cfg.r1_gamma > 0.0) r1 = ad::add(r1, r1_penalty(lr, real, cfg.r1_gamma));
      }
      if (cfg.patch_disc) {
        dpch = ad::bind(tape, ck.disc_patch, true);
        Tensor real_rows;
        {
          Tape::NoGradGuard ng(tape);
          real_rows = ad::gather_rows(tape.constant({b * h * w, 3}, real_vals), real_patch_map);
        }
        const Tensor real_p = tape.variable({np, ps, ps, 3}, real_rows.value());
        const Tensor fake_p =
            ad::reshape(ad::gather_rows(ad::reshape(fake_img, {b * h * w, 3}), fake_patch_map), {np, ps, ps, 3});
        const Tensor lr =
            d_forward(cfg.discriminator, dpch, ad::affine(real_p, 2.0, -1.0), tape.constant({np, cond_dim}, real_cond_p));
        const Tensor lf =
            d_forward(cfg.discriminator, dpch, ad::affine(fake_p, 2.0, -1.0), tape.constant({np, cond_dim}, fake_cond_p));
        loss = ad::add(loss, nonsat_d_loss(lr, lf));
        if (cfg.r1_gamma > 0.0) r1 = ad::add(r1, r1_penalty(lr, real_p, cfg.r1_gamma));
      }
      log.d_loss = loss.item();
      log.r1 = r1.item();
      const Tensor total = ad::add(loss, r1);
      std::vector<Tensor> wrt = dg.list();
      const std::size_t split = wrt.size();
      for (const auto& x : dpch.list()) wrt.push_back(x);
      const auto g = tape.grad(total, wrt);
      if (cfg.global_disc)
        ad::adam_step(ck.disc, grads_by_name(dg, {g.begin(), g.begin() + static_cast<std::ptrdiff_t>(split)}),
                      ck.opt_d, cfg.adam);
      if (cfg.patch_disc)
        ad::adam_step(ck.disc_patch, grads_by_name(dpch, {g.begin() + static_cast<std::ptrdiff_t>(split), g.end()}),
                      ck.opt_dp, cfg.adam);
    }

    // Generator step on the same bundle.
    {
      Tape tape;
      const Bound gp = ad::bind(tape, ck.generator, true);
      const Tensor fake_img = render_forward(tape, texture_forward(tape, gp, f), f);
      Tensor loss = tape.scalar(0.0);
      if (cfg.global_disc) {
        const Bound dg = ad::bind(tape, ck.disc, false);
        loss = ad::add(loss, nonsat_g_loss(d_forward(cfg.discriminator, dg, ad::affine(fake_img, 2.0, -1.0),
                                                     tape.constant({b, cond_dim}, fake_cond))));
      }
      if (cfg.patch_disc) {
        const Bound dpch = ad::bind(tape, ck.disc_patch, false);
        const Tensor fake_p =
            ad::reshape(ad::gather_rows(ad::reshape(fake_img, {b * h * w, 3}), fake_patch_map), {np, ps, ps, 3});
        loss = ad::add(loss, nonsat_g_loss(d_forward(cfg.discriminator, dpch, ad::affine(fake_p, 2.0, -1.0),
                                                     tape.constant({np, cond_dim}, fake_cond_p))));
      }
      log.g_loss = loss.item();
      const auto grads = tape.grad(loss, gp.list());
      ad::adam_step(ck.generator, grads_by_name(gp, grads, frozen), ck.opt_g, cfg.adam);
    }
    update_ema(ck.generator_ema, ck.generator, cfg, step);

    ck.step = step;
    if ((cfg.fd_every > 0 && step % cfg.fd_every == 0) || step == cfg.steps) log.pixel_fd = fd_now(step);
    res.mask_violations += log.mask_violations;
    res.log.push_back(log);
    if (progress) progress(log);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      save_checkpoint(ck, out_dir / ("checkpoint_" + std::to_string(step)));
      write_metrics(out_dir, res.log);
    }
  }
  res.skipped_steps = ck.opt_g.skipped + ck.opt_d.skipped + ck.opt_dp.skipped;
  save_checkpoint(ck, out_dir / "checkpoint");
  write_metrics(out_dir, res.log);
  res.geometry_hash_after = geo.generator_ema.hash();
  res.geometry_file_hash_after = checkpoint_file_hash(geo_ckpt);
  res.checkpoint = std::move(ck);
  return res;
}

// --- ablations -----------------------------------------------------------------

std::vector<std::pair<std::string, TrainConfig>> ablation_matrix(const TrainConfig& base) {
  auto make = [&](const char* name, bool coupling, bool global, bool patch, int size) {
    TrainConfig c = base;
    c.name = std::string(base.name) + "_" + name;
    c.coupling = coupling;
    c.global_disc = global;
    c.patch_disc = patch;
    c.patch_size = size;
    return std::pair<std::string, TrainConfig>{name, c};
  };
  return {
      make("a", false, true, true, 64),  // full model without geometry conditioning
      make("b", true, true, false, 64),  // only global discriminator
      make("c", true, false, true, 32),  // only patch discriminator, 32×32
      make("d", true, false, true, 64),  // only patch discriminator, 64×64
      make("e", true, true, true, 32),   // global + patch 32×32
      make("f", true, true, true, 64),   // global + patch 64×64
  };
}

void write_ablation_configs(const TrainConfig& base, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, cfg] : ablation_matrix(base)) write_json_file(dir / (name + ".json"), to_json(cfg));
}

// --- sampling -------------------------------------------------------------------

DispMap sample_geometry(const Checkpoint& geo, ClothingType type, const std::array<double, 69>& theta,
                        std::uint64_t seed) {
  require(geo.stage == "geometry", Errc::invalid_argument, "sample_geometry needs a geometry checkpoint");
  Rng rng(seed);
  GeoBatch gb;
  gb.z = normals(rng, kLatentDim);
  gb.codes = {static_cast<int>(type)};
  gb.theta = {theta};
  Tape tape;
  const Bound gp = ad::bind(tape, geo.generator_ema, false);
  const Tensor m = run_geo(tape, geo.config.generator, gp, gb, geo.mask).map;
  DispMap out;
  out.values = displacement_values(m.value(), 0, geo.config.generator.resolution, geo.data_scale);
  out.mask = geo.mask;
  return out;
}

TextureSample sample_texture(const Checkpoint& geo, const Checkpoint& tex, ClothingType type,
                             const std::vector<double>& c_t, const std::array<double, 69>& theta, std::uint64_t seed) {
  require(geo.stage == "geometry" && tex.stage == "texture", Errc::invalid_argument,
          "sample_texture needs a geometry and a texture checkpoint");
  require(c_t.size() == kLatentDim, Errc::dimension_mismatch, "c_t must have 512 entries");
  Rng rng(seed);
  GeoBatch gb;
  gb.z = normals(rng, kLatentDim);
  gb.codes = {static_cast<int>(type)};
  gb.theta = {theta};
  const auto z_t = normals(rng, kLatentDim);
  Tape tape;
  const Bound gp = ad::bind(tape, geo.generator_ema, false);
  const GeoForward g = run_geo(tape, geo.config.generator, gp, gb, geo.mask);
  const Bound tp = ad::bind(tape, tex.generator_ema, false);
  const GeneratorConfig& cfg = tex.config.generator;
  const Tensor out = g_tex_forward(cfg, tp, tape.constant({1, kLatentDim}, z_t),
                                   tape.constant({1, kConditionTypes}, one_hot_rows(gb.codes)),
                                   tape.constant({1, kLatentDim}, c_t), &g.features);
  TextureSample s;
  s.texture = Raster(cfg.resolution, cfg.resolution, 3);
  s.texture.data = out.value();
  s.dispmap.values = displacement_values(g.map.value(), 0, geo.config.generator.resolution, geo.data_scale);
  s.dispmap.mask = geo.mask;
  return s;
}

// --- evaluation -----------------------------------------------------------------

std::vector<ModeGap> geometry_mode_gaps(const Checkpoint& geo, const fs::path& data_dir, int samples,
                                        std::uint64_t seed) {
  require(geo.stage == "geometry", Errc::invalid_argument, "geometry_mode_gaps needs a geometry checkpoint");
  require(samples > 0, Errc::invalid_argument, "samples must be positive");
  const int r = geo.config.generator.resolution;
  const GeoData data = load_geometry_data(data_dir, r);
  const std::size_t per = static_cast<std::size_t>(r) * r * 3;
  Rng rng(seed);
  std::vector<ModeGap> out;
  for (int cat : data.categories) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.label.size(); ++i)
      if (data.label[i] == cat) members.push_back(i);
    std::vector<double> data_mean(per, 0.0), gen_mean(per, 0.0);
    for (auto i : members)
      for (std::size_t k = 0; k < per; ++k) data_mean[k] += data.maps[i][k] / static_cast<double>(members.size());
    GeoBatch gb;
    gb.z = normals(rng, static_cast<std::size_t>(samples) * kLatentDim);
    for (int s = 0; s < samples; ++s) {
      gb.codes.push_back(cat);
      gb.theta.push_back(data.theta[members[rng.below(members.size())]]);
    }
    Tape tape;
    const Bound gp = ad::bind(tape, geo.generator_ema, false);
    const auto& maps = run_geo(tape, geo.config.generator, gp, gb, geo.mask).map.value();
    for (int s = 0; s < samples; ++s)
      for (std::size_t k = 0; k < per; ++k) gen_mean[k] += maps[s * per + k] / samples;
    ModeGap g;
    g.category = cat;
    g.records = members.size();
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < geo.mask.data.size(); ++t) {
      if (!geo.mask.data[t]) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = gen_mean[3 * t + c] - data_mean[3 * t + c];
        sq += d * d;
        g.max_abs = std::max(g.max_abs, std::abs(d));
        ++n;
      }
    }
    g.rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    out.push_back(g);
  }
  return out;
}

std::array<double, 3> mean_foreground_color(const Checkpoint& geo, const Checkpoint& tex, const fs::path& data_dir,
                                            int samples, std::uint64_t seed) {
  require(samples > 0, Errc::invalid_argument, "samples must be positive");
  const TexData data = load_texture_data(data_dir);
  const DatasetInfo info = read_dataset_info(data_dir);
  const BodyModel model = load_body_model(data_dir / info.body);
  const UvAtlas atlas = model.atlas(tex.config.generator.resolution);
  const Camera camera = load_camera(data_dir / info.camera);
  const BodyShape shape = BodyShape::zeros(model.num_betas());
  Rng rng(seed);
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  std::size_t count = 0;
  for (int s = 0; s < samples; ++s) {
    const auto k = rng.below(data.images.size());
    const TextureSample ts = sample_texture(geo, tex, static_cast<ClothingType>(data.label[k]), data.c_t[k],
                                            data.theta[k], derive_seed(seed, static_cast<std::uint64_t>(s)));
    Pose pose;
    pose.body = data.theta[k];
    const RenderOutput ro = render(pose_clothed_body(model, shape, pose, ts.dispmap, atlas), atlas, ts.texture, camera);
    for (std::size_t p = 0; p < ro.alpha.data.size(); ++p) {
      if (!ro.alpha.data[p]) continue;
      for (int c = 0; c < 3; ++c) sum[c] += ro.rgb.data[3 * p + c];
      ++count;
    }
  }
  require(count > 0, Errc::validation, "renders have no foreground pixels");
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

}  // namespace sculpt
