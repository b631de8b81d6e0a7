// Command-line front end. Talks to the library only through sculpt.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sculpt/sculpt.h"

namespace {

using json = nlohmann::json;

// 0 success, 1 validation failure, 2 anything else (I/O, format, usage).
int exit_code(sculpt_status s) {
  if (s == SCULPT_OK) return 0;
  return s == SCULPT_ERR_VALIDATION ? 1 : 2;
}

bool g_json = false;

int print_error(const std::string& code, int exit, const std::string& msg) {
  if (g_json)
    std::cerr << json{{"error", {{"code", code}, {"exit", exit}, {"message", msg}}}}.dump() << "\n";
  else
    std::cerr << "sculpt: " << code << ": " << msg << "\n";
  return exit;
}

int report(sculpt_status s) {
  if (s == SCULPT_OK) return 0;
  return print_error(sculpt_status_name(s), exit_code(s), sculpt_last_error());
}

// Writes text to a file, or stdout when path is empty or "-".
int emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text << "\n";
    return 0;
  }
  std::ofstream f(path, std::ios::binary);
  if (f) f << text << "\n";
  if (!f) return print_error("io", 2, "cannot write " + path);
  return 0;
}

struct Owned {
  sculpt_body* body = nullptr;
  sculpt_checkpoint* geo = nullptr;
  sculpt_checkpoint* tex = nullptr;
  ~Owned() {
    sculpt_body_free(body);
    sculpt_checkpoint_free(geo);
    sculpt_checkpoint_free(tex);
  }
};

void print_step(const sculpt_step_log* l, void* user) {
  const auto every = *static_cast<const int64_t*>(user);
  if (every <= 0 || l->step % every != 0) return;
  std::fprintf(stderr, "step %lld  d=%.6g  g=%.6g  r1=%.6g", static_cast<long long>(l->step), l->d_loss, l->g_loss,
               l->r1);
  if (l->pixel_fd >= 0.0) std::fprintf(stderr, "  pixel_fd=%.6g", l->pixel_fd);
  std::fprintf(stderr, "\n");
}

std::vector<int32_t> parse_modes(const std::vector<std::string>& names, sculpt_status& status) {
  std::vector<int32_t> out;
  for (const auto& n : names) {
    double oh[6];
    status = sculpt_clothing_one_hot(n.c_str(), oh);
    if (status != SCULPT_OK) return {};
    for (int32_t k = 0; k < 6; ++k)
      if (oh[k] == 1.0) out.push_back(k);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sculpt: clothed, textured human mesh pipeline", "sculpt"};
  app.fallthrough();  // global flags are accepted after the subcommand too
  app.set_version_flag("--version", std::string(sculpt_version()));
  app.add_flag("--json", g_json, "Print errors as a JSON object on stderr");
  app.require_subcommand(1);

  std::string out, model, atlas, reg_dir, ckpt, tex_ckpt, pose_file, ctype = "0", upper, lower, mesh, texture, camera,
      config, data, geo_ckpt, base;
  uint64_t seed = 0, count = 64;
  int32_t toy_res = 256, unpose_res = 256, geo_res = 32, tex_res = 64, texture_resolution = 32, width = 64, height = 64;
  double noise = 0.002, yaw = 0.0;
  int64_t log_every = 100;
  std::vector<std::string> modes, palette;

  auto* toy = app.add_subcommand("toybody", "Write the procedural toy body model");
  toy->add_option("--out", out, "Output directory")->required();
  toy->add_option("--uv-res", toy_res, "UV raster size used to validate the atlas")->default_val(256);

  auto* unpose = app.add_subcommand("unpose", "Turn posed registrations into canonical displacement maps");
  unpose->add_option("--model", model, "Body model directory")->required();
  unpose->add_option("--atlas", atlas, "UV atlas container (default: the model's own UVs)");
  unpose->add_option("--reg-dir", reg_dir, "Directory of registrations (.obj + .json sidecar)")->required();
  unpose->add_option("--out", out, "Output dataset directory")->required();
  unpose->add_option("--resolution", unpose_res, "Displacement map size")->default_val(256);

  auto* synth = app.add_subcommand("synth", "Sample a clothed body and export OBJ + MTL + PNG");
  synth->add_option("--model", model, "Body model directory")->required();
  synth->add_option("--ckpt", ckpt, "Geometry checkpoint directory")->required();
  synth->add_option("--tex-ckpt", tex_ckpt, "Texture checkpoint directory (default: flat grey texture)");
  synth->add_option("--upper", upper, "Upper clothing color word (with --tex-ckpt)")->default_val("red");
  synth->add_option("--lower", lower, "Pants color word (with --tex-ckpt)")->default_val("blue");
  synth->add_option("--pose", pose_file, "Pose JSON {pose[69], root_orient[3], translation[3]} (default: rest)");
  synth->add_option("--ctype", ctype, "Clothing type: code 0-5, name or alias")->default_val("0");
  synth->add_option("--seed", seed, "Latent seed")->default_val(0);
  synth->add_option("--out", out, "Output .obj path")->required();

  auto* rend = app.add_subcommand("render", "Render a textured OBJ through a camera");
  rend->add_option("--mesh", mesh, "OBJ with texture coordinates")->required();
  rend->add_option("--texture", texture, "Texture PNG")->required();
  rend->add_option("--camera", camera, "Camera JSON")->required();
  rend->add_option("--out", out, "Output RGBA PNG")->required();

  auto* cam = app.add_subcommand("camera", "Write a default camera JSON framing the toy body");
  cam->add_option("--width", width, "Image width")->default_val(64);
  cam->add_option("--height", height, "Image height")->default_val(64);
  cam->add_option("--yaw", yaw, "Rotation about the vertical axis in radians")->default_val(0.0);
  cam->add_option("--out", out, "Output JSON")->required();

  auto* tgeo = app.add_subcommand("train-geo", "Train the geometry generator");
  tgeo->add_option("--config", config, "Training config JSON (default: built-in defaults)");
  tgeo->add_option("--data", data, "Geometry dataset directory")->required();
  tgeo->add_option("--out", out, "Run directory (metrics.csv, checkpoint/)")->required();
  tgeo->add_option("--log-every", log_every, "Progress line interval in steps, 0 for none")->default_val(100);

  auto* ttex = app.add_subcommand("train-tex", "Train the texture generator against a frozen geometry stage");
  ttex->add_option("--config", config, "Training config JSON (default: built-in defaults)");
  ttex->add_option("--geo-ckpt", geo_ckpt, "Geometry checkpoint directory")->required();
  ttex->add_option("--data", data, "Texture dataset directory")->required();
  ttex->add_option("--out", out, "Run directory (metrics.csv, checkpoint/)")->required();
  ttex->add_option("--log-every", log_every, "Progress line interval in steps, 0 for none")->default_val(100);

  auto* label = app.add_subcommand("label", "Build the c_g / c_t condition bundle");
  label->add_option("--upper", upper, "Upper clothing color word")->required();
  label->add_option("--lower", lower, "Pants color word")->required();
  label->add_option("--ctype", ctype, "Clothing type: code 0-5, name or alias")->default_val("0");
  label->add_option("--out", out, "Output JSON (default: stdout)");

  auto* dgeo = app.add_subcommand("datagen-geo", "Generate a synthetic displacement-map dataset");
  dgeo->add_option("--count", count, "Number of records")->default_val(64);
  dgeo->add_option("--seed", seed, "Generator seed")->default_val(0);
  dgeo->add_option("--resolution", geo_res, "Map size")->default_val(32);
  dgeo->add_option("--modes", modes, "Clothing types to draw from")->delimiter(',')->default_str("0,2");
  dgeo->add_option("--noise", noise, "Per-vertex noise sigma in meters")->default_val(0.002);
  dgeo->add_option("--out", out, "Output directory")->required();

  auto* dtex = app.add_subcommand("datagen-tex", "Generate a synthetic rendered-image dataset");
  dtex->add_option("--count", count, "Number of records")->default_val(64);
  dtex->add_option("--seed", seed, "Generator seed")->default_val(0);
  dtex->add_option("--resolution", tex_res, "Rendered image size")->default_val(64);
  dtex->add_option("--texture-resolution", texture_resolution, "Painted UV texture size")->default_val(32);
  dtex->add_option("--palette", palette, "Color words to draw from")->delimiter(',')->default_str("red,blue,green,yellow");
  dtex->add_option("--modes", modes, "Clothing types to draw from")->delimiter(',')->default_str("0,2");
  dtex->add_option("--out", out, "Output directory")->required();

  auto* val = app.add_subcommand("validate", "Check a dataset directory (exit 1 when invalid)");
  val->add_option("--data", data, "Dataset directory")->required();

  auto* abl = app.add_subcommand("ablation", "Write the six ablation training configs");
  abl->add_option("--base", base, "Base training config JSON (default: built-in defaults)");
  abl->add_option("--out", out, "Output directory")->required();

  auto* defcfg = app.add_subcommand("config", "Print the default training config");
  defcfg->add_option("--out", out, "Output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (g_json && e.get_exit_code() != 0) return print_error("usage", 2, e.what());
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const char* cfg_path = config.empty() ? nullptr : config.c_str();
  Owned own;

  if (*toy) {
    sculpt_status s = sculpt_toybody_create(toy_res, &own.body);
    if (s == SCULPT_OK) s = sculpt_body_save(own.body, out.c_str());
    return report(s);
  }
  if (*unpose) {
    sculpt_status s = sculpt_body_load(model.c_str(), &own.body);
    sculpt_unpose_report r{};
    if (s == SCULPT_OK)
      s = sculpt_unpose_dir(own.body, atlas.empty() ? nullptr : atlas.c_str(), reg_dir.c_str(), out.c_str(), unpose_res,
                            &r);
    if (s == SCULPT_OK || s == SCULPT_ERR_VALIDATION)
      std::cerr << "unposed " << r.processed << " of " << r.processed + r.failed << " registrations\n";
    return report(s);
  }
  if (*synth) {
    sculpt_status s = sculpt_body_load(model.c_str(), &own.body);
    if (s == SCULPT_OK) s = sculpt_checkpoint_load(ckpt.c_str(), &own.geo);
    if (s == SCULPT_OK && !tex_ckpt.empty()) s = sculpt_checkpoint_load(tex_ckpt.c_str(), &own.tex);
    double pose[69] = {}, root[3] = {}, trans[3] = {};
    if (s == SCULPT_OK && !pose_file.empty()) s = sculpt_read_pose(pose_file.c_str(), pose, root, trans);
    if (s != SCULPT_OK) return report(s);
    const sculpt_synth_request req{ctype.c_str(), upper.c_str(), lower.c_str(), pose, root, trans, seed};
    return report(sculpt_synthesize(own.body, own.geo, own.tex, &req, out.c_str()));
  }
  if (*rend) return report(sculpt_render_file(mesh.c_str(), texture.c_str(), camera.c_str(), out.c_str()));
  if (*cam) return report(sculpt_camera_default(width, height, yaw, out.c_str()));
  if (*tgeo) {
    sculpt_train_report r{};
    const sculpt_status s = sculpt_train_geometry(cfg_path, data.c_str(), out.c_str(), print_step, &log_every, &r);
    if (s == SCULPT_OK && r.skipped_steps > 0) std::cerr << r.skipped_steps << " steps skipped (non-finite gradients)\n";
    return report(s);
  }
  if (*ttex) {
    sculpt_train_report r{};
    const sculpt_status s =
        sculpt_train_texture(cfg_path, geo_ckpt.c_str(), data.c_str(), out.c_str(), print_step, &log_every, &r);
    if (s == SCULPT_OK && r.geometry_hash_before != r.geometry_hash_after)
      return print_error("internal", 2, "geometry checkpoint changed during texture training");
    return report(s);
  }
  if (*label) {
    sculpt_text* t = nullptr;
    const sculpt_status s = sculpt_label(ctype.c_str(), upper.c_str(), lower.c_str(), &t);
    const int rc = s == SCULPT_OK ? emit(sculpt_text_data(t), out) : report(s);
    sculpt_text_free(t);
    return rc;
  }
  if (*dgeo) {
    sculpt_status s = SCULPT_OK;
    const auto codes = parse_modes(modes.empty() ? std::vector<std::string>{"0", "2"} : modes, s);
    if (s != SCULPT_OK) return report(s);
    sculpt_geometry_data_options o;
    sculpt_geometry_data_defaults(&o);
    o.count = count;
    o.seed = seed;
    o.resolution = geo_res;
    o.noise = noise;
    o.modes = codes.data();
    o.mode_count = codes.size();
    return report(sculpt_datagen_geometry(out.c_str(), &o));
  }
  if (*dtex) {
    sculpt_status s = SCULPT_OK;
    const auto codes = parse_modes(modes.empty() ? std::vector<std::string>{"0", "2"} : modes, s);
    if (s != SCULPT_OK) return report(s);
    if (palette.empty()) palette = {"red", "blue", "green", "yellow"};
    std::vector<const char*> words;
    for (const auto& p : palette) words.push_back(p.c_str());
    sculpt_texture_data_options o;
    sculpt_texture_data_defaults(&o);
    o.count = count;
    o.seed = seed;
    o.resolution = tex_res;
    o.texture_resolution = texture_resolution;
    o.palette = words.data();
    o.palette_size = words.size();
    o.modes = codes.data();
    o.mode_count = codes.size();
    return report(sculpt_datagen_texture(out.c_str(), &o));
  }
  if (*val) {
    sculpt_text* t = nullptr;
    const sculpt_status s = sculpt_validate_dataset(data.c_str(), &t);
    if (t) std::cout << sculpt_text_data(t) << "\n";
    sculpt_text_free(t);
    return report(s);
  }
  if (*abl) return report(sculpt_write_ablation(base.empty() ? nullptr : base.c_str(), out.c_str()));
  if (*defcfg) {
    sculpt_text* t = nullptr;
    const sculpt_status s = sculpt_default_config(&t);
    const int rc = s == SCULPT_OK ? emit(sculpt_text_data(t), out) : report(s);
    sculpt_text_free(t);
    return rc;
  }
  return 2;
}
