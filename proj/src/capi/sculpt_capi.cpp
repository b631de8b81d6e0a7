#include "sculpt/sculpt.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "body.hpp"
#include "datagen.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "labeler.hpp"
#include "mesh_io.hpp"
#include "renderer.hpp"
#include "trainer.hpp"
#include "unposer.hpp"

struct sculpt_body {
  sculpt::BodyModel model;
};

struct sculpt_checkpoint {
  sculpt::Checkpoint ck;
};

struct sculpt_text {
  std::string value;
};

namespace {

namespace fs = std::filesystem;
using sculpt::Errc;

thread_local std::string g_last_error;

sculpt_status to_status(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return SCULPT_ERR_INVALID_ARGUMENT;
    case Errc::dimension_mismatch: return SCULPT_ERR_DIMENSION_MISMATCH;
    case Errc::format: return SCULPT_ERR_FORMAT;
    case Errc::io: return SCULPT_ERR_IO;
    case Errc::validation: return SCULPT_ERR_VALIDATION;
    case Errc::coupling: return SCULPT_ERR_COUPLING;
    case Errc::internal: return SCULPT_ERR_INTERNAL;
  }
  return SCULPT_ERR_INTERNAL;
}

sculpt_status fail(sculpt_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs fn, translating every exception into a status plus message.
template <class F>
sculpt_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return SCULPT_OK;
  } catch (const sculpt::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(SCULPT_ERR_FORMAT, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(SCULPT_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SCULPT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SCULPT_ERR_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  sculpt::require(p != nullptr, Errc::invalid_argument, std::string(what) + " must not be NULL");
}

sculpt_text* make_text(std::string s) { return new sculpt_text{std::move(s)}; }

sculpt::Pose read_pose_args(const double* pose, const double* root_orient, const double* translation) {
  sculpt::Pose p;
  if (pose) std::copy_n(pose, sculpt::kPoseDim, p.body.begin());
  if (root_orient) p.root_orient = Eigen::Vector3d(root_orient[0], root_orient[1], root_orient[2]);
  if (translation) p.translation = Eigen::Vector3d(translation[0], translation[1], translation[2]);
  return p;
}

sculpt::TrainConfig config_or_default(const char* path) {
  return path ? sculpt::load_train_config(path) : sculpt::TrainConfig{};
}

void fill_report(const sculpt::TrainResult& r, sculpt_train_report* out) {
  if (!out) return;
  out->steps = r.log.empty() ? 0 : r.log.back().step;
  out->skipped_steps = r.skipped_steps;
  out->mask_violations = r.mask_violations;
  out->geometry_hash_before = r.geometry_file_hash_before;
  out->geometry_hash_after = r.geometry_file_hash_after;
}

sculpt::ProgressFn wrap_progress(sculpt_progress_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const sculpt::StepLog& l) {
    const sculpt_step_log c{l.step, l.d_loss, l.g_loss, l.r1, l.pixel_fd, l.mask_violations};
    fn(&c, user);
  };
}

std::vector<sculpt::ClothingType> read_modes(const int32_t* modes, size_t count,
                                             std::vector<sculpt::ClothingType> fallback) {
  if (!modes) return fallback;
  std::vector<sculpt::ClothingType> out;
  for (size_t i = 0; i < count; ++i) out.push_back(sculpt::clothing_type_from_code(modes[i]));
  return out;
}

}  // namespace

extern "C" {

const char* sculpt_version(void) { return "0.1.0"; }

const char* sculpt_status_name(sculpt_status status) {
  switch (status) {
    case SCULPT_OK: return "ok";
    case SCULPT_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SCULPT_ERR_DIMENSION_MISMATCH: return "dimension_mismatch";
    case SCULPT_ERR_FORMAT: return "format";
    case SCULPT_ERR_IO: return "io";
    case SCULPT_ERR_VALIDATION: return "validation";
    case SCULPT_ERR_COUPLING: return "coupling";
    case SCULPT_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* sculpt_last_error(void) { return g_last_error.c_str(); }

const char* sculpt_text_data(const sculpt_text* text) { return text ? text->value.c_str() : ""; }
size_t sculpt_text_size(const sculpt_text* text) { return text ? text->value.size() : 0; }
void sculpt_text_free(sculpt_text* text) { delete text; }

// ---- body models -------------------------------------------------------------

sculpt_status sculpt_toybody_create(int32_t uv_resolution, sculpt_body** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    sculpt::require(uv_resolution >= 1, Errc::invalid_argument, "uv_resolution must be positive");
    *out = new sculpt_body{sculpt::make_toy_body(uv_resolution).model};
  });
}

sculpt_status sculpt_body_load(const char* dir, sculpt_body** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    *out = new sculpt_body{sculpt::load_body_model(dir)};
  });
}

sculpt_status sculpt_body_save(const sculpt_body* body, const char* dir) {
  return guarded([&] {
    need(body, "body");
    need(dir, "dir");
    sculpt::save_body_model(body->model, dir);
  });
}

sculpt_status sculpt_body_get_info(const sculpt_body* body, sculpt_body_info* info) {
  return guarded([&] {
    need(body, "body");
    need(info, "info");
    info->vertices = body->model.num_vertices();
    info->faces = static_cast<int32_t>(body->model.faces.size());
    info->joints = body->model.num_joints();
    info->betas = body->model.num_betas();
  });
}

void sculpt_body_free(sculpt_body* body) { delete body; }

sculpt_status sculpt_body_pose(const sculpt_body* body, const double* betas, const double* pose,
                               const double* root_orient, const double* translation, double* vertices_out) {
  return guarded([&] {
    need(body, "body");
    need(vertices_out, "vertices_out");
    const auto& m = body->model;
    sculpt::BodyShape shape = sculpt::BodyShape::zeros(m.num_betas());
    if (betas)
      for (int i = 0; i < m.num_betas(); ++i) shape.betas[i] = betas[i];
    const sculpt::Pose p = read_pose_args(pose, root_orient, translation);
    const sculpt::Points rest = sculpt::clothed_template(m, shape, p, sculpt::Points::Zero(m.num_vertices(), 3));
    const sculpt::ClothedMesh mesh = sculpt::lbs(m, rest, shape, p);
    for (int v = 0; v < m.num_vertices(); ++v)
      for (int c = 0; c < 3; ++c) vertices_out[3 * v + c] = mesh.vertices(v, c);
  });
}

// ---- preprocessing ---------------------------------------------------------------

sculpt_status sculpt_unpose_dir(const sculpt_body* body, const char* atlas_path, const char* reg_dir,
                                const char* out_dir, int32_t resolution, sculpt_unpose_report* report) {
  return guarded([&] {
    need(body, "body");
    need(reg_dir, "reg_dir");
    need(out_dir, "out_dir");
    sculpt::require(resolution >= 1, Errc::invalid_argument, "resolution must be positive");
    const sculpt::UvAtlas atlas = atlas_path ? sculpt::load_atlas(atlas_path) : body->model.atlas(resolution);
    sculpt::BatchUnposeOptions opt;
    opt.resolution = resolution;
    const auto r = sculpt::batch_unpose(reg_dir, body->model, atlas, out_dir, opt);
    if (report) *report = {r.processed, r.failed, r.ok ? 1 : 0};
    if (!r.ok) {
      std::string msg = std::to_string(r.failed) + " of " + std::to_string(r.processed) + " registrations failed";
      if (!r.errors.empty()) msg += "; first: " + r.errors.front();
      throw sculpt::Error(Errc::validation, msg);
    }
  });
}

// ---- rendering -----------------------------------------------------------------

sculpt_status sculpt_render_file(const char* mesh_obj, const char* texture_png, const char* camera_json,
                                 const char* out_png) {
  return guarded([&] {
    need(mesh_obj, "mesh_obj");
    need(texture_png, "texture_png");
    need(camera_json, "camera_json");
    need(out_png, "out_png");
    const sculpt::ObjMesh obj = sculpt::read_obj(mesh_obj);
    sculpt::require(!obj.corner_uv.empty(), Errc::format, std::string(mesh_obj) + " has no texture coordinates");
    sculpt::UvAtlas atlas;
    atlas.faces = obj.faces;
    atlas.face_corner_uv = obj.corner_uv;
    atlas.vertex_uv = sculpt::UvCoords::Zero(obj.vertices.rows(), 2);
    for (std::size_t f = 0; f < obj.faces.size(); ++f)
      for (int k = 0; k < 3; ++k) atlas.vertex_uv.row(obj.faces[f][k]) = obj.corner_uv[f][k].transpose();
    sculpt::Raster tex = sculpt::read_png_unit(texture_png);
    if (tex.channels == 4 || tex.channels == 2) {
      const int keep = tex.channels == 4 ? 3 : 1;
      sculpt::Raster t(tex.height, tex.width, keep);
      for (std::size_t i = 0; i < tex.texels(); ++i)
        for (int c = 0; c < keep; ++c) t.data[i * keep + c] = tex.data[i * tex.channels + c];
      tex = std::move(t);
    }
    if (tex.channels == 1) {
      sculpt::Raster t(tex.height, tex.width, 3);
      for (std::size_t i = 0; i < tex.texels(); ++i)
        for (int c = 0; c < 3; ++c) t.data[3 * i + c] = tex.data[i];
      tex = std::move(t);
    }
    const sculpt::Camera cam = sculpt::load_camera(camera_json);
    const auto ro = sculpt::render({obj.vertices, obj.faces}, atlas, tex, cam);
    sculpt::write_png8_rgba(out_png, ro.rgb, ro.alpha);
  });
}

sculpt_status sculpt_camera_default(int32_t width, int32_t height, double yaw, const char* out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    sculpt::save_camera(sculpt::default_camera(width, height, 1.8, 2.5, 0.8, yaw), out_json);
  });
}

// ---- datasets ---------------------------------------------------------------------

void sculpt_geometry_data_defaults(sculpt_geometry_data_options* options) {
  if (!options) return;
  const sculpt::GeometryDatasetOptions d;
  *options = {d.count, d.seed, d.resolution, nullptr, 0, d.noise};
}

void sculpt_texture_data_defaults(sculpt_texture_data_options* options) {
  if (!options) return;
  const sculpt::TextureDatasetOptions d;
  *options = {d.count, d.seed, d.resolution, d.texture_resolution, nullptr, 0, nullptr, 0};
}

sculpt_status sculpt_datagen_geometry(const char* out_dir, const sculpt_geometry_data_options* options) {
  return guarded([&] {
    need(out_dir, "out_dir");
    sculpt_geometry_data_options o;
    sculpt_geometry_data_defaults(&o);
    if (options) o = *options;
    sculpt::GeometryDatasetOptions g;
    g.count = o.count;
    g.seed = o.seed;
    g.resolution = o.resolution;
    g.noise = o.noise;
    g.modes = read_modes(o.modes, o.mode_count, g.modes);
    sculpt::synth_geometry_dataset(sculpt::make_toy_body(g.resolution), out_dir, g);
  });
}

sculpt_status sculpt_datagen_texture(const char* out_dir, const sculpt_texture_data_options* options) {
  return guarded([&] {
    need(out_dir, "out_dir");
    sculpt_texture_data_options o;
    sculpt_texture_data_defaults(&o);
    if (options) o = *options;
    sculpt::TextureDatasetOptions t;
    t.count = o.count;
    t.seed = o.seed;
    t.resolution = o.resolution;
    t.texture_resolution = o.texture_resolution;
    if (o.palette) {
      t.palette.clear();
      for (size_t i = 0; i < o.palette_size; ++i) {
        need(o.palette[i], "palette entry");
        t.palette.emplace_back(o.palette[i]);
      }
    }
    t.modes = read_modes(o.modes, o.mode_count, t.modes);
    sculpt::require(t.resolution >= 1, Errc::invalid_argument, "resolution must be positive");
    const sculpt::Camera cam = sculpt::default_camera(t.resolution, t.resolution);
    sculpt::synth_texture_dataset(sculpt::make_toy_body(t.texture_resolution), cam, out_dir, t);
  });
}

sculpt_status sculpt_validate_dataset(const char* dir, sculpt_text** report) {
  bool ok = true;
  const sculpt_status s = guarded([&] {
    need(dir, "dir");
    if (report) *report = nullptr;
    const auto r = sculpt::validate_dataset(dir);
    ok = r.ok;
    if (report)
      *report = make_text(nlohmann::json{{"ok", r.ok}, {"records", r.records}, {"problems", r.problems}}.dump(2));
    if (!r.ok) g_last_error = r.problems.empty() ? "dataset is invalid" : r.problems.front();
  });
  if (s != SCULPT_OK) return s;
  return ok ? SCULPT_OK : SCULPT_ERR_VALIDATION;
}

// ---- labels ------------------------------------------------------------------------

sculpt_status sculpt_label(const char* ctype, const char* upper, const char* lower, sculpt_text** out) {
  return guarded([&] {
    need(ctype, "ctype");
    need(upper, "upper");
    need(lower, "lower");
    need(out, "out");
    *out = nullptr;
    const auto t = sculpt::parse_clothing_type(ctype);
    const auto prompt = sculpt::build_color_prompt(upper, lower);
    const auto oh = sculpt::encode_clothing_type(t);
    nlohmann::json j;
    j["ctype"] = std::string(sculpt::clothing_type_name(t));
    j["c_g"] = std::vector<double>(oh.begin(), oh.end());
    j["prompt"] = prompt.text;
    j["c_t"] = sculpt::mock_text_encoder(prompt.text);
    *out = make_text(j.dump(2));
  });
}

sculpt_status sculpt_color_prompt(const char* upper, const char* lower, sculpt_text** out) {
  return guarded([&] {
    need(upper, "upper");
    need(lower, "lower");
    need(out, "out");
    *out = nullptr;
    *out = make_text(sculpt::build_color_prompt(upper, lower).text);
  });
}

sculpt_status sculpt_clothing_one_hot(const char* ctype, double* one_hot) {
  return guarded([&] {
    need(ctype, "ctype");
    need(one_hot, "one_hot");
    const auto oh = sculpt::encode_clothing_type(sculpt::parse_clothing_type(ctype));
    std::copy(oh.begin(), oh.end(), one_hot);
  });
}

// ---- training ----------------------------------------------------------------------

sculpt_status sculpt_train_geometry(const char* config_json, const char* data_dir, const char* out_dir,
                                    sculpt_progress_fn progress, void* user, sculpt_train_report* report) {
  return guarded([&] {
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    const auto r = sculpt::train_geometry(config_or_default(config_json), data_dir, out_dir, wrap_progress(progress, user));
    fill_report(r, report);
  });
}

sculpt_status sculpt_train_texture(const char* config_json, const char* geo_ckpt, const char* data_dir,
                                   const char* out_dir, sculpt_progress_fn progress, void* user,
                                   sculpt_train_report* report) {
  return guarded([&] {
    need(geo_ckpt, "geo_ckpt");
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    const auto r = sculpt::train_texture(config_or_default(config_json), geo_ckpt, data_dir, out_dir,
                                         wrap_progress(progress, user));
    fill_report(r, report);
  });
}

sculpt_status sculpt_default_config(sculpt_text** out) {
  return guarded([&] {
    need(out, "out");
    *out = make_text(sculpt::to_json(sculpt::TrainConfig{}).dump(2));
  });
}

sculpt_status sculpt_write_ablation(const char* base_config, const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    sculpt::write_ablation_configs(config_or_default(base_config), out_dir);
  });
}

sculpt_status sculpt_checkpoint_load(const char* dir, sculpt_checkpoint** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    *out = new sculpt_checkpoint{sculpt::load_checkpoint(dir)};
  });
}

void sculpt_checkpoint_free(sculpt_checkpoint* ckpt) { delete ckpt; }

const char* sculpt_checkpoint_stage(const sculpt_checkpoint* ckpt) { return ckpt ? ckpt->ck.stage.c_str() : ""; }

sculpt_status sculpt_checkpoint_hash(const sculpt_checkpoint* ckpt, uint64_t* hash) {
  return guarded([&] {
    need(ckpt, "ckpt");
    need(hash, "hash");
    *hash = ckpt->ck.generator_ema.hash();
  });
}

// ---- synthesis ---------------------------------------------------------------------

sculpt_status sculpt_synthesize(const sculpt_body* body, const sculpt_checkpoint* geo, const sculpt_checkpoint* tex,
                                const sculpt_synth_request* request, const char* out_obj) {
  return guarded([&] {
    need(body, "body");
    need(geo, "geo");
    need(request, "request");
    need(request->ctype, "request->ctype");
    need(out_obj, "out_obj");
    const auto& m = body->model;
    const auto type = sculpt::parse_clothing_type(request->ctype);
    const sculpt::Pose pose = read_pose_args(request->pose, request->root_orient, request->translation);
    sculpt::check_pose(m, pose);
    const int r = geo->ck.config.generator.resolution;
    const sculpt::UvAtlas atlas = m.atlas(r);
    sculpt::DispMap map;
    sculpt::Raster texture;
    if (tex) {
      need(request->upper_color, "request->upper_color");
      need(request->lower_color, "request->lower_color");
      const auto c_t = sculpt::mock_text_encoder(sculpt::build_color_prompt(request->upper_color, request->lower_color).text);
      auto s = sculpt::sample_texture(geo->ck, tex->ck, type, c_t, pose.body, request->seed);
      map = std::move(s.dispmap);
      texture = std::move(s.texture);
    } else {
      map = sculpt::sample_geometry(geo->ck, type, pose.body, request->seed);
      texture = sculpt::Raster(r, r, 3);
      std::fill(texture.data.begin(), texture.data.end(), 0.75);
    }
    sculpt::require(map.mask.height == r, Errc::format, "checkpoint mask does not match its generator resolution");
    const sculpt::ClothedMesh mesh =
        sculpt::pose_clothed_body(m, sculpt::BodyShape::zeros(m.num_betas()), pose, map, atlas);
    const fs::path obj(out_obj);
    const fs::path png = fs::path(obj).replace_extension(".png");
    if (obj.has_parent_path()) fs::create_directories(obj.parent_path());
    sculpt::write_png8(png, texture);
    sculpt::write_obj(obj, mesh.vertices, mesh.faces, atlas.face_corner_uv, png.filename().string());
  });
}

sculpt_status sculpt_read_pose(const char* path, double* pose, double* root_orient, double* translation) {
  return guarded([&] {
    need(path, "path");
    const sculpt::Pose p = sculpt::pose_from_json(sculpt::read_json_file(path));
    if (pose) std::copy(p.body.begin(), p.body.end(), pose);
    for (int i = 0; i < 3; ++i) {
      if (root_orient) root_orient[i] = p.root_orient[i];
      if (translation) translation[i] = p.translation[i];
    }
  });
}

}  // extern "C"
