#ifndef SCULPT_SCULPT_H
#define SCULPT_SCULPT_H

/* C interface to the sculpt library. Every function returns a status code;
 * on failure the message is available from sculpt_last_error() on the same
 * thread until the next call. Handles are opaque and owned by the caller,
 * who releases them with the matching *_free function (NULL is accepted). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SCULPT_API __declspec(dllexport)
#else
#define SCULPT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sculpt_status {
  SCULPT_OK = 0,
  SCULPT_ERR_INVALID_ARGUMENT = 1,
  SCULPT_ERR_DIMENSION_MISMATCH = 2,
  SCULPT_ERR_FORMAT = 3,
  SCULPT_ERR_IO = 4,
  SCULPT_ERR_VALIDATION = 5,
  SCULPT_ERR_COUPLING = 6,
  SCULPT_ERR_INTERNAL = 7
} sculpt_status;

typedef struct sculpt_body sculpt_body;             /* body model with its UV atlas */
typedef struct sculpt_checkpoint sculpt_checkpoint; /* trained geometry or texture stage */
typedef struct sculpt_text sculpt_text;             /* owned UTF-8 string */

SCULPT_API const char* sculpt_version(void);
SCULPT_API const char* sculpt_status_name(sculpt_status status);
SCULPT_API const char* sculpt_last_error(void);

SCULPT_API const char* sculpt_text_data(const sculpt_text* text);
SCULPT_API size_t sculpt_text_size(const sculpt_text* text);
SCULPT_API void sculpt_text_free(sculpt_text* text);

/* ---- body models ------------------------------------------------------- */

typedef struct sculpt_body_info {
  int32_t vertices;
  int32_t faces;
  int32_t joints; /* including the root */
  int32_t betas;
} sculpt_body_info;

/* Procedural toy body; its atlas rasterizes at uv_resolution. */
SCULPT_API sculpt_status sculpt_toybody_create(int32_t uv_resolution, sculpt_body** out);
SCULPT_API sculpt_status sculpt_body_load(const char* dir, sculpt_body** out);
SCULPT_API sculpt_status sculpt_body_save(const sculpt_body* body, const char* dir);
SCULPT_API sculpt_status sculpt_body_get_info(const sculpt_body* body, sculpt_body_info* info);
SCULPT_API void sculpt_body_free(sculpt_body* body);

/* Posed minimal body. betas holds info.betas entries (NULL for zeros); pose
 * holds 69 axis-angle values (NULL for rest); root_orient and translation
 * hold 3 each (NULL for zero). vertices_out receives info.vertices×3. */
SCULPT_API sculpt_status sculpt_body_pose(const sculpt_body* body, const double* betas, const double* pose,
                                          const double* root_orient, const double* translation,
                                          double* vertices_out);

/* ---- preprocessing ----------------------------------------------------- */

typedef struct sculpt_unpose_report {
  uint64_t processed; /* registrations turned into maps */
  uint64_t failed;    /* registrations skipped with an error */
  int32_t ok; /* 0 when too many registrations failed */
} sculpt_unpose_report;

/* Registrations in reg_dir become displacement maps and a geometry dataset
 * in out_dir. atlas_path may be NULL to use the body's own atlas. */
SCULPT_API sculpt_status sculpt_unpose_dir(const sculpt_body* body, const char* atlas_path, const char* reg_dir,
                                           const char* out_dir, int32_t resolution, sculpt_unpose_report* report);

/* ---- rendering and export ---------------------------------------------- */

/* Renders an OBJ with per-corner UVs and a PNG texture through a camera JSON
 * file and writes an RGBA PNG. */
SCULPT_API sculpt_status sculpt_render_file(const char* mesh_obj, const char* texture_png, const char* camera_json,
                                            const char* out_png);

/* Writes a camera JSON framing the toy body from the given yaw (radians). */
SCULPT_API sculpt_status sculpt_camera_default(int32_t width, int32_t height, double yaw, const char* out_json);

/* ---- datasets ---------------------------------------------------------- */

typedef struct sculpt_geometry_data_options {
  uint64_t count;
  uint64_t seed;
  int32_t resolution;
  const int32_t* modes; /* clothing-type codes; NULL selects {0, 2} */
  size_t mode_count;
  double noise;         /* meters */
} sculpt_geometry_data_options;

typedef struct sculpt_texture_data_options {
  uint64_t count;
  uint64_t seed;
  int32_t resolution;          /* rendered image size */
  int32_t texture_resolution;  /* painted UV texture size */
  const char* const* palette;  /* color words; NULL selects the default four */
  size_t palette_size;
  const int32_t* modes;
  size_t mode_count;
} sculpt_texture_data_options;

SCULPT_API void sculpt_geometry_data_defaults(sculpt_geometry_data_options* options);
SCULPT_API void sculpt_texture_data_defaults(sculpt_texture_data_options* options);
SCULPT_API sculpt_status sculpt_datagen_geometry(const char* out_dir, const sculpt_geometry_data_options* options);
SCULPT_API sculpt_status sculpt_datagen_texture(const char* out_dir, const sculpt_texture_data_options* options);

/* SCULPT_OK when the dataset is valid, SCULPT_ERR_VALIDATION when it is not.
 * In both cases *report (if non-NULL) receives a JSON summary. */
SCULPT_API sculpt_status sculpt_validate_dataset(const char* dir, sculpt_text** report);

/* ---- labels ------------------------------------------------------------ */

/* JSON bundle {ctype, c_g, prompt, c_t}. ctype accepts a name, alias or
 * code; upper/lower are color words used verbatim in the prompt. */
SCULPT_API sculpt_status sculpt_label(const char* ctype, const char* upper, const char* lower, sculpt_text** out);
SCULPT_API sculpt_status sculpt_color_prompt(const char* upper, const char* lower, sculpt_text** out);
/* one_hot receives 6 values. */
SCULPT_API sculpt_status sculpt_clothing_one_hot(const char* ctype, double* one_hot);

/* ---- training ---------------------------------------------------------- */

typedef struct sculpt_step_log {
  int64_t step;
  double d_loss;
  double g_loss;
  double r1;
  double pixel_fd; /* negative when not computed at this step */
  uint64_t mask_violations;
} sculpt_step_log;

typedef void (*sculpt_progress_fn)(const sculpt_step_log* log, void* user);

typedef struct sculpt_train_report {
  int64_t steps;
  int64_t skipped_steps;
  uint64_t mask_violations;
  uint64_t geometry_hash_before; /* texture stage only */
  uint64_t geometry_hash_after;
} sculpt_train_report;

/* config_json is a path to a training config; NULL uses the defaults. */
SCULPT_API sculpt_status sculpt_train_geometry(const char* config_json, const char* data_dir, const char* out_dir,
                                               sculpt_progress_fn progress, void* user, sculpt_train_report* report);
SCULPT_API sculpt_status sculpt_train_texture(const char* config_json, const char* geo_ckpt, const char* data_dir,
                                              const char* out_dir, sculpt_progress_fn progress, void* user,
                                              sculpt_train_report* report);
SCULPT_API sculpt_status sculpt_default_config(sculpt_text** out);
SCULPT_API sculpt_status sculpt_write_ablation(const char* base_config, const char* out_dir);

SCULPT_API sculpt_status sculpt_checkpoint_load(const char* dir, sculpt_checkpoint** out);
SCULPT_API void sculpt_checkpoint_free(sculpt_checkpoint* ckpt);
/* "geometry" or "texture". */
SCULPT_API const char* sculpt_checkpoint_stage(const sculpt_checkpoint* ckpt);
SCULPT_API sculpt_status sculpt_checkpoint_hash(const sculpt_checkpoint* ckpt, uint64_t* hash);

/* ---- synthesis --------------------------------------------------------- */

typedef struct sculpt_synth_request {
  const char* ctype;       /* clothing type name, alias or code */
  const char* upper_color; /* texture condition; used only with a texture checkpoint */
  const char* lower_color;
  const double* pose;      /* 69 values, NULL for rest */
  const double* root_orient;
  const double* translation;
  uint64_t seed;
} sculpt_synth_request;

/* Samples geometry (and texture when tex is non-NULL; otherwise a flat grey
 * texture), poses the clothed body and writes OBJ + MTL + PNG next to
 * out_obj. */
SCULPT_API sculpt_status sculpt_synthesize(const sculpt_body* body, const sculpt_checkpoint* geo,
                                           const sculpt_checkpoint* tex, const sculpt_synth_request* request,
                                           const char* out_obj);

/* Reads a pose sidecar JSON into 69 + 3 + 3 values. */
SCULPT_API sculpt_status sculpt_read_pose(const char* path, double* pose, double* root_orient, double* translation);

#ifdef __cplusplus
}
#endif

#endif /* SCULPT_SCULPT_H */
