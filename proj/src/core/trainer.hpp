#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "labeler.hpp"
#include "nets.hpp"
#include "raster.hpp"
#include "uv_atlas.hpp"

namespace sculpt {

// One training run. The same schema serves both stages; stage-specific
// fields are ignored by the other stage.
struct TrainConfig {
  std::string name = "run";
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  int batch_size = 8;
  int steps = 2000;
  // No first-moment momentum: with it the texture generator overshoots
  // into saturated colors on small data.
  ad::AdamConfig adam{.lr = 0.001, .beta1 = 0.0, .beta2 = 0.99, .eps = 1e-8};
  double r1_gamma = 10.0;
  // Generator weight averaging: half-life of ema_kimg thousand images,
  // shortened to ema_rampup × images seen early in training.
  double ema_kimg = 10.0;
  double ema_rampup = 0.05;
  std::uint64_t seed = 0;
  bool flip_augment = false;  // horizontal flips of real images (texture stage)
  // Texture stage.
  bool coupling = true;
  bool global_disc = true;
  bool patch_disc = true;
  int patch_size = 64;
  int patches_per_image = 4;
  // Logging.
  int fd_every = 100;  // pixel-FD cadence in steps, 0 = only at the end
  int fd_samples = 64;
  int checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
};

json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

// --- losses -------------------------------------------------------------------

// mean softplus(−D(fake)).
ad::Tensor nonsat_g_loss(const ad::Tensor& fake_logits);
// mean softplus(−D(real)) + mean softplus(D(fake)).
ad::Tensor nonsat_d_loss(const ad::Tensor& real_logits, const ad::Tensor& fake_logits);

// (γ/2)·mean over the batch of ‖∇ₓ D(x)‖², built with create_graph so its
// gradient reaches D's parameters. `real` must require grad; `real_logits`
// must be D(real).
ad::Tensor r1_penalty(const ad::Tensor& real_logits, const ad::Tensor& real, double gamma);

// Fréchet distance between Gaussian fits of 8×8 average-pooled images
// (each H×W×3, H and W multiples of 8). A proxy metric only.
double pixel_fd(const std::vector<Raster>& real, const std::vector<Raster>& fake);

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  std::string stage;  // "geometry" or "texture"
  TrainConfig config;
  std::int64_t step = 0;
  ad::ParamSet generator;
  ad::ParamSet generator_ema;  // what sampling and the next stage use
  ad::ParamSet disc;        // geometry D or texture global D
  ad::ParamSet disc_patch;  // texture patch D
  ad::AdamState opt_g, opt_d, opt_dp;
  double data_scale = 1.0;  // displacement normalization (meters per unit)
  Mask mask;                // generator UV mask
  json extra = json::object();
};

// Container of kind "checkpoint"; parameters and Adam moments as f32.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// FNV-1a over every file of a checkpoint directory, in name order.
std::uint64_t checkpoint_file_hash(const std::filesystem::path& dir);

// --- training -------------------------------------------------------------------

struct StepLog {
  std::int64_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double r1 = 0.0;
  double pixel_fd = -1.0;  // negative when not computed at this step
  std::size_t mask_violations = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
  std::size_t mask_violations = 0;
  std::int64_t skipped_steps = 0;  // Adam steps dropped for non-finite gradients
  std::uint64_t geometry_hash_before = 0;  // texture stage: frozen-parameter hashes
  std::uint64_t geometry_hash_after = 0;
  std::uint64_t geometry_file_hash_before = 0;
  std::uint64_t geometry_file_hash_after = 0;
};

using ProgressFn = std::function<void(const StepLog&)>;

// Stage 1. Writes out_dir/metrics.csv and out_dir/checkpoint.
TrainResult train_geometry(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                           const std::filesystem::path& out_dir, const ProgressFn& progress = {});

// Stage 2 with the geometry generator loaded from `geo_ckpt` and frozen.
TrainResult train_texture(const TrainConfig& cfg, const std::filesystem::path& geo_ckpt,
                          const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                          const ProgressFn& progress = {});

std::string metrics_csv(const std::vector<StepLog>& log);

// The six ablation runs keyed "a" … "f".
std::vector<std::pair<std::string, TrainConfig>> ablation_matrix(const TrainConfig& base);
void write_ablation_configs(const TrainConfig& base, const std::filesystem::path& dir);

// --- sampling helpers -----------------------------------------------------------

// Generated displacement map in meters for one condition.
DispMap sample_geometry(const Checkpoint& geo, ClothingType type, const std::array<double, 69>& theta,
                        std::uint64_t seed);

struct TextureSample {
  Raster texture;       // UV texture in [0,1]
  DispMap dispmap;      // frozen geometry output used for coupling
};
TextureSample sample_texture(const Checkpoint& geo, const Checkpoint& tex, ClothingType type,
                             const std::vector<double>& c_t, const std::array<double, 69>& theta, std::uint64_t seed);

// --- evaluation -----------------------------------------------------------------

struct ModeGap {
  int category = 0;
  std::size_t records = 0;
  double rms = 0.0;      // over masked texel channels, in units of data_scale
  double max_abs = 0.0;
};

// Per category present in the dataset: mean of `samples` generated maps
// (θ drawn from that category's records) against the data mean.
std::vector<ModeGap> geometry_mode_gaps(const Checkpoint& geo, const std::filesystem::path& data_dir, int samples,
                                        std::uint64_t seed);

// Mean foreground color of `samples` renders whose conditions come from
// random dataset records, rendered with the dataset camera.
std::array<double, 3> mean_foreground_color(const Checkpoint& geo, const Checkpoint& tex,
                                            const std::filesystem::path& data_dir, int samples, std::uint64_t seed);

}  // namespace sculpt
