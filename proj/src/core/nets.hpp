#pragma once

#include <cstdint>
#include <vector>

#include "autodiff.hpp"
#include "container.hpp"
#include "raster.hpp"

namespace sculpt {

inline constexpr int kLatentDim = 512;
inline constexpr int kConditionTypes = 6;

// Shared by both generators so their per-level blocks line up for coupling.
struct GeneratorConfig {
  int resolution = 32;                      // 4·2^L
  std::vector<int> channels{128, 96, 64, 48};  // one width per level, L+1 entries
  int style_dim = 128;
  int mapping_layers = 2;
  int cg_embed = 16;
  int pose_embed = 64;

  int levels() const { return static_cast<int>(channels.size()) - 1; }
  void validate() const;
};

struct DiscriminatorConfig {
  std::vector<int> channels{32, 64, 64, 64};  // widths from full resolution down to 4×4
  int cond_embed = 16;
  int hidden = 64;

  void validate() const;
};

json to_json(const GeneratorConfig& cfg);
json to_json(const DiscriminatorConfig& cfg);
GeneratorConfig generator_config_from_json(const json& j);
DiscriminatorConfig discriminator_config_from_json(const json& j);

// Parameters. Geometry head starts at zero (so an untrained generator adds no
// clothing); discriminator output layers start at zero (logits 0).
ad::ParamSet init_geometry_generator(const GeneratorConfig& cfg, std::uint64_t seed);
ad::ParamSet init_texture_generator(const GeneratorConfig& cfg, std::uint64_t seed);
ad::ParamSet init_discriminator(const DiscriminatorConfig& cfg, int resolution, int cond_dim, std::uint64_t seed);

struct GeoForward {
  ad::Tensor map;                     // [N,R,R,3], zero off-mask
  std::vector<ad::Tensor> features;   // per level, after the nonlinearity
};

// Inputs are batched rows: z [N,512], c_g [N,6], pose [N,69]; mask is [1,R,R,1].
GeoForward g_geo_forward(const GeneratorConfig& cfg, const ad::Bound& params, const ad::Tensor& z,
                         const ad::Tensor& c_g, const ad::Tensor& pose, const ad::Tensor& mask);

// z [N,512], c_g [N,6], c_t [N,512]. When geo_features is non-null each
// level's block output becomes (own + gate·geo_features[level]); null runs
// the uncoupled generator. Output [N,R,R,3] in [0,1].
ad::Tensor g_tex_forward(const GeneratorConfig& cfg, const ad::Bound& params, const ad::Tensor& z,
                         const ad::Tensor& c_g, const ad::Tensor& c_t, const std::vector<ad::Tensor>* geo_features);

// x [N,R,R,3] scaled to [-1,1]; cond [N,cond_dim] (c_g with pose or c_t).
// Returns logits [N,1].
ad::Tensor d_forward(const DiscriminatorConfig& cfg, const ad::Bound& params, const ad::Tensor& x,
                     const ad::Tensor& cond);

// Constant [1,R,R,1] mask tensor.
ad::Tensor mask_tensor(ad::Tape& tape, const Mask& mask);

}  // namespace sculpt
