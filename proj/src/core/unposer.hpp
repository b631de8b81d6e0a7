#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "body.hpp"
#include "labeler.hpp"

namespace sculpt {

struct UnposeResult {
  Points offsets;                      // canonical-space clothing offsets, N×3
  std::vector<std::uint8_t> singular;  // 1 where the blended transform has no inverse
  std::size_t singular_count = 0;
};

// Inverts the per-vertex blended skinning transform, then subtracts the
// shaped template and the pose blendshapes. Singular vertices get zero
// offsets and a flag.
UnposeResult unpose_registration(const BodyModel& model, const Points& registered, const BodyShape& shape,
                                 const Pose& pose);

struct DispMapRecord {
  DispMap map;
  Pose pose;
  ClothingType clothing_type = ClothingType::short_sleeve_short_trouser;
  std::size_t singular_vertices = 0;
};

DispMap registration_to_dispmap(const BodyModel& model, const UvAtlas& atlas, const Points& registered,
                                const BodyShape& shape, const Pose& pose, int resolution,
                                const BakeOptions& options = {}, std::size_t* singular = nullptr);

// A registration on disk: `<name>.obj` (or a container directory `<name>/`
// with array `vertices` N×3) plus sidecar `<name>.json`
// {pose: [69], root_orient: [3], betas: [S], clothing_type: string}.
struct Registration {
  std::string name;
  Points vertices;
  BodyShape shape;
  Pose pose;
  ClothingType clothing_type = ClothingType::short_sleeve_short_trouser;
};

Registration load_registration(const std::filesystem::path& mesh_path, const BodyModel& model);
void save_registration(const Registration& reg, const std::filesystem::path& dir, const BodyModel& model);

struct BatchUnposeOptions {
  int resolution = 256;
  BakeOptions bake{.dilate = true};  // keeps chart-border vertices exact
  double max_failure_fraction = 0.01;
};

struct BatchUnposeReport {
  std::size_t processed = 0;
  std::size_t failed = 0;
  std::vector<std::string> errors;
  bool ok = true;  // false when more than max_failure_fraction of files failed
};

// Writes out_dir/maps/<name>.png (+ sidecars), a copy of the body model in
// out_dir/body and a geometry dataset index ordered by filename.
BatchUnposeReport batch_unpose(const std::filesystem::path& registration_dir, const BodyModel& model,
                               const UvAtlas& atlas, const std::filesystem::path& out_dir,
                               const BatchUnposeOptions& options = {});

}  // namespace sculpt
