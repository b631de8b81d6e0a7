#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "body.hpp"
#include "container.hpp"
#include "labeler.hpp"

namespace sculpt {

// A dataset directory holds `dataset.json` (kind and shared assets),
// `index.jsonl` (one record per line, paths relative to the directory) and
// the referenced files.
//
// geometry record: {"dispmap": "maps/000000.png", "theta": [69], "c_g": [6]}
// texture record:  {"image": "images/000000.png", "c_g": [6], "c_t": [512], "theta": [69]}
struct GeometryRecord {
  std::string dispmap;
  std::array<double, kPoseDim> theta{};
  std::array<double, kNumClothingTypes> c_g{};
};

struct TextureRecord {
  std::string image;
  std::array<double, kNumClothingTypes> c_g{};
  std::vector<double> c_t;
  std::array<double, kPoseDim> theta{};
};

struct DatasetInfo {
  std::string kind;        // "geometry" or "texture"
  std::size_t count = 0;
  int resolution = 0;      // displacement-map or image size
  std::string body = "body";  // model container, relative
  std::string camera;      // texture datasets: camera JSON, relative
  json extra = json::object();
};

json geometry_record_to_json(const GeometryRecord& r);
json texture_record_to_json(const TextureRecord& r);
GeometryRecord geometry_record_from_json(const json& j);
TextureRecord texture_record_from_json(const json& j);

void write_dataset(const std::filesystem::path& dir, const DatasetInfo& info, const std::vector<json>& records);
DatasetInfo read_dataset_info(const std::filesystem::path& dir);
std::vector<GeometryRecord> read_geometry_index(const std::filesystem::path& dir);
std::vector<TextureRecord> read_texture_index(const std::filesystem::path& dir);

struct ValidationReport {
  bool ok = true;
  std::size_t records = 0;
  std::vector<std::string> problems;
};

// Schema, label arity (exactly one c_g code; one 512-d c_t per texture
// record), finite values, referenced files present and readable. A missing
// directory is an Errc::io error rather than a failed report.
ValidationReport validate_dataset(const std::filesystem::path& dir);

// Pose sidecars: {"pose": [69], "root_orient": [3], "translation": [3]?,
// "betas": [S]?}.
Pose pose_from_json(const json& j);
json pose_to_json(const Pose& pose);

}  // namespace sculpt
