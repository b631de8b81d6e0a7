#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sculpt {

using json = nlohmann::json;

// Directory container: `manifest.json` plus one raw little-endian blob per
// named array. Blob files are `<name>.f32` or `<name>.u32`, row-major.
//
// manifest.json:
//   { "format": "sculpt-container", "schema_version": 1, "kind": "...",
//     <kind-specific scalar fields>,
//     "arrays": { "<name>": { "file": "<name>.f32", "dtype": "f32",
//                             "shape": [..] }, ... } }
class Container {
 public:
  static constexpr int kSchemaVersion = 1;

  Container() = default;
  explicit Container(std::string kind) : kind_(std::move(kind)) {}

  // Accepts the container directory or the path of its manifest.json.
  static Container read(const std::filesystem::path& path);
  void write(const std::filesystem::path& dir) const;

  const std::string& kind() const { return kind_; }
  json& fields() { return fields_; }
  const json& fields() const { return fields_; }

  void put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values);
  void put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);
  void put_u32(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::uint32_t> values);

  bool has(const std::string& name) const { return arrays_.count(name) != 0; }
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<std::string> names() const;

  // Throws Errc::format when the array is absent, has the wrong dtype, or
  // (when `expected` is non-empty) a different shape.
  std::vector<double> get_f32(const std::string& name, const std::vector<std::int64_t>& expected = {}) const;
  std::vector<float> get_f32_raw(const std::string& name) const;
  std::vector<std::uint32_t> get_u32(const std::string& name, const std::vector<std::int64_t>& expected = {}) const;

 private:
  struct Array {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
  };
  const Array& array(const std::string& name, const char* dtype, const std::vector<std::int64_t>& expected) const;

  std::string kind_;
  json fields_ = json::object();
  std::map<std::string, Array> arrays_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace sculpt
