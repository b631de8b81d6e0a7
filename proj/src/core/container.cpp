#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace sculpt {

namespace fs = std::filesystem;

namespace {

std::int64_t shape_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    require(d >= 0, Errc::format, "negative array dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

template <class T>
void store_le(std::uint8_t* dst, T v) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  std::memcpy(dst, &bits, 4);
}

template <class T>
T load_le(const std::uint8_t* src) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, src, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  T v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "short write to " + path.string());
}

std::string read_text_file(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

Container Container::read(const fs::path& path) {
  fs::path dir = path;
  if (fs::is_regular_file(path) && path.filename() == "manifest.json") dir = path.parent_path();
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) fail(Errc::io, "no manifest.json in " + dir.string());
  const json manifest = read_json_file(manifest_path);

  Container c;
  try {
    if (manifest.value("format", std::string()) != "sculpt-container")
      fail(Errc::format, manifest_path.string() + ": not a sculpt container");
    const int version = manifest.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      fail(Errc::format, manifest_path.string() + ": unsupported schema_version " + std::to_string(version));
    c.kind_ = manifest.value("kind", std::string());
    for (const auto& [key, value] : manifest.items()) {
      if (key == "format" || key == "schema_version" || key == "kind" || key == "arrays") continue;
      c.fields_[key] = value;
    }
    for (const auto& [name, info] : manifest.at("arrays").items()) {
      Array a;
      a.dtype = info.at("dtype").get<std::string>();
      a.shape = info.at("shape").get<std::vector<std::int64_t>>();
      if (a.dtype != "f32" && a.dtype != "u32") fail(Errc::format, "array " + name + ": unsupported dtype " + a.dtype);
      a.bytes = read_file_bytes(dir / info.at("file").get<std::string>());
      const auto expected = static_cast<std::size_t>(shape_count(a.shape)) * 4;
      if (a.bytes.size() != expected)
        fail(Errc::format, "array " + name + ": blob holds " + std::to_string(a.bytes.size()) + " bytes, shape " +
                               shape_str(a.shape) + " needs " + std::to_string(expected));
      c.arrays_.emplace(name, std::move(a));
    }
  } catch (const json::exception& e) {
    fail(Errc::format, manifest_path.string() + ": " + e.what());
  }
  return c;
}

void Container::write(const fs::path& dir) const {
  fs::create_directories(dir);
  json manifest = json::object();
  manifest["format"] = "sculpt-container";
  manifest["schema_version"] = kSchemaVersion;
  manifest["kind"] = kind_;
  for (const auto& [key, value] : fields_.items()) manifest[key] = value;
  json arrays = json::object();
  for (const auto& [name, a] : arrays_) {
    const std::string file = name + "." + a.dtype;
    arrays[name] = {{"file", file}, {"dtype", a.dtype}, {"shape", a.shape}};
    write_file_bytes(dir / file, a.bytes);
  }
  manifest["arrays"] = arrays;
  write_json_file(dir / "manifest.json", manifest);
}

void Container::put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values) {
  std::vector<float> f(values.begin(), values.end());
  put_f32(name, std::move(shape), std::span<const float>(f));
}

void Container::put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values) {
  require(static_cast<std::size_t>(shape_count(shape)) == values.size(), Errc::dimension_mismatch,
          "array " + name + ": shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
              " values");
  Array a{"f32", std::move(shape), std::vector<std::uint8_t>(values.size() * 4)};
  for (std::size_t i = 0; i < values.size(); ++i) store_le(a.bytes.data() + 4 * i, values[i]);
  arrays_[name] = std::move(a);
}

void Container::put_u32(const std::string& name, std::vector<std::int64_t> shape,
                        std::span<const std::uint32_t> values) {
  require(static_cast<std::size_t>(shape_count(shape)) == values.size(), Errc::dimension_mismatch,
          "array " + name + ": shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
              " values");
  Array a{"u32", std::move(shape), std::vector<std::uint8_t>(values.size() * 4)};
  for (std::size_t i = 0; i < values.size(); ++i) store_le(a.bytes.data() + 4 * i, values[i]);
  arrays_[name] = std::move(a);
}

const std::vector<std::int64_t>& Container::shape(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) fail(Errc::format, "container has no array '" + name + "'");
  return it->second.shape;
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  for (const auto& [name, a] : arrays_) out.push_back(name);
  return out;
}

const Container::Array& Container::array(const std::string& name, const char* dtype,
                                         const std::vector<std::int64_t>& expected) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) fail(Errc::format, "container has no array '" + name + "'");
  const Array& a = it->second;
  if (a.dtype != dtype) fail(Errc::format, "array " + name + " has dtype " + a.dtype + ", expected " + dtype);
  if (!expected.empty() && a.shape != expected)
    fail(Errc::format, "array " + name + " has shape " + shape_str(a.shape) + ", expected " + shape_str(expected));
  return a;
}

std::vector<double> Container::get_f32(const std::string& name, const std::vector<std::int64_t>& expected) const {
  const Array& a = array(name, "f32", expected);
  std::vector<double> out(a.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<float>(a.bytes.data() + 4 * i);
  return out;
}

std::vector<float> Container::get_f32_raw(const std::string& name) const {
  const Array& a = array(name, "f32", {});
  std::vector<float> out(a.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<float>(a.bytes.data() + 4 * i);
  return out;
}

std::vector<std::uint32_t> Container::get_u32(const std::string& name,
                                              const std::vector<std::int64_t>& expected) const {
  const Array& a = array(name, "u32", expected);
  std::vector<std::uint32_t> out(a.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<std::uint32_t>(a.bytes.data() + 4 * i);
  return out;
}

}  // namespace sculpt
