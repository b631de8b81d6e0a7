#include "dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"
#include "image_io.hpp"

namespace sculpt {

namespace fs = std::filesystem;

namespace {

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  require(v.size() == N, Errc::validation,
          std::string("field '") + key + "' has " + std::to_string(v.size()) + " entries, expected " +
              std::to_string(N));
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

void require_keys(const json& j, std::set<std::string> expected) {
  require(j.is_object(), Errc::validation, "record is not a JSON object");
  std::set<std::string> got;
  for (const auto& [k, v] : j.items()) got.insert(k);
  if (got != expected) {
    std::string msg = "record fields {";
    for (const auto& k : got) msg += k + ",";
    msg += "} differ from expected {";
    for (const auto& k : expected) msg += k + ",";
    fail(Errc::validation, msg + "}");
  }
}

template <class Range>
bool all_finite(const Range& r) {
  for (double x : r)
    if (!std::isfinite(x)) return false;
  return true;
}

std::vector<json> read_index_lines(const fs::path& dir) {
  std::ifstream in(dir / "index.jsonl");
  if (!in) fail(Errc::io, "cannot open " + (dir / "index.jsonl").string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(Errc::format, "index.jsonl line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

json geometry_record_to_json(const GeometryRecord& r) {
  return json{{"dispmap", r.dispmap}, {"theta", r.theta}, {"c_g", r.c_g}};
}

json texture_record_to_json(const TextureRecord& r) {
  return json{{"image", r.image}, {"c_g", r.c_g}, {"c_t", r.c_t}, {"theta", r.theta}};
}

GeometryRecord geometry_record_from_json(const json& j) {
  require_keys(j, {"dispmap", "theta", "c_g"});
  try {
    GeometryRecord r;
    r.dispmap = j.at("dispmap").get<std::string>();
    r.theta = fixed_array<kPoseDim>(j, "theta");
    r.c_g = fixed_array<kNumClothingTypes>(j, "c_g");
    require(all_finite(r.theta), Errc::validation, "theta has non-finite values");
    decode_clothing_type(r.c_g);
    return r;
  } catch (const json::exception& e) {
    fail(Errc::validation, std::string("bad geometry record: ") + e.what());
  } catch (const Error& e) {
    fail(Errc::validation, e.what());
  }
}

TextureRecord texture_record_from_json(const json& j) {
  require_keys(j, {"image", "c_g", "c_t", "theta"});
  try {
    TextureRecord r;
    r.image = j.at("image").get<std::string>();
    r.c_g = fixed_array<kNumClothingTypes>(j, "c_g");
    r.c_t = j.at("c_t").get<std::vector<double>>();
    r.theta = fixed_array<kPoseDim>(j, "theta");
    require(r.c_t.size() == kTextDim, Errc::validation,
            "c_t has " + std::to_string(r.c_t.size()) + " entries, expected 512");
    require(all_finite(r.c_t) && all_finite(r.theta), Errc::validation, "record has non-finite values");
    decode_clothing_type(r.c_g);
    return r;
  } catch (const json::exception& e) {
    fail(Errc::validation, std::string("bad texture record: ") + e.what());
  } catch (const Error& e) {
    fail(Errc::validation, e.what());
  }
}

void write_dataset(const fs::path& dir, const DatasetInfo& info, const std::vector<json>& records) {
  fs::create_directories(dir);
  json meta = info.extra;
  meta["kind"] = info.kind;
  meta["count"] = records.size();
  meta["resolution"] = info.resolution;
  meta["body"] = info.body;
  if (!info.camera.empty()) meta["camera"] = info.camera;
  write_json_file(dir / "dataset.json", meta);
  std::string text;
  for (const auto& r : records) text += r.dump() + "\n";
  write_text_file(dir / "index.jsonl", text);
}

DatasetInfo read_dataset_info(const fs::path& dir) {
  const json meta = read_json_file(dir / "dataset.json");
  DatasetInfo info;
  try {
    info.kind = meta.at("kind").get<std::string>();
    info.count = meta.at("count").get<std::size_t>();
    info.resolution = meta.at("resolution").get<int>();
    info.body = meta.value("body", std::string("body"));
    info.camera = meta.value("camera", std::string());
  } catch (const json::exception& e) {
    fail(Errc::format, (dir / "dataset.json").string() + ": " + e.what());
  }
  for (const auto& [k, v] : meta.items())
    if (k != "kind" && k != "count" && k != "resolution" && k != "body" && k != "camera") info.extra[k] = v;
  require(info.kind == "geometry" || info.kind == "texture", Errc::format, "dataset kind must be geometry or texture");
  return info;
}

std::vector<GeometryRecord> read_geometry_index(const fs::path& dir) {
  std::vector<GeometryRecord> out;
  for (const auto& j : read_index_lines(dir)) out.push_back(geometry_record_from_json(j));
  return out;
}

std::vector<TextureRecord> read_texture_index(const fs::path& dir) {
  std::vector<TextureRecord> out;
  for (const auto& j : read_index_lines(dir)) out.push_back(texture_record_from_json(j));
  return out;
}

ValidationReport validate_dataset(const fs::path& dir) {
  require(fs::is_directory(dir), Errc::io, dir.string() + " is not a directory");
  ValidationReport report;
  auto problem = [&](const std::string& msg) {
    report.ok = false;
    report.problems.push_back(msg);
  };
  DatasetInfo info;
  try {
    info = read_dataset_info(dir);
  } catch (const Error& e) {
    problem(e.what());
    return report;
  }
  if (!info.body.empty() && fs::exists(dir / info.body)) {
    try {
      load_body_model(dir / info.body);
    } catch (const Error& e) {
      problem(std::string("body model: ") + e.what());
    }
  }
  std::vector<json> lines;
  try {
    lines = read_index_lines(dir);
  } catch (const Error& e) {
    problem(e.what());
    return report;
  }
  report.records = lines.size();
  if (lines.size() != info.count)
    problem("dataset.json count " + std::to_string(info.count) + " but index has " + std::to_string(lines.size()));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = "record " + std::to_string(i) + ": ";
    try {
      if (info.kind == "geometry") {
        const auto r = geometry_record_from_json(lines[i]);
        const DispMap m = load_dispmap(dir / r.dispmap);
        if (m.resolution() != info.resolution)
          problem(where + "dispmap resolution " + std::to_string(m.resolution()) + " != " +
                  std::to_string(info.resolution));
        if (!all_finite(m.values.data)) problem(where + "dispmap has non-finite values");
      } else {
        const auto r = texture_record_from_json(lines[i]);
        const PngImage img = read_png(dir / r.image);
        if (img.width != info.resolution || img.height != info.resolution)
          problem(where + "image is " + std::to_string(img.width) + "x" + std::to_string(img.height));
        if (img.channels != 4) problem(where + "image must be RGBA");
      }
    } catch (const Error& e) {
      problem(where + e.what());
    }
  }
  return report;
}

Pose pose_from_json(const json& j) {
  Pose p;
  try {
    const auto body = j.at("pose").get<std::vector<double>>();
    require(body.size() == kPoseDim, Errc::invalid_argument,
            "pose must have 69 entries, got " + std::to_string(body.size()));
    std::copy(body.begin(), body.end(), p.body.begin());
    if (j.contains("root_orient")) {
      const auto r = j.at("root_orient").get<std::vector<double>>();
      require(r.size() == 3, Errc::invalid_argument, "root_orient must have 3 entries");
      p.root_orient = {r[0], r[1], r[2]};
    }
    if (j.contains("translation")) {
      const auto t = j.at("translation").get<std::vector<double>>();
      require(t.size() == 3, Errc::invalid_argument, "translation must have 3 entries");
      p.translation = {t[0], t[1], t[2]};
    }
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("bad pose JSON: ") + e.what());
  }
  return p;
}

json pose_to_json(const Pose& pose) {
  return json{{"pose", pose.body},
              {"root_orient", {pose.root_orient.x(), pose.root_orient.y(), pose.root_orient.z()}},
              {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

}  // namespace sculpt
