#include "unposer.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "container.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "mesh_io.hpp"
#include "parallel.hpp"

namespace sculpt {

namespace fs = std::filesystem;

UnposeResult unpose_registration(const BodyModel& model, const Points& registered, const BodyShape& shape,
                                 const Pose& pose) {
  require(registered.rows() == model.num_vertices(), Errc::dimension_mismatch,
          "registration has " + std::to_string(registered.rows()) + " vertices, model has " +
              std::to_string(model.num_vertices()));
  require(registered.allFinite(), Errc::invalid_argument, "registration has non-finite vertices");
  const auto transforms = vertex_transforms(model, shape, pose);
  const Points base = shaped_template(model, shape) + pose_blendshape(model, pose);

  UnposeResult out{Points::Zero(model.num_vertices(), 3), std::vector<std::uint8_t>(model.num_vertices(), 0), 0};
  for (int v = 0; v < model.num_vertices(); ++v) {
    const Eigen::Matrix3d r = transforms[v].topLeftCorner<3, 3>();
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(r);
    if (!lu.isInvertible() || std::abs(r.determinant()) < 1e-12) {
      out.singular[v] = 1;
      ++out.singular_count;
      continue;
    }
    const Eigen::Vector3d p = registered.row(v).transpose() - transforms[v].topRightCorner<3, 1>();
    const Eigen::Vector3d canon = lu.solve(p);
    out.offsets.row(v) = canon.transpose() - base.row(v);
  }
  return out;
}

DispMap registration_to_dispmap(const BodyModel& model, const UvAtlas& atlas, const Points& registered,
                                const BodyShape& shape, const Pose& pose, int resolution, const BakeOptions& options,
                                std::size_t* singular) {
  const UnposeResult u = unpose_registration(model, registered, shape, pose);
  if (singular) *singular = u.singular_count;
  return bake_dispmap(u.offsets, atlas, resolution, options);
}

namespace {

fs::path sidecar_for(const fs::path& mesh_path) {
  fs::path p = mesh_path;
  if (p.filename().empty()) p = p.parent_path();
  return p.parent_path() / (p.stem().string() + ".json");
}

}  // namespace

Registration load_registration(const fs::path& mesh_path, const BodyModel& model) {
  Registration reg;
  reg.name = mesh_path.stem().string();
  if (fs::is_directory(mesh_path)) {
    const Container c = Container::read(mesh_path);
    const auto v = c.get_f32("vertices", {model.num_vertices(), 3});
    reg.vertices = Points(model.num_vertices(), 3);
    std::copy(v.begin(), v.end(), reg.vertices.data());
  } else {
    const ObjMesh obj = read_obj(mesh_path);
    require(obj.vertices.rows() == model.num_vertices(), Errc::format,
            mesh_path.string() + ": " + std::to_string(obj.vertices.rows()) + " vertices, model topology has " +
                std::to_string(model.num_vertices()));
    require(obj.faces.empty() || obj.faces == model.faces, Errc::format,
            mesh_path.string() + ": face list differs from the model topology");
    reg.vertices = obj.vertices;
  }
  const json side = read_json_file(sidecar_for(mesh_path));
  reg.pose = pose_from_json(side);
  reg.shape = BodyShape::zeros(model.num_betas());
  try {
    if (side.contains("betas")) {
      const auto b = side.at("betas").get<std::vector<double>>();
      require(static_cast<int>(b.size()) == model.num_betas(), Errc::format,
              "sidecar betas length " + std::to_string(b.size()) + " != model S " + std::to_string(model.num_betas()));
      reg.shape.betas = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    reg.clothing_type = parse_clothing_type(side.at("clothing_type").get<std::string>());
  } catch (const json::exception& e) {
    fail(Errc::format, sidecar_for(mesh_path).string() + ": " + e.what());
  }
  return reg;
}

void save_registration(const Registration& reg, const fs::path& dir, const BodyModel& model) {
  fs::create_directories(dir);
  write_obj(dir / (reg.name + ".obj"), reg.vertices, model.faces, {});
  json side = pose_to_json(reg.pose);
  side["betas"] = std::vector<double>(reg.shape.betas.data(), reg.shape.betas.data() + reg.shape.betas.size());
  side["clothing_type"] = std::string(clothing_type_name(reg.clothing_type));
  write_json_file(dir / (reg.name + ".json"), side);
}

BatchUnposeReport batch_unpose(const fs::path& registration_dir, const BodyModel& model, const UvAtlas& atlas,
                               const fs::path& out_dir, const BatchUnposeOptions& options) {
  require(fs::is_directory(registration_dir), Errc::io, registration_dir.string() + " is not a directory");
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(registration_dir)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".obj") inputs.push_back(p);
    if (entry.is_directory() && fs::exists(p / "manifest.json")) inputs.push_back(p);
  }
  std::sort(inputs.begin(), inputs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  struct Slot {
    bool ok = false;
    std::string error;
    json record;
  };
  std::vector<Slot> slots(inputs.size());
  fs::create_directories(out_dir / "maps");
  parallel_for(inputs.size(), [&](std::size_t i) {
    try {
      const Registration reg = load_registration(inputs[i], model);
      std::size_t singular = 0;
      const DispMap map = registration_to_dispmap(model, atlas, reg.vertices, reg.shape, reg.pose, options.resolution,
                                                  options.bake, &singular);
      const std::string rel = "maps/" + reg.name + ".png";
      save_dispmap(map, out_dir / rel);
      GeometryRecord rec;
      rec.dispmap = rel;
      rec.theta = reg.pose.body;
      rec.c_g = encode_clothing_type(reg.clothing_type);
      slots[i].record = geometry_record_to_json(rec);
      slots[i].ok = true;
      if (singular) slots[i].error = reg.name + ": " + std::to_string(singular) + " singular vertices (zeroed)";
    } catch (const Error& e) {
      slots[i].error = inputs[i].filename().string() + ": " + e.what();
    }
  });

  BatchUnposeReport report;
  std::vector<json> records;
  for (auto& s : slots) {
    if (s.ok) {
      ++report.processed;
      records.push_back(std::move(s.record));
    } else {
      ++report.failed;
    }
    if (!s.error.empty()) report.errors.push_back(s.error);
  }
  save_body_model(model, out_dir / "body");
  save_atlas(atlas, out_dir / "atlas");
  DatasetInfo info;
  info.kind = "geometry";
  info.resolution = options.resolution;
  info.extra["atlas"] = "atlas";
  write_dataset(out_dir, info, records);
  report.ok = inputs.empty() ||
              static_cast<double>(report.failed) <= options.max_failure_fraction * static_cast<double>(inputs.size());
  return report;
}

}  // namespace sculpt
