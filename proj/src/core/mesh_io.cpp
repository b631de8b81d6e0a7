#include "mesh_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "container.hpp"
#include "error.hpp"

namespace sculpt {

namespace fs = std::filesystem;

ObjMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector2d> tex;
  Faces faces;
  std::vector<std::array<int, 3>> face_vt;
  bool all_vt = true;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ss >> p.x() >> p.y() >> p.z())) fail(Errc::format, path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      verts.push_back(p);
    } else if (tag == "vt") {
      Eigen::Vector2d t;
      if (!(ss >> t.x() >> t.y())) fail(Errc::format, path.string() + ":" + std::to_string(line_no) + ": bad vt");
      tex.emplace_back(t.x(), 1.0 - t.y());
    } else if (tag == "f") {
      std::vector<std::pair<int, int>> corners;
      std::string tok;
      while (ss >> tok) {
        int v = 0, t = 0;
        const auto slash = tok.find('/');
        v = std::stoi(tok.substr(0, slash));
        if (slash != std::string::npos) {
          const auto rest = tok.substr(slash + 1);
          const auto slash2 = rest.find('/');
          const auto tstr = rest.substr(0, slash2);
          if (!tstr.empty()) t = std::stoi(tstr);
        }
        if (v < 0) v = static_cast<int>(verts.size()) + v + 1;
        if (t < 0) t = static_cast<int>(tex.size()) + t + 1;
        corners.emplace_back(v, t);
      }
      if (corners.size() != 3)
        fail(Errc::format, path.string() + ":" + std::to_string(line_no) + ": only triangular faces are supported");
      Face f{};
      std::array<int, 3> ft{};
      for (int k = 0; k < 3; ++k) {
        if (corners[k].first < 1) fail(Errc::format, path.string() + ": face index out of range");
        f[k] = static_cast<std::uint32_t>(corners[k].first - 1);
        ft[k] = corners[k].second - 1;
        if (corners[k].second == 0) all_vt = false;
      }
      faces.push_back(f);
      face_vt.push_back(ft);
    }
  }
  ObjMesh mesh;
  mesh.vertices = Points(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  for (const Face& f : faces)
    for (auto idx : f)
      require(idx < verts.size(), Errc::format, path.string() + ": face references vertex " + std::to_string(idx + 1));
  mesh.faces = std::move(faces);
  if (all_vt && !face_vt.empty()) {
    mesh.corner_uv.resize(face_vt.size());
    for (std::size_t f = 0; f < face_vt.size(); ++f)
      for (int k = 0; k < 3; ++k) {
        const int t = face_vt[f][k];
        require(t >= 0 && static_cast<std::size_t>(t) < tex.size(), Errc::format, path.string() + ": bad vt index");
        mesh.corner_uv[f][k] = tex[t];
      }
  }
  return mesh;
}

void write_obj(const fs::path& path, const Points& vertices, const Faces& faces,
               const std::vector<std::array<Eigen::Vector2d, 3>>& corner_uv, const std::string& texture_png) {
  require(corner_uv.empty() || corner_uv.size() == faces.size(), Errc::dimension_mismatch,
          "write_obj: one UV triple per face required");
  std::ostringstream out;
  char buf[128];
  const std::string stem = path.stem().string();
  if (!texture_png.empty()) {
    out << "mtllib " << stem << ".mtl\n";
    std::ostringstream mtl;
    mtl << "newmtl body\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " << texture_png << "\n";
    write_text_file(fs::path(path).replace_extension(".mtl"), mtl.str());
  }
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", vertices(v, 0), vertices(v, 1), vertices(v, 2));
    out << buf;
  }
  for (const auto& corners : corner_uv)
    for (const auto& uv : corners) {
      std::snprintf(buf, sizeof buf, "vt %.9g %.9g\n", uv.x(), 1.0 - uv.y());
      out << buf;
    }
  if (!texture_png.empty()) out << "usemtl body\n";
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (corner_uv.empty()) {
      out << "f " << faces[f][0] + 1 << ' ' << faces[f][1] + 1 << ' ' << faces[f][2] + 1 << '\n';
    } else {
      out << "f";
      for (int k = 0; k < 3; ++k) out << ' ' << faces[f][k] + 1 << '/' << 3 * f + k + 1;
      out << '\n';
    }
  }
  write_text_file(path, out.str());
}

}  // namespace sculpt
