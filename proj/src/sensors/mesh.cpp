#include "batchlab/sensors/mesh.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "batchlab/core/error.hpp"

namespace batchlab::sensors {

double TriMesh::triangle_area(std::size_t t) const {
  const auto& f = triangles.at(t);
  const Vec3& a = vertices[static_cast<std::size_t>(f[0])];
  const Vec3& b = vertices[static_cast<std::size_t>(f[1])];
  const Vec3& c = vertices[static_cast<std::size_t>(f[2])];
  return 0.5 * (b - a).cross(c - a).norm();
}

void TriMesh::validate() const {
  if (triangles.empty()) throw InvalidArgument("mesh has no triangles");
  const int n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (const int idx : triangles[t]) {
      if (idx < 0 || idx >= n) {
        throw InvalidArgument("triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(idx) + " out of range");
      }
    }
    if (!(triangle_area(t) > 1e-12)) {
      throw InvalidArgument("triangle " + std::to_string(t) + " is degenerate");
    }
  }
}

Eigen::AlignedBox3d TriMesh::local_bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

TriMesh parse_obj(std::istream& in) {
  TriMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw ParseError(line_no, "malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      for (int& idx : f) {
        std::string tok;
        if (!(ls >> tok)) throw ParseError(line_no, "face needs three indices");
        try {
          std::size_t used = 0;
          idx = std::stoi(tok, &used) - 1;
          if (used != tok.size() || idx < 0) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw ParseError(line_no, "bad face index '" + tok + "'");
        }
      }
      std::string extra;
      if (ls >> extra) throw ParseError(line_no, "only triangular faces are supported");
      mesh.triangles.push_back(f);
    } else {
      throw ParseError(line_no, "unsupported directive '" + tag + "'");
    }
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (const int idx : mesh.triangles[t]) {
      if (idx < 0 || idx >= static_cast<int>(mesh.vertices.size())) {
        throw InvalidArgument("triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(idx + 1) + " out of range");
      }
    }
  }
  return mesh;
}

TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open mesh file '" + path + "'");
  return parse_obj(in);
}

void write_obj(std::ostream& out, const TriMesh& mesh) {
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.triangles) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

void save_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write mesh file '" + path + "'");
  write_obj(out, mesh);
}

TriMesh make_uv_sphere(double radius, int rings, int segments) {
  if (!(radius > 0.0) || rings < 2 || segments < 3) {
    throw InvalidArgument("sphere needs radius > 0, rings >= 2, segments >= 3");
  }
  TriMesh m;
  const double pi = std::numbers::pi;
  m.vertices.emplace_back(0.0, 0.0, radius);
  for (int r = 1; r < rings; ++r) {
    const double theta = pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * pi * s / segments;
      m.vertices.emplace_back(radius * std::sin(theta) * std::cos(phi),
                              radius * std::sin(theta) * std::sin(phi), radius * std::cos(theta));
    }
  }
  m.vertices.emplace_back(0.0, 0.0, -radius);
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring_vertex = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) m.triangles.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
  for (int r = 1; r < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      const int c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      m.triangles.push_back({a, c, d});
      m.triangles.push_back({a, d, b});
    }
  }
  for (int s = 0; s < segments; ++s) {
    m.triangles.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
  }
  return m;
}

TriMesh make_box(const Vec3& h) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                            (i & 4) ? h.z() : -h.z());
  }
  // Outward-facing, counter-clockwise when viewed from outside.
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

TriMesh make_plane(double size_x, double size_y) {
  TriMesh m;
  const double hx = 0.5 * size_x, hy = 0.5 * size_y;
  m.vertices = {{-hx, -hy, 0.0}, {hx, -hy, 0.0}, {hx, hy, 0.0}, {-hx, hy, 0.0}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace batchlab::sensors
