#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "batchlab/core/math.hpp"

namespace batchlab::sensors {

/// Triangle mesh in its local frame, placed in the world by `pose`.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  Transform pose;

  std::size_t face_count() const { return triangles.size(); }

  /// Throws InvalidArgument naming the first out-of-range index or
  /// degenerate (area <= 1e-12) triangle.
  void validate() const;

  double triangle_area(std::size_t t) const;
  Eigen::AlignedBox3d local_bounds() const;
};

/// Parses the OBJ subset: `v x y z` and `f i j k` (1-based). Blank lines and
/// `#` comments are skipped; anything else throws ParseError with the line.
TriMesh parse_obj(std::istream& in);
TriMesh load_obj(const std::string& path);

/// Writes vertices (in the local frame) and faces in the same subset.
void write_obj(std::ostream& out, const TriMesh& mesh);
void save_obj(const std::string& path, const TriMesh& mesh);

/// UV sphere with `rings` latitude bands and `segments` longitude slices:
/// 2 * segments * (rings - 1) triangles.
TriMesh make_uv_sphere(double radius, int rings, int segments);

/// Axis-aligned box centered at the origin (12 triangles).
TriMesh make_box(const Vec3& half_extents);

/// Single quad in the z = 0 plane (2 triangles, +z facing).
TriMesh make_plane(double size_x, double size_y);

}  // namespace batchlab::sensors
