#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "batchlab/core/math.hpp"
#include "batchlab/sensors/mesh.hpp"

namespace batchlab::sensors {

inline constexpr double kMiss = std::numeric_limits<double>::infinity();

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();  // unit length
};

/// Möller-Trumbore. Returns the ray parameter t >= 0 of the hit, if any.
std::optional<double> intersect_triangle(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                         const Vec3& v2);

struct BvhNode {
  Eigen::AlignedBox3d bounds;
  int left = -1;   // child index, or -1 for a leaf
  int right = -1;
  int first = 0;   // leaf: offset into the triangle order
  int count = 0;   // leaf: number of triangles

  bool leaf() const { return left < 0; }
};

struct LocalHit {
  double t = kMiss;
  int triangle = -1;
};

/// Median-split bounding volume hierarchy over one mesh, in the mesh's local
/// frame. Leaves hold at most kLeafSize triangles.
class Bvh {
 public:
  static constexpr int kLeafSize = 4;

  /// Validates the mesh (empty and degenerate meshes throw) and builds the
  /// tree.
  static Bvh build(const TriMesh& mesh);

  const std::vector<BvhNode>& nodes() const { return nodes_; }
  const std::vector<int>& triangle_order() const { return order_; }

  /// Closest hit in local coordinates with t <= max_t. Equal-t hits resolve
  /// to the lowest triangle index.
  LocalHit closest_hit(const TriMesh& mesh, const Ray& local_ray, double max_t) const;

  /// Triangles in leaves reached by a full traversal (each leaf triangle
  /// listed once per leaf occurrence).
  std::vector<int> enumerate_leaves() const;

 private:
  std::vector<BvhNode> nodes_;
  std::vector<int> order_;
};

}  // namespace batchlab::sensors
