#include "batchlab/sensors/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "batchlab/core/error.hpp"

namespace batchlab::sensors {

namespace {

Eigen::AlignedBox3d triangle_box(const TriMesh& mesh, int t) {
  Eigen::AlignedBox3d box;
  for (const int idx : mesh.triangles[static_cast<std::size_t>(t)]) {
    box.extend(mesh.vertices[static_cast<std::size_t>(idx)]);
  }
  return box;
}

// Slab test against a box padded by a relative epsilon so that rays grazing a
// face are never culled before the exact triangle test.
bool ray_hits_box(const Ray& ray, const Eigen::AlignedBox3d& box, double max_t) {
  const Vec3 pad = Vec3::Constant(1e-9) + 1e-9 * box.sizes();
  const Vec3 lo = box.min() - pad;
  const Vec3 hi = box.max() + pad;
  double t0 = 0.0;
  double t1 = max_t;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin(a);
    const double d = ray.direction(a);
    if (d == 0.0) {
      if (o < lo(a) || o > hi(a)) return false;
      continue;
    }
    double ta = (lo(a) - o) / d;
    double tb = (hi(a) - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

std::optional<double> intersect_triangle(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                         const Vec3& v2) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = ray.direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - v0;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = ray.direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t < 0.0) return std::nullopt;
  return t;
}

Bvh Bvh::build(const TriMesh& mesh) {
  mesh.validate();
  Bvh bvh;
  const int n = static_cast<int>(mesh.triangles.size());
  bvh.order_.resize(static_cast<std::size_t>(n));
  std::iota(bvh.order_.begin(), bvh.order_.end(), 0);

  std::vector<Eigen::AlignedBox3d> boxes;
  std::vector<Vec3> centroids;
  boxes.reserve(static_cast<std::size_t>(n));
  centroids.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    boxes.push_back(triangle_box(mesh, t));
    centroids.push_back(boxes.back().center());
  }

  struct Task {
    int node, first, count;
  };
  bvh.nodes_.emplace_back();
  std::vector<Task> stack{{0, 0, n}};
  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    const auto begin = bvh.order_.begin() + task.first;
    const auto end = begin + task.count;

    Eigen::AlignedBox3d bounds;
    Eigen::AlignedBox3d centroid_bounds;
    for (auto it = begin; it != end; ++it) {
      bounds.extend(boxes[static_cast<std::size_t>(*it)]);
      centroid_bounds.extend(centroids[static_cast<std::size_t>(*it)]);
    }
    bvh.nodes_[static_cast<std::size_t>(task.node)].bounds = bounds;

    if (task.count <= kLeafSize) {
      auto& leaf = bvh.nodes_[static_cast<std::size_t>(task.node)];
      leaf.first = task.first;
      leaf.count = task.count;
      continue;
    }

    int axis = 0;
    centroid_bounds.sizes().maxCoeff(&axis);
    const int half = task.count / 2;
    std::nth_element(begin, begin + half, end, [&](int a, int b) {
      const double ca = centroids[static_cast<std::size_t>(a)](axis);
      const double cb = centroids[static_cast<std::size_t>(b)](axis);
      return ca < cb || (ca == cb && a < b);
    });

    const int left = static_cast<int>(bvh.nodes_.size());
    bvh.nodes_.emplace_back();
    bvh.nodes_.emplace_back();
    bvh.nodes_[static_cast<std::size_t>(task.node)].left = left;
    bvh.nodes_[static_cast<std::size_t>(task.node)].right = left + 1;
    stack.push_back({left + 1, task.first + half, task.count - half});
    stack.push_back({left, task.first, half});
  }
  return bvh;
}

LocalHit Bvh::closest_hit(const TriMesh& mesh, const Ray& ray, double max_t) const {
  LocalHit best;
  if (nodes_.empty()) return best;
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const BvhNode& node = nodes_[static_cast<std::size_t>(stack[--top])];
    const double limit = std::min(max_t, best.t);
    if (!ray_hits_box(ray, node.bounds, limit)) continue;
    if (node.leaf()) {
      for (int k = node.first; k < node.first + node.count; ++k) {
        const int tri = order_[static_cast<std::size_t>(k)];
        const auto& f = mesh.triangles[static_cast<std::size_t>(tri)];
        const auto t = intersect_triangle(ray, mesh.vertices[static_cast<std::size_t>(f[0])],
                                          mesh.vertices[static_cast<std::size_t>(f[1])],
                                          mesh.vertices[static_cast<std::size_t>(f[2])]);
        if (!t || *t > max_t) continue;
        if (*t < best.t || (*t == best.t && tri < best.triangle)) best = {*t, tri};
      }
      continue;
    }
    stack[top++] = node.right;
    stack[top++] = node.left;
  }
  return best;
}

std::vector<int> Bvh::enumerate_leaves() const {
  std::vector<int> out;
  if (nodes_.empty()) return out;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const BvhNode& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.leaf()) {
      for (int k = node.first; k < node.first + node.count; ++k) {
        out.push_back(order_[static_cast<std::size_t>(k)]);
      }
    } else {
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
  return out;
}

}  // namespace batchlab::sensors
