#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "batchlab/core/math.hpp"
#include "batchlab/sensors/bvh.hpp"
#include "batchlab/sensors/mesh.hpp"

namespace batchlab::sensors {

/// Immutable mesh plus its acceleration structure, shareable across
/// environments.
struct MeshGeometry {
  TriMesh mesh;  // pose ignored; instances carry placement
  Bvh bvh;

  static std::shared_ptr<const MeshGeometry> build(TriMesh mesh);
};

/// Collection of placed meshes. Mesh ids are insertion indices.
class RaycastScene {
 public:
  int add(std::shared_ptr<const MeshGeometry> geometry, const Transform& pose = {});
  /// Builds geometry from `mesh` and places it at `mesh.pose`.
  int add(TriMesh mesh);

  void set_pose(int mesh_id, const Transform& pose);
  const Transform& pose(int mesh_id) const;
  const MeshGeometry& geometry(int mesh_id) const;
  int size() const { return static_cast<int>(geometries_.size()); }

 private:
  std::vector<std::shared_ptr<const MeshGeometry>> geometries_;
  std::vector<Transform> poses_;
};

struct RayHit {
  bool hit = false;
  double distance = kMiss;
  Vec3 point = Vec3::Constant(kMiss);
  Vec3 normal = Vec3::Zero();  // world frame, from triangle winding
  int mesh = -1;
  int triangle = -1;
};

using RayHits = std::vector<RayHit>;

struct RaycastOptions {
  double max_range = 1e6;
  /// Restricts the cast to these mesh ids; empty means all meshes.
  std::vector<int> mesh_filter;
  /// Invoked before each ray is traced; used to verify that every ray of
  /// one call observes the same mesh poses.
  std::function<void(std::size_t ray)> before_ray;
};

/// Closest hit per world-frame ray. Mesh poses are snapshotted on entry.
RayHits raycast(const RaycastScene& scene, std::span<const Ray> rays,
                const RaycastOptions& options = {});

// ---------------------------------------------------------------------------
// Patterns

enum class PatternKind { kGrid, kPinhole, kLidar };

struct PinholeIntrinsics {
  int width = 1;
  int height = 1;
  double focal = 1.0;  // px
  double cx = 0.5;     // px
  double cy = 0.5;     // px
};

/// Ray origins and unit directions in the sensor frame (x forward, y left,
/// z up).
struct RayPattern {
  PatternKind kind = PatternKind::kGrid;
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;
  PinholeIntrinsics intrinsics;  // pinhole only
  int columns = 0;               // grid and lidar: fastest-varying extent
  int rows = 0;

  std::size_t size() const { return directions.size(); }

  /// World-frame rays for a sensor placed at `sensor_pose`.
  std::vector<Ray> place(const Transform& sensor_pose) const;
};

/// Downward rays on a grid centered on the sensor origin; x varies fastest.
RayPattern pattern_grid(double size_x, double size_y, double resolution);

/// Pixel (u, v) maps to normalize(((u + 0.5 - cx) / f, (v + 0.5 - cy) / f, 1))
/// in optical coordinates (x right, y down, z forward), stored in the
/// sensor frame. Pixels are row-major (v outer).
RayPattern pattern_pinhole(const PinholeIntrinsics& intrinsics);

/// Spinning lidar: `horizontal_samples` azimuths spanning `horizontal_fov`
/// centered on +x, one row per vertical angle (elevation, rad).
RayPattern pattern_lidar(double horizontal_fov, int horizontal_samples,
                         std::span<const double> vertical_angles);

// ---------------------------------------------------------------------------
// Depth camera

enum class DepthMode { kDistance, kPlanarZ };

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;  // row-major

  T& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  bool operator==(const Image&) const = default;
};

using DepthImage = Image<float>;

/// Throws InvalidArgument unless `pattern` is a pinhole pattern matching
/// `hits` in size. Misses are +inf.
DepthImage depth_image(const RayHits& hits, const RayPattern& pattern, DepthMode mode);

/// Camera axis conventions. kWorld: x forward, y left, z up. kRos: z forward,
/// x right, y down. kOpenGl: -z forward, x right, y up.
enum class CameraConvention { kWorld, kRos, kOpenGl };

/// Rotation taking vectors in `convention` camera axes to world-convention
/// camera axes.
Mat3 camera_axes_to_world(CameraConvention convention);

/// Re-expresses a camera orientation given in one axis convention in another.
Quat convert_camera_orientation(const Quat& orientation, CameraConvention from,
                                CameraConvention to);

}  // namespace batchlab::sensors
