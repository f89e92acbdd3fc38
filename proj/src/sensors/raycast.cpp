#include "batchlab/sensors/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "batchlab/core/error.hpp"

namespace batchlab::sensors {

std::shared_ptr<const MeshGeometry> MeshGeometry::build(TriMesh mesh) {
  auto geometry = std::make_shared<MeshGeometry>();
  geometry->bvh = Bvh::build(mesh);
  geometry->mesh = std::move(mesh);
  return geometry;
}

int RaycastScene::add(std::shared_ptr<const MeshGeometry> geometry, const Transform& pose) {
  if (!geometry) throw InvalidArgument("null mesh geometry");
  geometries_.push_back(std::move(geometry));
  poses_.push_back(pose);
  return static_cast<int>(geometries_.size()) - 1;
}

int RaycastScene::add(TriMesh mesh) {
  const Transform pose = mesh.pose;
  return add(MeshGeometry::build(std::move(mesh)), pose);
}

void RaycastScene::set_pose(int mesh_id, const Transform& pose) {
  poses_.at(static_cast<std::size_t>(mesh_id)) = pose;
}

const Transform& RaycastScene::pose(int mesh_id) const {
  return poses_.at(static_cast<std::size_t>(mesh_id));
}

const MeshGeometry& RaycastScene::geometry(int mesh_id) const {
  return *geometries_.at(static_cast<std::size_t>(mesh_id));
}

RayHits raycast(const RaycastScene& scene, std::span<const Ray> rays,
                const RaycastOptions& options) {
  std::vector<int> ids = options.mesh_filter;
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(scene.size()));
    for (int i = 0; i < scene.size(); ++i) ids[static_cast<std::size_t>(i)] = i;
  } else {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (const int id : ids) {
      if (id < 0 || id >= scene.size()) {
        throw InvalidArgument("mesh filter id " + std::to_string(id) + " out of range");
      }
    }
  }

  // Snapshot placement so every ray sees the same instant.
  struct Placed {
    const MeshGeometry* geometry;
    Transform world_to_local;
    Mat3 rotation;
    int id;
  };
  std::vector<Placed> placed;
  placed.reserve(ids.size());
  for (const int id : ids) {
    const Transform& pose = scene.pose(id);
    placed.push_back({&scene.geometry(id), inverse(pose), pose.orientation.toRotationMatrix(), id});
  }

  RayHits hits(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (options.before_ray) options.before_ray(r);
    const Ray& ray = rays[r];
    RayHit& best = hits[r];
    for (const Placed& p : placed) {
      const Ray local{p.world_to_local.apply(ray.origin), p.world_to_local.rotate(ray.direction)};
      // Rigid placement preserves t, so the current best bounds the search.
      const LocalHit h =
          p.geometry->bvh.closest_hit(p.geometry->mesh, local, std::min(options.max_range, best.distance));
      if (h.triangle < 0 || !(h.t < best.distance)) continue;  // ids ascend; ties keep lower mesh
      const auto& f = p.geometry->mesh.triangles[static_cast<std::size_t>(h.triangle)];
      const auto& v = p.geometry->mesh.vertices;
      const Vec3 n = (v[static_cast<std::size_t>(f[1])] - v[static_cast<std::size_t>(f[0])])
                         .cross(v[static_cast<std::size_t>(f[2])] - v[static_cast<std::size_t>(f[0])])
                         .normalized();
      best.hit = true;
      best.distance = h.t;
      best.point = ray.origin + h.t * ray.direction;
      best.normal = p.rotation * n;
      best.mesh = p.id;
      best.triangle = h.triangle;
    }
  }
  return hits;
}

std::vector<Ray> RayPattern::place(const Transform& sensor_pose) const {
  std::vector<Ray> rays(directions.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    rays[i].origin = sensor_pose.apply(origins[i]);
    rays[i].direction = sensor_pose.rotate(directions[i]).normalized();
  }
  return rays;
}

RayPattern pattern_grid(double size_x, double size_y, double resolution) {
  if (!(resolution > 0.0)) throw InvalidArgument("grid resolution must be positive");
  if (size_x < 0.0 || size_y < 0.0) throw InvalidArgument("grid size must be non-negative");
  // Tolerance absorbs representation error such as 1.2 / 0.1 = 11.999...
  const int nx = static_cast<int>(std::floor(size_x / resolution + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(size_y / resolution + 1e-9)) + 1;
  RayPattern p;
  p.kind = PatternKind::kGrid;
  p.columns = nx;
  p.rows = ny;
  const double x0 = -0.5 * (nx - 1) * resolution;
  const double y0 = -0.5 * (ny - 1) * resolution;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      p.origins.emplace_back(x0 + i * resolution, y0 + j * resolution, 0.0);
      p.directions.push_back(-Vec3::UnitZ());
    }
  }
  return p;
}

RayPattern pattern_pinhole(const PinholeIntrinsics& k) {
  if (k.width < 1 || k.height < 1) throw InvalidArgument("image size must be at least 1x1");
  if (!(k.focal > 0.0)) throw InvalidArgument("focal length must be positive");
  const Mat3 to_sensor = camera_axes_to_world(CameraConvention::kRos);
  RayPattern p;
  p.kind = PatternKind::kPinhole;
  p.intrinsics = k;
  p.columns = k.width;
  p.rows = k.height;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 optical((u + 0.5 - k.cx) / k.focal, (v + 0.5 - k.cy) / k.focal, 1.0);
      p.origins.push_back(Vec3::Zero());
      p.directions.push_back(to_sensor * optical.normalized());
    }
  }
  return p;
}

RayPattern pattern_lidar(double horizontal_fov, int horizontal_samples,
                         std::span<const double> vertical_angles) {
  if (!(horizontal_fov > 0.0) || horizontal_fov > 2.0 * std::numbers::pi + 1e-12) {
    throw InvalidArgument("horizontal field of view must be in (0, 2 pi]");
  }
  if (horizontal_samples < 1 || vertical_angles.empty()) {
    throw InvalidArgument("lidar needs at least one channel and one horizontal sample");
  }
  // A full revolution must not duplicate its first azimuth.
  const bool full = horizontal_fov >= 2.0 * std::numbers::pi - 1e-9;
  const double step = horizontal_samples == 1
                          ? 0.0
                          : horizontal_fov / (full ? horizontal_samples : horizontal_samples - 1);
  const double start = horizontal_samples == 1 ? 0.0 : -0.5 * horizontal_fov;
  RayPattern p;
  p.kind = PatternKind::kLidar;
  p.columns = horizontal_samples;
  p.rows = static_cast<int>(vertical_angles.size());
  for (const double el : vertical_angles) {
    for (int h = 0; h < horizontal_samples; ++h) {
      const double az = start + h * step;
      p.origins.push_back(Vec3::Zero());
      p.directions.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                std::sin(el));
    }
  }
  return p;
}

DepthImage depth_image(const RayHits& hits, const RayPattern& pattern, DepthMode mode) {
  if (pattern.kind != PatternKind::kPinhole) {
    throw InvalidArgument("depth images require a pinhole pattern");
  }
  if (hits.size() != pattern.size()) throw InvalidArgument("hit count does not match pattern");
  DepthImage img;
  img.width = pattern.intrinsics.width;
  img.height = pattern.intrinsics.height;
  img.data.resize(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    double d = hits[i].distance;
    if (hits[i].hit && mode == DepthMode::kPlanarZ) d *= pattern.directions[i].x();
    img.data[i] = static_cast<float>(d);
  }
  return img;
}

Mat3 camera_axes_to_world(CameraConvention convention) {
  Mat3 m;
  switch (convention) {
    case CameraConvention::kWorld:
      m.setIdentity();
      break;
    case CameraConvention::kRos:
      m << 0, 0, 1, -1, 0, 0, 0, -1, 0;
      break;
    case CameraConvention::kOpenGl:
      m << 0, 0, -1, -1, 0, 0, 0, 1, 0;
      break;
  }
  return m;
}

Quat convert_camera_orientation(const Quat& orientation, CameraConvention from,
                                CameraConvention to) {
  const Mat3 r = orientation.toRotationMatrix() * camera_axes_to_world(from).transpose() *
                 camera_axes_to_world(to);
  Quat q(r);
  q.normalize();
  return q;
}

}  // namespace batchlab::sensors
