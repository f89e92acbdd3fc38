#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "batchlab/core/error.hpp"
#include "batchlab/sensors/bvh.hpp"
#include "batchlab/sensors/mesh.hpp"
#include "batchlab/sensors/physics_sensors.hpp"
#include "batchlab/sensors/raycast.hpp"
#include "batchlab/sensors/tiling.hpp"

using namespace batchlab;
using namespace batchlab::sensors;

namespace {

// Oracle: every triangle of every mesh, solved as a 3x3 linear system in
// world coordinates.
struct OracleHit {
  bool hit = false;
  double t = std::numeric_limits<double>::infinity();
  int mesh = -1;
  int triangle = -1;
};

OracleHit brute_force(const std::vector<TriMesh>& meshes, const Ray& ray, double max_range) {
  OracleHit best;
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    const TriMesh& mesh = meshes[m];
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const auto& f = mesh.triangles[t];
      const Vec3 a = mesh.pose.apply(mesh.vertices[static_cast<std::size_t>(f[0])]);
      const Vec3 b = mesh.pose.apply(mesh.vertices[static_cast<std::size_t>(f[1])]);
      const Vec3 c = mesh.pose.apply(mesh.vertices[static_cast<std::size_t>(f[2])]);
      Mat3 sys;
      sys.col(0) = -ray.direction;
      sys.col(1) = b - a;
      sys.col(2) = c - a;
      if (std::abs(sys.determinant()) < 1e-12) continue;
      const Vec3 x = sys.fullPivLu().solve(ray.origin - a);
      if (x(0) < 0.0 || x(0) > max_range || x(1) < 0.0 || x(2) < 0.0 || x(1) + x(2) > 1.0) continue;
      if (x(0) < best.t) best = {true, x(0), static_cast<int>(m), static_cast<int>(t)};
    }
  }
  return best;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

Transform random_pose(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  return {Vec3(u(rng), u(rng), u(rng)), quat_exp(random_unit(rng) * u(rng))};
}

}  // namespace

TEST(Mesh, SphereHasRequestedFaceCount) {
  const TriMesh s = make_uv_sphere(1.0, 11, 10);
  EXPECT_EQ(s.face_count(), 200u);
  EXPECT_NO_THROW(s.validate());
}

TEST(Mesh, DegenerateTriangleNamed) {
  TriMesh m = make_plane(1.0, 1.0);
  m.vertices.push_back(Vec3(0, 0, 0));
  m.triangles.push_back({0, 0, 4});
  try {
    Bvh::build(m);
    FAIL() << "expected error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("triangle 2"), std::string::npos);
  }
}

TEST(Mesh, EmptyMeshRejected) { EXPECT_THROW(Bvh::build(TriMesh{}), InvalidArgument); }

TEST(Obj, RoundTrip) {
  const TriMesh s = make_uv_sphere(0.5, 4, 6);
  std::stringstream ss;
  write_obj(ss, s);
  const TriMesh back = parse_obj(ss);
  ASSERT_EQ(back.vertices.size(), s.vertices.size());
  ASSERT_EQ(back.triangles, s.triangles);
  for (std::size_t i = 0; i < s.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], s.vertices[i]);
}

TEST(Obj, CommentsAndBlankLinesSkipped) {
  std::istringstream in("# header\n\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  EXPECT_EQ(parse_obj(in).face_count(), 1u);
}

TEST(Obj, UnsupportedDirectiveReportsLine) {
  std::istringstream in("v 0 0 0\nv 1 0 0\nvn 0 0 1\n");
  try {
    parse_obj(in);
    FAIL() << "expected parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Obj, QuadFaceAndSlashIndicesRejected) {
  std::istringstream quad("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  EXPECT_THROW(parse_obj(quad), ParseError);
  std::istringstream slash("v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1/1 2/2 3/3\n");
  EXPECT_THROW(parse_obj(slash), ParseError);
}

TEST(Bvh, QuadBuildsSingleLeaf) {
  const Bvh b = Bvh::build(make_plane(1.0, 1.0));
  ASSERT_GE(b.nodes().size(), 1u);
  EXPECT_TRUE(b.nodes()[0].leaf());
  EXPECT_EQ(b.nodes()[0].count, 2);
}

TEST(Bvh, SphereEveryTriangleReachableOnce) {
  const TriMesh s = make_uv_sphere(1.0, 11, 10);
  const Bvh b = Bvh::build(s);
  std::vector<int> seen = b.enumerate_leaves();
  std::sort(seen.begin(), seen.end());
  ASSERT_EQ(seen.size(), 200u);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(seen[static_cast<std::size_t>(i)], i);
  for (const auto& n : b.nodes()) {
    if (n.leaf()) EXPECT_LE(n.count, Bvh::kLeafSize);
  }
}

TEST(Bvh, ChildBoxesContainedInParents) {
  const TriMesh s = make_uv_sphere(1.0, 11, 10);
  const Bvh b = Bvh::build(s);
  const auto& nodes = b.nodes();
  for (const auto& n : nodes) {
    if (n.leaf()) {
      for (int k = n.first; k < n.first + n.count; ++k) {
        const auto& f = s.triangles[static_cast<std::size_t>(b.triangle_order()[static_cast<std::size_t>(k)])];
        for (const int v : f) EXPECT_TRUE(n.bounds.contains(s.vertices[static_cast<std::size_t>(v)]));
      }
    } else {
      EXPECT_TRUE(n.bounds.contains(nodes[static_cast<std::size_t>(n.left)].bounds));
      EXPECT_TRUE(n.bounds.contains(nodes[static_cast<std::size_t>(n.right)].bounds));
    }
  }
}

TEST(Raycast, DownOntoGround) {
  RaycastScene scene;
  scene.add(make_plane(10.0, 10.0));
  const std::vector<Ray> rays{{Vec3(0, 0, 1), -Vec3::UnitZ()}};
  const RayHits h = raycast(scene, rays);
  ASSERT_TRUE(h[0].hit);
  EXPECT_NEAR(h[0].distance, 1.0, 1e-12);
  EXPECT_TRUE(h[0].normal.isApprox(Vec3::UnitZ(), 1e-12));
}

TEST(Raycast, ParallelRayMisses) {
  RaycastScene scene;
  scene.add(make_plane(10.0, 10.0));
  const std::vector<Ray> rays{{Vec3(0, 0, 1), Vec3::UnitX()}};
  const RayHits h = raycast(scene, rays);
  EXPECT_FALSE(h[0].hit);
  EXPECT_TRUE(std::isinf(h[0].distance));
  EXPECT_EQ(h[0].mesh, -1);
}

TEST(Raycast, BeyondMaxRangeIsMiss) {
  RaycastScene scene;
  scene.add(make_plane(10.0, 10.0));
  const std::vector<Ray> rays{{Vec3(0, 0, 5), -Vec3::UnitZ()}};
  RaycastOptions opt;
  opt.max_range = 4.0;
  EXPECT_FALSE(raycast(scene, rays, opt)[0].hit);
}

TEST(Raycast, TiesResolveToLowestMeshId) {
  RaycastScene scene;
  scene.add(make_plane(2.0, 2.0));
  scene.add(make_plane(2.0, 2.0));
  const std::vector<Ray> rays{{Vec3(0.3, 0.1, 1), -Vec3::UnitZ()}};
  EXPECT_EQ(raycast(scene, rays)[0].mesh, 0);
}

TEST(Raycast, MeshFilterExcludesActors) {
  RaycastScene scene;
  TriMesh high = make_plane(2.0, 2.0);
  high.pose = Transform::from_translation(Vec3(0, 0, 0.5));
  scene.add(make_plane(2.0, 2.0));
  scene.add(high);
  const std::vector<Ray> rays{{Vec3(0, 0, 1), -Vec3::UnitZ()}};
  EXPECT_EQ(raycast(scene, rays)[0].mesh, 1);
  RaycastOptions opt;
  opt.mesh_filter = {0};
  const RayHits h = raycast(scene, rays, opt);
  EXPECT_EQ(h[0].mesh, 0);
  EXPECT_NEAR(h[0].distance, 1.0, 1e-12);
}

TEST(Raycast, MatchesBruteForceOnSphere) {
  std::mt19937_64 rng(7);
  TriMesh sphere = make_uv_sphere(1.0, 11, 10);
  sphere.pose = random_pose(rng, 0.3);
  RaycastScene scene;
  scene.add(sphere);
  std::vector<Ray> rays;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 origin = 3.0 * random_unit(rng);
    const Vec3 target = sphere.pose.position + 0.9 * Vec3(u(rng), u(rng), u(rng));
    rays.push_back({origin, (target - origin).normalized()});
  }
  const RayHits hits = raycast(scene, rays);
  int hit_count = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const OracleHit o = brute_force({sphere}, rays[i], 1e6);
    ASSERT_EQ(hits[i].hit, o.hit) << "ray " << i;
    if (!o.hit) continue;
    ++hit_count;
    EXPECT_EQ(hits[i].mesh, o.mesh);
    EXPECT_EQ(hits[i].triangle, o.triangle) << "ray " << i;
    EXPECT_LT(std::abs(hits[i].distance - o.t), 1e-6);
  }
  EXPECT_GT(hit_count, 500);
}

TEST(Raycast, MatchesBruteForceOnRandomScenes) {
  std::mt19937_64 rng(11);
  for (int scene_index = 0; scene_index < 20; ++scene_index) {
    std::vector<TriMesh> meshes;
    RaycastScene scene;
    std::uniform_int_distribution<int> count(1, 4);
    const int n = count(rng);
    for (int m = 0; m < n; ++m) {
      TriMesh mesh = (m % 2 == 0) ? make_uv_sphere(0.5, 5, 6) : make_box(Vec3(0.4, 0.3, 0.2));
      mesh.pose = random_pose(rng, 1.0);
      meshes.push_back(mesh);
      scene.add(mesh);
    }
    std::vector<Ray> rays;
    for (int i = 0; i < 200; ++i) rays.push_back({4.0 * random_unit(rng), random_unit(rng)});
    for (int i = 0; i < 200; ++i) {
      const Vec3 o = 4.0 * random_unit(rng);
      rays.push_back({o, (meshes[0].pose.position - o).normalized()});
    }
    const RayHits hits = raycast(scene, rays);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const OracleHit o = brute_force(meshes, rays[i], 1e6);
      ASSERT_EQ(hits[i].hit, o.hit);
      if (!o.hit) continue;
      EXPECT_EQ(hits[i].mesh, o.mesh);
      EXPECT_EQ(hits[i].triangle, o.triangle);
      EXPECT_LT(std::abs(hits[i].distance - o.t), 1e-6);
    }
  }
}

TEST(Raycast, PoseMutationMidCallIsNotObserved) {
  RaycastScene scene;
  const int id = scene.add(make_plane(100.0, 100.0));
  const RayPattern grid = pattern_grid(1.0, 1.0, 0.1);
  const auto rays = grid.place(Transform::from_translation(Vec3(0, 0, 2)));
  RaycastOptions opt;
  opt.before_ray = [&](std::size_t r) {
    if (r == rays.size() / 2) scene.set_pose(id, Transform::from_translation(Vec3(0, 0, 1)));
  };
  const RayHits h = raycast(scene, rays, opt);
  for (const auto& hit : h) EXPECT_DOUBLE_EQ(hit.distance, 2.0);
  // The mutation is visible to the next call.
  EXPECT_DOUBLE_EQ(raycast(scene, rays)[0].distance, 1.0);
}

TEST(Pattern, GridCounts) {
  EXPECT_EQ(pattern_grid(1.6, 1.2, 0.1).size(), 221u);
  EXPECT_EQ(pattern_grid(0.0, 0.0, 0.3).size(), 1u);
  EXPECT_EQ(pattern_grid(1.0, 1.0, 0.5).size(), 9u);
  EXPECT_THROW(pattern_grid(1.0, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(pattern_grid(1.0, 1.0, -0.1), InvalidArgument);
}

TEST(Pattern, GridCountFormulaProperty) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cells(0, 30);
  std::uniform_real_distribution<double> res(0.05, 0.5);
  for (int i = 0; i < 200; ++i) {
    const int cx = cells(rng), cy = cells(rng);
    const double r = res(rng);
    // Sizes slightly above whole multiples so the floor is unambiguous.
    const double sx = cx * r + 0.3 * r, sy = cy * r + 0.3 * r;
    EXPECT_EQ(pattern_grid(sx, sy, r).size(), static_cast<std::size_t>((cx + 1) * (cy + 1)));
  }
}

TEST(Pattern, GridCenteredAndDownward) {
  const RayPattern p = pattern_grid(1.6, 1.2, 0.1);
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) {
    sum += p.origins[i];
    EXPECT_EQ(p.directions[i], -Vec3::UnitZ());
  }
  EXPECT_LT((sum / static_cast<double>(p.size())).norm(), 1e-12);
  EXPECT_NEAR(p.origins.front().x(), -0.8, 1e-12);
  EXPECT_NEAR(p.origins.back().y(), 0.6, 1e-12);
}

TEST(Pattern, PinholeAxisAndCorner) {
  const RayPattern one = pattern_pinhole({1, 1, 1.0, 0.5, 0.5});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(one.directions[0].isApprox(Vec3::UnitX(), 1e-15));

  const RayPattern centered = pattern_pinhole({21, 21, 10.0, 10.5, 10.5});
  EXPECT_TRUE(centered.directions[10 * 21 + 10].isApprox(Vec3::UnitX(), 1e-15));

  const RayPattern p = pattern_pinhole({64, 64, 32.0, 32.0, 32.0});
  const double expected = std::atan(std::sqrt(2.0) * 31.5 / 32.0);
  for (const std::size_t corner : {0ul, 63ul, 64ul * 63ul, 64ul * 64ul - 1ul}) {
    EXPECT_NEAR(std::acos(p.directions[corner].dot(Vec3::UnitX())), expected, 1e-12);
  }
  for (const auto& d : p.directions) EXPECT_NEAR(d.norm(), 1.0, 1e-12);
  // Pixel (0, 0) is top-left: up and to the left of the axis.
  EXPECT_GT(p.directions[0].y(), 0.0);
  EXPECT_GT(p.directions[0].z(), 0.0);
}

TEST(Pattern, LidarDirections) {
  const std::vector<double> channels{-0.1, 0.0, 0.1};
  const RayPattern p = pattern_lidar(2.0 * std::numbers::pi, 36, channels);
  EXPECT_EQ(p.size(), 108u);
  for (const auto& d : p.directions) EXPECT_NEAR(d.norm(), 1.0, 1e-12);
  // Full revolution: first and last azimuths differ by one step.
  EXPECT_NEAR(std::atan2(p.directions[36].y(), p.directions[36].x()), -std::numbers::pi, 1e-12);
  EXPECT_THROW(pattern_lidar(7.0, 10, channels), InvalidArgument);
}

TEST(DepthCamera, LookingDownAtPlane) {
  RaycastScene scene;
  scene.add(make_plane(100.0, 100.0));
  const RayPattern p = pattern_pinhole({16, 12, 10.0, 8.0, 6.0});
  // Forward axis pointing down.
  const Transform cam{Vec3(0, 0, 1), quat_from_axis_angle(Vec3::UnitY(), std::numbers::pi / 2)};
  const RayHits hits = raycast(scene, p.place(cam));
  const DepthImage z = depth_image(hits, p, DepthMode::kPlanarZ);
  ASSERT_EQ(z.width, 16);
  ASSERT_EQ(z.height, 12);
  for (const float d : z.data) EXPECT_NEAR(d, 1.0f, 1e-6f);
  const DepthImage dist = depth_image(hits, p, DepthMode::kDistance);
  EXPECT_GT(dist.at(0, 0), 1.0f);
  EXPECT_GT(dist.at(15, 11), 1.0f);
}

TEST(DepthCamera, MissIsInfinite) {
  RaycastScene scene;
  scene.add(make_plane(1.0, 1.0));
  const RayPattern p = pattern_pinhole({2, 2, 1.0, 1.0, 1.0});
  const RayHits hits = raycast(scene, p.place(Transform::from_translation(Vec3(0, 0, 1))));
  for (const float d : depth_image(hits, p, DepthMode::kPlanarZ).data) EXPECT_TRUE(std::isinf(d));
}

TEST(DepthCamera, SyntheticSceneMatchesBruteForce) {
  std::mt19937_64 rng(5);
  std::vector<TriMesh> meshes;
  RaycastScene scene;
  TriMesh ground = make_plane(20.0, 20.0);
  meshes.push_back(ground);
  scene.add(ground);
  for (int i = 0; i < 3; ++i) {
    TriMesh box = make_box(Vec3(0.3, 0.3, 0.3));
    box.pose = {Vec3(2.0 + i, -0.5 + 0.5 * i, 0.3), quat_exp(0.3 * random_unit(rng))};
    meshes.push_back(box);
    scene.add(box);
  }
  const RayPattern p = pattern_pinhole({8, 8, 6.0, 4.0, 4.0});
  const Transform cam{Vec3(0, 0, 1.0), quat_from_axis_angle(Vec3::UnitY(), 0.3)};
  const auto rays = p.place(cam);
  const DepthImage img = depth_image(raycast(scene, rays), p, DepthMode::kPlanarZ);
  const Vec3 forward = cam.rotate(Vec3::UnitX());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const OracleHit o = brute_force(meshes, rays[i], 1e6);
    const double expected = o.hit ? o.t * rays[i].direction.dot(forward) : kMiss;
    if (!o.hit) {
      EXPECT_TRUE(std::isinf(img.data[i]));
    } else {
      EXPECT_NEAR(img.data[i], expected, 1e-5);
    }
  }
}

TEST(DepthCamera, RejectsNonPinhole) {
  const RayPattern g = pattern_grid(1.0, 1.0, 0.5);
  const RayHits hits(g.size());
  EXPECT_THROW(depth_image(hits, g, DepthMode::kDistance), InvalidArgument);
}

TEST(CameraConvention, RoundTripAndOpticalAxis) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const Quat q = quat_exp(random_unit(rng) * 1.3);
    for (const auto from : {CameraConvention::kWorld, CameraConvention::kRos, CameraConvention::kOpenGl}) {
      for (const auto to : {CameraConvention::kWorld, CameraConvention::kRos, CameraConvention::kOpenGl}) {
        const Quat there = convert_camera_orientation(q, from, to);
        const Quat back = convert_camera_orientation(there, to, from);
        EXPECT_TRUE(approx_equal(Transform::from_rotation(back), Transform::from_rotation(q), 1e-12));
      }
    }
    // The viewing direction in world coordinates is convention independent.
    const Vec3 forward_world = q * Vec3::UnitX();
    EXPECT_TRUE((convert_camera_orientation(q, CameraConvention::kWorld, CameraConvention::kRos) *
                 Vec3::UnitZ()).isApprox(forward_world, 1e-12));
    EXPECT_TRUE((convert_camera_orientation(q, CameraConvention::kWorld, CameraConvention::kOpenGl) *
                 -Vec3::UnitZ()).isApprox(forward_world, 1e-12));
  }
}

TEST(Tiling, FourEnvsTwoPerRow) {
  std::vector<Image<float>> imgs(4, Image<float>{64, 64, std::vector<float>(64 * 64)});
  for (int e = 0; e < 4; ++e) std::fill(imgs[e].data.begin(), imgs[e].data.end(), float(e));
  const TiledLayout layout{64, 64, 2, 4};
  const Image<float> atlas = tile_pack<float>(imgs, layout);
  EXPECT_EQ(atlas.width, 128);
  EXPECT_EQ(atlas.height, 128);
  EXPECT_EQ(atlas.at(70, 10), 1.0f);
  EXPECT_EQ(atlas.at(10, 70), 2.0f);
  EXPECT_EQ(atlas.at(127, 127), 3.0f);
}

TEST(Tiling, SingleEnvAtlasIsImage) {
  Image<float> img{3, 2, {1, 2, 3, 4, 5, 6}};
  const std::vector<Image<float>> imgs{img};
  EXPECT_EQ(tile_pack<float>(imgs, {3, 2, 1, 1}), img);
}

TEST(Tiling, RandomRoundTripBitwise) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-1e6f, 1e6f);
  std::uniform_int_distribution<int> dim(1, 17);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = dim(rng), h = dim(rng), n = dim(rng), per_row = std::uniform_int_distribution<int>(1, n)(rng);
    std::vector<Image<float>> imgs(static_cast<std::size_t>(n));
    for (auto& img : imgs) {
      img.width = w;
      img.height = h;
      for (int k = 0; k < w * h; ++k) img.data.push_back(u(rng));
    }
    imgs[0].data[0] = std::numeric_limits<float>::infinity();
    const TiledLayout layout{w, h, per_row, n};
    const auto back = tile_unpack(tile_pack<float>(imgs, layout), layout);
    ASSERT_EQ(back.size(), imgs.size());
    for (std::size_t e = 0; e < imgs.size(); ++e) {
      EXPECT_EQ(0, std::memcmp(back[e].data.data(), imgs[e].data.data(), imgs[e].data.size() * sizeof(float)));
    }
  }
}

TEST(Tiling, ShapeMismatchRejected) {
  std::vector<Image<float>> imgs{{2, 2, std::vector<float>(4)}, {3, 2, std::vector<float>(6)}};
  EXPECT_THROW(tile_pack<float>(imgs, {2, 2, 2, 2}), InvalidArgument);
}

namespace {

dyn::ProbeContact touching(double force, int surface = 0) {
  dyn::ProbeContact c;
  c.normal_force = force;
  c.in_contact = force > 0.0;
  c.surface_id = surface;
  return c;
}

}  // namespace

TEST(ContactSensor, AirborneThenTouchdown) {
  const double dt = 1e-3;
  ContactReport r;
  const std::vector<dyn::ProbeContact> air{touching(0.0)}, ground{touching(50.0)};
  for (int i = 0; i < 10; ++i) contact_update(r, ground, dt);
  for (int i = 0; i < 300; ++i) contact_update(r, air, dt);
  contact_update(r, ground, dt);
  EXPECT_NEAR(r.last_air_duration, 0.3, dt);
  EXPECT_NEAR(r.last_contact_duration, 0.01, dt);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_FALSE(r.history[0].contact);
  EXPECT_TRUE(r.history[1].contact);
}

TEST(ContactSensor, RestingBody) {
  ContactReport r;
  const std::vector<dyn::ProbeContact> ground{touching(9.81)};
  for (int i = 1; i <= 100; ++i) {
    contact_update(r, ground, 0.01);
    EXPECT_EQ(r.air_time, 0.0);
    EXPECT_NEAR(r.contact_time, 0.01 * i, 1e-12);
  }
  EXPECT_NEAR(r.net_force.z(), 9.81, 1e-12);
}

TEST(ContactSensor, ZeroForcesForever) {
  ContactReport r;
  const std::vector<dyn::ProbeContact> none;
  for (int i = 1; i <= 50; ++i) contact_update(r, none, 0.02);
  EXPECT_NEAR(r.air_time, 1.0, 1e-12);
  EXPECT_EQ(r.contact_time, 0.0);
  EXPECT_EQ(r.last_air_duration, 0.0);
  EXPECT_EQ(r.last_contact_duration, 0.0);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.net_force, Vec3::Zero());
}

TEST(ContactSensor, TimersExclusiveAndHistoryBounded) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution flip(0.2);
  ContactReport r;
  bool on = false;
  for (int i = 0; i < 2000; ++i) {
    if (flip(rng)) on = !on;
    const std::vector<dyn::ProbeContact> c{touching(on ? 1.0 : 0.0)};
    contact_update(r, c, 0.005);
    EXPECT_EQ(r.contact_time * r.air_time, 0.0);
    EXPECT_GE(r.last_air_duration, 0.0);
    EXPECT_GE(r.last_contact_duration, 0.0);
    EXPECT_LE(r.history.size(), 3u);
  }
}

TEST(ContactSensor, SurfaceFilter) {
  ContactReport r;
  const std::vector<dyn::ProbeContact> c{touching(5.0, 1), touching(7.0, 2)};
  contact_update(r, c, 0.01, std::vector<int>{2});
  EXPECT_NEAR(r.net_force.z(), 7.0, 1e-12);
  contact_update(r, c, 0.01, std::vector<int>{3});
  EXPECT_EQ(r.net_force, Vec3::Zero());
  EXPECT_GT(r.air_time, 0.0);
}

TEST(ContactSensor, GroupsProbesByBody) {
  dyn::ContactPointSet probes;
  probes.probes = {{1, Vec3::Zero()}, {2, Vec3::Zero()}, {1, Vec3::UnitX()}};
  ContactSensor sensor({1, 2}, probes);
  const std::vector<dyn::ProbeContact> c{touching(1.0), touching(0.0), touching(2.0)};
  sensor.update(c, 0.01);
  EXPECT_NEAR(sensor.report(0).net_force.z(), 3.0, 1e-12);
  EXPECT_TRUE(sensor.report(0).in_contact());
  EXPECT_FALSE(sensor.report(1).in_contact());
}

TEST(Imu, StationaryZUp) {
  Imu imu;
  ImuSample s;
  for (int i = 0; i < 3; ++i) s = imu.update(Transform::identity(), Vec6::Zero(), 0.01);
  EXPECT_TRUE(s.linear_acceleration.isApprox(Vec3(0, 0, 9.81), 1e-12));
  EXPECT_TRUE(s.projected_gravity.isApprox(Vec3(0, 0, -1), 1e-12));
}

TEST(Imu, TiltedGravityProjectionUnit) {
  Imu imu(Transform::from_rotation(quat_from_axis_angle(Vec3::UnitX(), 0.7)));
  const ImuSample s = imu.update(Transform::identity(), Vec6::Zero(), 0.01);
  EXPECT_NEAR(s.projected_gravity.norm(), 1.0, 1e-12);
  EXPECT_NEAR(s.linear_acceleration.norm(), 9.81, 1e-12);
}

TEST(Imu, FreeFallReadsZero) {
  Imu imu;
  const double dt = 1e-3;
  const Vec3 g = dyn::kDefaultGravity;
  ImuSample s;
  for (int i = 0; i < 5; ++i) {
    Vec6 vel = Vec6::Zero();
    vel.tail<3>() = g * (i * dt);
    const Transform pose = Transform::from_translation(0.5 * g * (i * dt) * (i * dt));
    // The world-origin linear velocity equals the point velocity for pure
    // translation.
    s = imu.update(pose, vel, dt, g);
  }
  EXPECT_LT(s.linear_acceleration.norm(), 1e-9);
}

TEST(Imu, CentripetalOnSpinningBody) {
  const double omega = 3.0, r = 0.4, dt = 1e-3;
  Imu imu(Transform::from_translation(Vec3(r, 0, 0)));
  ImuSample s;
  for (int i = 0; i <= 200; ++i) {
    const double angle = omega * i * dt;
    const Transform pose = Transform::from_rotation(quat_from_axis_angle(Vec3::UnitZ(), angle));
    Vec6 vel = Vec6::Zero();
    vel(2) = omega;  // angular about z through the world origin
    s = imu.update(pose, vel, dt, Vec3::Zero());
  }
  const double expected = omega * omega * r;
  EXPECT_NEAR(s.linear_acceleration.norm(), expected, 0.02 * expected);
  // Centripetal: points from the sensor toward the spin axis (-x in sensor frame).
  EXPECT_LT(s.linear_acceleration.x(), 0.0);
  EXPECT_NEAR(s.angular_velocity.z(), omega, 1e-12);
}

TEST(Imu, DeterministicAndSeeded) {
  auto run = [](ImuNoise noise) {
    Imu imu({}, noise);
    std::vector<Vec3> out;
    for (int i = 0; i < 50; ++i) {
      Vec6 vel = Vec6::Zero();
      vel(0) = 0.1 * i;
      out.push_back(imu.update(Transform::identity(), vel, 0.01).linear_acceleration);
    }
    return out;
  };
  EXPECT_EQ(run({}), run({}));
  ImuNoise n;
  n.accel_std = Vec3::Constant(0.1);
  n.accel_bias_walk_std = Vec3::Constant(0.01);
  n.seed = 42;
  const auto a = run(n), b = run(n);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(0, std::memcmp(a[i].data(), b[i].data(), sizeof(double) * 3));
  }
  n.seed = 43;
  EXPECT_NE(run(n), a);
}

TEST(Imu, RejectsNonPositiveDt) {
  Imu imu;
  EXPECT_THROW(imu.update(Transform::identity(), Vec6::Zero(), 0.0), InvalidArgument);
}

TEST(FrameTransform, IdentityAndTranslation) {
  const Transform src{Vec3(1, 2, 3), quat_from_axis_angle(Vec3::UnitZ(), 0.4)};
  const std::vector<Transform> same{src}, ident{Transform::identity()};
  EXPECT_TRUE(approx_equal(frame_transform(src, {}, same, ident)[0], Transform::identity(), 1e-12));

  const std::vector<Transform> targets{Transform::from_translation(Vec3(4, 6, 3))};
  const auto rel = frame_transform(Transform::from_translation(Vec3(1, 2, 3)), {}, targets, ident);
  EXPECT_TRUE(rel[0].position.isApprox(Vec3(3, 4, 0), 1e-12));
}

TEST(FrameTransform, MatchesMatrixOracle) {
  std::mt19937_64 rng(8);
  auto matrix = [](const Transform& t) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = t.orientation.toRotationMatrix();
    m.topRightCorner<3, 1>() = t.position;
    return m;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const Transform sp = random_pose(rng, 2.0), so = random_pose(rng, 0.5);
    std::vector<Transform> tp, to;
    for (int k = 0; k < 4; ++k) {
      tp.push_back(random_pose(rng, 2.0));
      to.push_back(random_pose(rng, 0.5));
    }
    const auto rel = frame_transform(sp, so, tp, to);
    for (std::size_t k = 0; k < tp.size(); ++k) {
      const Eigen::Matrix4d expected = (matrix(sp) * matrix(so)).inverse() * matrix(tp[k]) * matrix(to[k]);
      EXPECT_TRUE(matrix(rel[k]).isApprox(expected, 1e-10));
    }
  }
}

TEST(FrameTransform, UnknownLinkRejected) {
  dyn::KinematicTree tree;
  tree.add_link({.name = "base", .parent = -1, .joint = dyn::JointKind::kFixed});
  EXPECT_THROW(FrameTransformer(tree, {"base", {}}, {{"foot", {}}}), InvalidArgument);
  FrameTransformer ft(tree, {"base", {}}, {{"base", Transform::from_translation(Vec3(0, 0, 1))}});
  const std::vector<Transform> poses{Transform::from_translation(Vec3(5, 0, 0))};
  EXPECT_TRUE(ft.compute(poses)[0].position.isApprox(Vec3(0, 0, 1), 1e-12));
}

TEST(SensorClock, RecomputeCountMatchesPeriod) {
  for (const double period : {0.0, 0.005, 0.02, 0.03, 0.1}) {
    SensorClock clock(period);
    const double dt = 0.005, horizon = 2.0;
    int updates = 0;
    const int steps = static_cast<int>(std::lround(horizon / dt));
    for (int i = 1; i <= steps; ++i) updates += clock.tick(i * dt) ? 1 : 0;
    const double expected = period > 0.0 ? std::floor(horizon / period) : steps;
    EXPECT_LE(std::abs(updates - expected), 1.0) << "period " << period;
  }
}

TEST(SensorClock, ResetForcesUpdate) {
  SensorClock clock(1.0);
  EXPECT_TRUE(clock.tick(0.0));
  EXPECT_FALSE(clock.tick(0.5));
  clock.reset();
  EXPECT_TRUE(clock.tick(0.6));
}
