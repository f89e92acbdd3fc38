#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "batchlab/core/error.hpp"
#include "batchlab/core/lazy_cache.hpp"
#include "batchlab/core/math.hpp"
#include "batchlab/core/registry.hpp"

namespace batchlab {
namespace {

Transform random_transform(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return {Vec3(n(rng), n(rng), n(rng)), q};
}

TEST(Transform, ComposeWithIdentityIsNoop) {
  std::mt19937_64 rng(1);
  const Transform t = random_transform(rng);
  EXPECT_TRUE(approx_equal(compose(t, Transform::identity()), t, 1e-12));
  EXPECT_TRUE(approx_equal(compose(Transform::identity(), t), t, 1e-12));
}

TEST(Transform, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Transform t = random_transform(rng);
    EXPECT_TRUE(approx_equal(compose(t, inverse(t)), Transform::identity(), 1e-9));
    EXPECT_TRUE(approx_equal(compose(inverse(t), t), Transform::identity(), 1e-9));
  }
}

TEST(Transform, RotationThenTranslationAppliesTranslationFirst) {
  const Transform rot = Transform::from_rotation(quat_from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2));
  const Transform tr = Transform::from_translation(Vec3(1, 0, 0));
  const Transform c = compose(rot, tr);
  EXPECT_NEAR(c.position.x(), 0.0, 1e-12);
  EXPECT_NEAR(c.position.y(), 1.0, 1e-12);
  EXPECT_NEAR(c.position.z(), 0.0, 1e-12);
}

TEST(Transform, ComposeIsAssociative) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Transform a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    EXPECT_TRUE(approx_equal(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9));
  }
}

TEST(Transform, RelativePose) {
  std::mt19937_64 rng(4);
  const Transform t = random_transform(rng);
  EXPECT_TRUE(approx_equal(relative_pose(Transform::identity(), t), t, 1e-12));
  EXPECT_TRUE(approx_equal(relative_pose(t, t), Transform::identity(), 1e-12));
  const Transform rel = relative_pose(Transform::from_translation(Vec3(1, 0, 0)),
                                      Transform::from_translation(Vec3(2, 0, 0)));
  EXPECT_NEAR((rel.position - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
  for (int i = 0; i < 100; ++i) {
    const Transform s = random_transform(rng), g = random_transform(rng);
    EXPECT_TRUE(approx_equal(compose(s, relative_pose(s, g)), g, 1e-9));
  }
}

TEST(Quat, RotationPreservesNorm) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Transform t = random_transform(rng);
    const Vec3 v(n(rng), n(rng), n(rng));
    EXPECT_NEAR((t.orientation * v).norm(), v.norm(), 1e-12 * std::max(1.0, v.norm()));
    EXPECT_NEAR(t.orientation.norm(), 1.0, 1e-9);
  }
}

TEST(Registry, PatternOverClonedEnvs) {
  EntityRegistry reg(4);
  reg.add_cloned("Robot", EntityKind::kArticulation);
  const EntityView view = reg.create_view("/World/envs/*/Robot");
  ASSERT_EQ(view.batch_size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(view.entities[static_cast<std::size_t>(i)].env_index, i);
}

TEST(Registry, LiteralPatternMatchesOne) {
  EntityRegistry reg(4);
  reg.add_cloned("Robot", EntityKind::kArticulation);
  EXPECT_EQ(reg.create_view("/World/envs/env_2/Robot").batch_size(), 1u);
}

TEST(Registry, EmptyViewIsErrorOrWarning) {
  EntityRegistry reg(4);
  reg.add_cloned("Robot", EntityKind::kArticulation);
  EXPECT_THROW(reg.create_view("/World/envs/*/Cube"), EmptyViewError);
  EXPECT_EQ(reg.create_view("/World/envs/*/Cube", EmptyViewPolicy::kWarn).batch_size(), 0u);
}

TEST(Registry, StarMatchesExactlyOneSegment) {
  EXPECT_TRUE(path_matches("/World/envs/*/Robot", "/World/envs/env_0/Robot"));
  EXPECT_FALSE(path_matches("/World/envs/*/Robot", "/World/envs/env_0/sub/Robot"));
  EXPECT_FALSE(path_matches("/World/*", "/World/envs/env_0"));
  EXPECT_FALSE(path_matches("/World/envs/*/Robot", "/World/envs//Robot"));
}

TEST(Registry, ViewOrderIsAscendingEnvRegardlessOfInsertion) {
  EntityRegistry reg(3);
  reg.add("/World/envs/env_2/Robot", EntityKind::kArticulation, 2);
  reg.add("/World/envs/env_0/Robot", EntityKind::kArticulation, 0);
  reg.add("/World/envs/env_1/Robot", EntityKind::kArticulation, 1);
  const auto idx = reg.create_view("/World/envs/*/Robot").env_indices();
  EXPECT_EQ(idx, (std::vector<int>{0, 1, 2}));
  // Same construction order, same result.
  EntityRegistry reg2(3);
  reg2.add("/World/envs/env_2/Robot", EntityKind::kArticulation, 2);
  reg2.add("/World/envs/env_0/Robot", EntityKind::kArticulation, 0);
  reg2.add("/World/envs/env_1/Robot", EntityKind::kArticulation, 1);
  EXPECT_EQ(reg2.create_view("/World/envs/*/Robot").env_indices(), idx);
}

TEST(Registry, RejectsDuplicatesAndBadEnv) {
  EntityRegistry reg(2);
  reg.add("/World/envs/env_0/Robot", EntityKind::kArticulation, 0);
  EXPECT_THROW(reg.add("/World/envs/env_0/Robot", EntityKind::kArticulation, 0), InvalidArgument);
  EXPECT_THROW(reg.add("/World/envs/env_5/Robot", EntityKind::kArticulation, 5), InvalidArgument);
}

TEST(LazyBuffer, RecomputesOncePerStep) {
  SimClock clock;
  int calls = 0;
  LazyBuffer<double> buf(&clock, [&](double& v) {
    ++calls;
    v = static_cast<double>(clock.step()) * 2.0;
  });
  for (int k = 0; k < 5; ++k) EXPECT_EQ(buf.get(), 0.0);
  EXPECT_EQ(calls, 1);
  clock.advance();
  const double* first = &buf.get();
  for (int k = 0; k < 7; ++k) EXPECT_EQ(&buf.get(), first);
  EXPECT_EQ(buf.get(), 2.0);
  EXPECT_EQ(calls, 2);
  buf.invalidate();
  buf.get();
  EXPECT_EQ(calls, 3);
}

}  // namespace
}  // namespace batchlab
