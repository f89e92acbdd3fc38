#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "batchlab/core/math.hpp"
#include "batchlab/dynamics/dynamics.hpp"
#include "batchlab/dynamics/tree.hpp"

namespace batchlab::sensors {

/// Recompute gate: due iff sim_time - last >= period - 1e-12. A period of
/// zero updates on every query.
class SensorClock {
 public:
  explicit SensorClock(double period = 0.0);

  double period() const { return period_; }
  double last_update() const { return last_; }
  bool due(double sim_time) const;
  /// Returns true and records `sim_time` when due.
  bool tick(double sim_time);
  /// Forces the next query to be due.
  void reset();

 private:
  double period_;
  double last_;
};

// ---------------------------------------------------------------------------
// Contact sensor

struct ContactEvent {
  bool contact = false;  // true: a contact phase ended; false: an air phase ended
  double duration = 0.0;
};

struct ContactReport {
  Vec3 net_force = Vec3::Zero();
  double contact_time = 0.0;
  double air_time = 0.0;
  double last_contact_duration = 0.0;
  double last_air_duration = 0.0;
  std::vector<ContactEvent> history;  // most recent first, at most `history_length`
  int history_length = 3;

  bool in_contact() const { return contact_time > 0.0; }
};

inline constexpr double kContactThreshold = 1e-6;

/// Advances one body's report by dt from the probe contacts attached to it.
/// With `surface_filter`, only contacts against those surface ids count.
void contact_update(ContactReport& report, std::span<const dyn::ProbeContact> contacts, double dt,
                    const std::optional<std::vector<int>>& surface_filter = std::nullopt,
                    double threshold = kContactThreshold);

/// Contact reports for a set of bodies, fed from the probe contacts of a
/// dynamics step.
class ContactSensor {
 public:
  ContactSensor(std::vector<int> body_links, const dyn::ContactPointSet& probes,
                std::optional<std::vector<int>> surface_filter = std::nullopt,
                int history_length = 3);

  /// `contacts` is the per-probe output of the dynamics step.
  void update(std::span<const dyn::ProbeContact> contacts, double dt);
  void reset();

  const std::vector<int>& body_links() const { return body_links_; }
  const ContactReport& report(std::size_t body) const { return reports_.at(body); }
  const std::vector<ContactReport>& reports() const { return reports_; }

 private:
  std::vector<int> body_links_;
  std::vector<std::vector<std::size_t>> probe_indices_;  // per body
  std::optional<std::vector<int>> surface_filter_;
  int history_length_;
  std::vector<ContactReport> reports_;
};

// ---------------------------------------------------------------------------
// IMU

struct ImuSample {
  Quat orientation = Quat::Identity();       // sensor in world
  Vec3 angular_velocity = Vec3::Zero();      // sensor frame, rad/s
  Vec3 linear_acceleration = Vec3::Zero();   // sensor frame, proper acceleration
  Vec3 projected_gravity = -Vec3::UnitZ();   // unit, sensor frame
};

struct ImuNoise {
  Vec3 accel_std = Vec3::Zero();
  Vec3 gyro_std = Vec3::Zero();
  Vec3 accel_bias_walk_std = Vec3::Zero();  // per step
  Vec3 gyro_bias_walk_std = Vec3::Zero();   // per step
  std::uint64_t seed = 0;

  bool enabled() const;
};

/// Finite-difference IMU rigidly attached to a body at `offset`.
class Imu {
 public:
  explicit Imu(const Transform& offset = {}, ImuNoise noise = {});

  /// `body_velocity` is the body's world spatial velocity [angular; linear
  /// at the world origin]. Throws InvalidArgument on dt <= 0.
  ImuSample update(const Transform& body_pose, const Vec6& body_velocity, double dt,
                   const Vec3& gravity = dyn::kDefaultGravity);
  void reset();

  const Vec3& accel_bias() const { return accel_bias_; }
  const Vec3& gyro_bias() const { return gyro_bias_; }

 private:
  Transform offset_;
  ImuNoise noise_;
  std::mt19937_64 rng_;
  std::optional<Vec3> previous_velocity_;
  Vec3 accel_bias_ = Vec3::Zero();
  Vec3 gyro_bias_ = Vec3::Zero();
};

// ---------------------------------------------------------------------------
// Frame transformer

/// Per target: relative_pose(source_pose * source_offset,
/// target_pose * target_offset).
std::vector<Transform> frame_transform(const Transform& source_pose, const Transform& source_offset,
                                       std::span<const Transform> target_poses,
                                       std::span<const Transform> target_offsets);

struct FrameSpec {
  std::string link;
  Transform offset;
};

/// Link names resolved once against a tree; unknown names throw.
class FrameTransformer {
 public:
  FrameTransformer(const dyn::KinematicTree& tree, FrameSpec source, std::vector<FrameSpec> targets);

  /// `link_poses` indexed by link, e.g. from forward_kinematics.
  std::vector<Transform> compute(std::span<const Transform> link_poses) const;

  std::size_t target_count() const { return target_links_.size(); }

 private:
  int source_link_;
  Transform source_offset_;
  std::vector<int> target_links_;
  std::vector<Transform> target_offsets_;
};

}  // namespace batchlab::sensors
