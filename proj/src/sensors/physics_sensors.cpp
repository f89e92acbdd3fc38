#include "batchlab/sensors/physics_sensors.hpp"

#include <algorithm>
#include <limits>

#include "batchlab/core/error.hpp"

namespace batchlab::sensors {

SensorClock::SensorClock(double period) : period_(period), last_(-std::numeric_limits<double>::infinity()) {
  if (!(period >= 0.0)) throw InvalidArgument("sensor period must be >= 0");
}

bool SensorClock::due(double sim_time) const { return sim_time - last_ >= period_ - 1e-12; }

bool SensorClock::tick(double sim_time) {
  if (!due(sim_time)) return false;
  last_ = sim_time;
  return true;
}

void SensorClock::reset() { last_ = -std::numeric_limits<double>::infinity(); }

namespace {

void push_event(ContactReport& r, ContactEvent e) {
  r.history.insert(r.history.begin(), e);
  if (static_cast<int>(r.history.size()) > r.history_length) r.history.resize(static_cast<std::size_t>(r.history_length));
}

}  // namespace

void contact_update(ContactReport& report, std::span<const dyn::ProbeContact> contacts, double dt,
                    const std::optional<std::vector<int>>& surface_filter, double threshold) {
  if (!(dt > 0.0)) throw InvalidArgument("contact update needs dt > 0");
  Vec3 net = Vec3::Zero();
  for (const auto& c : contacts) {
    if (surface_filter && std::find(surface_filter->begin(), surface_filter->end(), c.surface_id) ==
                              surface_filter->end()) {
      continue;
    }
    net += c.normal_force * c.normal;
  }
  report.net_force = net;

  if (net.norm() > threshold) {
    if (report.air_time > 0.0) {
      report.last_air_duration = report.air_time;
      push_event(report, {false, report.air_time});
      report.air_time = 0.0;
    }
    report.contact_time += dt;
  } else {
    if (report.contact_time > 0.0) {
      report.last_contact_duration = report.contact_time;
      push_event(report, {true, report.contact_time});
      report.contact_time = 0.0;
    }
    report.air_time += dt;
  }
}

ContactSensor::ContactSensor(std::vector<int> body_links, const dyn::ContactPointSet& probes,
                             std::optional<std::vector<int>> surface_filter, int history_length)
    : body_links_(std::move(body_links)),
      probe_indices_(body_links_.size()),
      surface_filter_(std::move(surface_filter)),
      history_length_(history_length) {
  if (history_length < 1) throw InvalidArgument("contact history length must be >= 1");
  for (std::size_t p = 0; p < probes.probes.size(); ++p) {
    const auto it = std::find(body_links_.begin(), body_links_.end(), probes.probes[p].link);
    if (it != body_links_.end()) probe_indices_[static_cast<std::size_t>(it - body_links_.begin())].push_back(p);
  }
  reset();
}

void ContactSensor::update(std::span<const dyn::ProbeContact> contacts, double dt) {
  std::vector<dyn::ProbeContact> mine;
  for (std::size_t b = 0; b < body_links_.size(); ++b) {
    mine.clear();
    for (const std::size_t p : probe_indices_[b]) mine.push_back(contacts[p]);
    contact_update(reports_[b], mine, dt, surface_filter_);
  }
}

void ContactSensor::reset() {
  reports_.assign(body_links_.size(), ContactReport{});
  for (auto& r : reports_) r.history_length = history_length_;
}

bool ImuNoise::enabled() const {
  return (accel_std.array() != 0.0).any() || (gyro_std.array() != 0.0).any() ||
         (accel_bias_walk_std.array() != 0.0).any() || (gyro_bias_walk_std.array() != 0.0).any();
}

Imu::Imu(const Transform& offset, ImuNoise noise) : offset_(offset), noise_(noise), rng_(noise.seed) {}

void Imu::reset() {
  previous_velocity_.reset();
  accel_bias_.setZero();
  gyro_bias_.setZero();
  rng_.seed(noise_.seed);
}

ImuSample Imu::update(const Transform& body_pose, const Vec6& body_velocity, double dt,
                      const Vec3& gravity) {
  if (!(dt > 0.0)) throw InvalidArgument("imu update needs dt > 0");
  const Transform sensor = compose(body_pose, offset_);
  const Mat3 rt = sensor.orientation.toRotationMatrix().transpose();
  const Vec3 v = dyn::point_velocity(body_velocity, sensor.position);
  const Vec3 accel_world = previous_velocity_ ? Vec3((v - *previous_velocity_) / dt) : Vec3::Zero();
  previous_velocity_ = v;

  ImuSample s;
  s.orientation = sensor.orientation;
  s.angular_velocity = rt * body_velocity.head<3>();
  s.linear_acceleration = rt * (accel_world - gravity);
  s.projected_gravity = gravity.norm() > 0.0 ? Vec3(rt * gravity.normalized()) : Vec3(-Vec3::UnitZ());

  if (noise_.enabled()) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int a = 0; a < 3; ++a) {
      s.linear_acceleration(a) += noise_.accel_std(a) * n01(rng_);
      s.angular_velocity(a) += noise_.gyro_std(a) * n01(rng_);
    }
    for (int a = 0; a < 3; ++a) {
      accel_bias_(a) += noise_.accel_bias_walk_std(a) * n01(rng_);
      gyro_bias_(a) += noise_.gyro_bias_walk_std(a) * n01(rng_);
    }
    s.linear_acceleration += accel_bias_;
    s.angular_velocity += gyro_bias_;
  }
  return s;
}

std::vector<Transform> frame_transform(const Transform& source_pose, const Transform& source_offset,
                                       std::span<const Transform> target_poses,
                                       std::span<const Transform> target_offsets) {
  if (target_poses.size() != target_offsets.size()) {
    throw InvalidArgument("one offset per target frame required");
  }
  const Transform source = compose(source_pose, source_offset);
  std::vector<Transform> out;
  out.reserve(target_poses.size());
  for (std::size_t i = 0; i < target_poses.size(); ++i) {
    out.push_back(relative_pose(source, compose(target_poses[i], target_offsets[i])));
  }
  return out;
}

FrameTransformer::FrameTransformer(const dyn::KinematicTree& tree, FrameSpec source,
                                   std::vector<FrameSpec> targets)
    : source_link_(tree.find_link(source.link)), source_offset_(source.offset) {
  for (auto& t : targets) {
    target_links_.push_back(tree.find_link(t.link));
    target_offsets_.push_back(t.offset);
  }
}

std::vector<Transform> FrameTransformer::compute(std::span<const Transform> link_poses) const {
  std::vector<Transform> targets;
  targets.reserve(target_links_.size());
  for (const int l : target_links_) targets.push_back(link_poses[static_cast<std::size_t>(l)]);
  return frame_transform(link_poses[static_cast<std::size_t>(source_link_)], source_offset_, targets,
                         target_offsets_);
}

}  // namespace batchlab::sensors
