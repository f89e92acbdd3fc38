#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "batchlab/actuators/actuators.hpp"
#include "batchlab/core/lazy_cache.hpp"
#include "batchlab/core/math.hpp"
#include "batchlab/core/registry.hpp"
#include "batchlab/core/seed.hpp"
#include "batchlab/dynamics/dynamics.hpp"
#include "batchlab/envman/config.hpp"
#include "batchlab/sensors/physics_sensors.hpp"
#include "batchlab/sensors/raycast.hpp"
#include "batchlab/terrain/terrain.hpp"

namespace batchlab::env {

/// Articulation template cloned into every environment.
struct RobotModel {
  std::string name;
  dyn::KinematicTree tree;
  VecX default_q;
  Transform base_offset;  // root pose relative to the env origin
  dyn::ContactPointSet probes;
};

/// Grid of downward rays attached to a link, yaw-aligned.
struct HeightScannerSpec {
  std::string link;
  Vec3 offset = Vec3(0.0, 0.0, 0.5);
  double size_x = 1.6;
  double size_y = 1.2;
  double resolution = 0.1;
  double period = 0.0;  // s, 0 = every read
  double max_range = 20.0;
};

struct TerrainSpec {
  terrain::TerrainConfig config;
  int max_init_level = 0;
};

struct SceneSpec {
  RobotModel robot;
  std::vector<act::ActuatorConfig> actuators;  // joint entries are dof indices
  std::optional<TerrainSpec> terrain;
  double env_spacing = 2.0;  // grid layout without terrain
  std::optional<HeightScannerSpec> height_scanner;
  std::vector<std::string> contact_links;
};

/// Reads the `scene` object of a config: actuators (joints by name),
/// terrain, height_scanner, contact_sensor, env_spacing. `robot` names the
/// model and is resolved by the caller. `default_period` replaces a
/// missing scanner period.
SceneSpec parse_scene_spec(const Json& scene, RobotModel robot, double default_period);

/// Batched simulation state for every environment: articulations,
/// actuators, terrain, and sensors. Not copyable; lazy buffers refer back
/// into the scene.
class Scene {
 public:
  Scene(SceneSpec spec, int env_count, double physics_dt, std::uint64_t seed);
  Scene(const Scene&) = delete;
  Scene& operator=(const Scene&) = delete;

  int env_count() const { return env_count_; }
  double physics_dt() const { return physics_dt_; }
  double sim_time() const { return static_cast<double>(clock_.step()) * physics_dt_; }
  std::uint64_t physics_steps() const { return clock_.step(); }
  const SceneSpec& spec() const { return spec_; }
  const RobotModel& robot() const { return spec_.robot; }
  const EntityRegistry& registry() const { return registry_; }

  const dyn::KinematicTree& tree(int env) const { return *trees_[idx(env)]; }
  dyn::ArticulationState& state(int env) { return states_[idx(env)]; }
  const dyn::ArticulationState& state(int env) const { return states_[idx(env)]; }
  std::span<act::JointCommand> commands(int env) { return commands_[idx(env)]; }
  std::span<const act::JointCommand> commands(int env) const { return commands_[idx(env)]; }
  /// Explicit efforts written by the last actuator pass.
  const VecX& efforts(int env) const { return efforts_[idx(env)]; }
  std::vector<act::ActuatorGroup>& actuators() { return actuators_; }
  const std::vector<act::ActuatorGroup>& actuators() const { return actuators_; }
  /// Index of the named actuator group; throws InvalidArgument.
  int find_actuator(const std::string& name) const;
  /// Dof index of a joint name; throws InvalidArgument.
  int find_joint(const std::string& name) const;

  // Randomizable parameters. Startup defaults live in robot().
  const VecX& default_q(int env) const { return default_q_[idx(env)]; }
  void set_default_q(int env, const VecX& q);
  double link_mass(int env, int link) const;
  /// Replaces env's tree with a copy whose link mass (and inertia) match.
  void set_link_mass(int env, int link, double mass);
  dyn::ContactPointSet& probes(int env) { return probes_[idx(env)]; }
  const dyn::ContactPointSet& probes(int env) const { return probes_[idx(env)]; }
  const Vec3& gravity(int env) const { return gravity_[idx(env)]; }
  void set_gravity(int env, const Vec3& g) { gravity_[idx(env)] = g; }

  // Placement.
  const Transform& env_origin(int env) const { return origins_[idx(env)]; }
  const terrain::TerrainGrid* terrain() const { return terrain_ ? &*terrain_ : nullptr; }
  terrain::CurriculumState* curriculum() { return curriculum_ ? &*curriculum_ : nullptr; }
  /// Re-reads env origins from the curriculum state (terrain scenes only).
  void refresh_origin(int env);

  // Derived data, recomputed lazily at most once per physics step.
  const std::vector<Transform>& link_poses(int env) const;
  const std::vector<dyn::ProbeContact>& contacts(int env) const { return contacts_[idx(env)]; }
  const sensors::ContactSensor& contact_sensor(int env) const;
  bool has_contact_sensor() const { return !contact_sensors_.empty(); }
  bool has_height_scanner() const { return scanner_pattern_.has_value(); }
  const sensors::RayPattern& scanner_pattern() const;
  /// World z of each scanner hit (sensor z - max_range on a miss),
  /// recomputed when the scanner period has elapsed or after a reset.
  const VecX& height_scan(int env);
  std::int64_t scanner_updates(int env) const { return scanner_updates_[idx(env)]; }

  // Step phases, in the order the env loop calls them.
  void apply_actuators();
  void step_physics();
  void render();
  void update_buffers();

  // Reset support.
  dyn::ArticulationState default_state(int env) const;
  /// Kinematic write: replaces the state and invalidates derived data.
  void write_state(int env, const dyn::ArticulationState& state);
  void reset_buffers(int env);
  void force_sensor_update(int env);

  std::int64_t actuator_invocations(int env) const { return actuator_calls_[idx(env)]; }
  std::int64_t render_count() const { return renders_; }

 private:
  std::size_t idx(int env) const;
  Transform grid_origin(int env) const;

  SceneSpec spec_;
  int env_count_;
  double physics_dt_;
  SimClock clock_;
  EntityRegistry registry_;

  std::vector<std::shared_ptr<const dyn::KinematicTree>> trees_;
  std::vector<dyn::ArticulationState> states_;
  std::vector<std::vector<act::JointCommand>> commands_;
  std::vector<VecX> efforts_;
  std::vector<dyn::ImplicitPd> implicit_pd_;
  std::vector<act::ActuatorGroup> actuators_;
  bool has_implicit_ = false;
  VecX armature_;
  VecX velocity_limit_;

  std::vector<VecX> default_q_;
  std::vector<dyn::ContactPointSet> probes_;
  std::vector<Vec3> gravity_;
  std::vector<Transform> origins_;

  std::optional<terrain::TerrainGrid> terrain_;
  std::optional<terrain::CurriculumState> curriculum_;
  dyn::TerrainQuery terrain_query_;

  std::vector<LazyBuffer<std::vector<Transform>>> link_poses_;
  std::vector<std::vector<dyn::ProbeContact>> contacts_;
  std::vector<sensors::ContactSensor> contact_sensors_;

  std::optional<sensors::RayPattern> scanner_pattern_;
  int scanner_link_ = -1;
  sensors::RaycastScene ray_scene_;
  std::vector<sensors::SensorClock> scanner_clocks_;
  std::vector<VecX> scans_;
  std::vector<std::int64_t> scanner_updates_;

  std::vector<std::int64_t> actuator_calls_;
  std::int64_t renders_ = 0;
};

using batchlab::derive_seed;

}  // namespace batchlab::env
