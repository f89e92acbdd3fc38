#include "batchlab/envman/scene.hpp"

#include <cmath>

#include "batchlab/core/error.hpp"

namespace batchlab::env {

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::vector<double> get_vec(const Json& j, const char* key, std::size_t n, const std::string& where) {
  const auto v = get_or<std::vector<double>>(j, key, {}, where);
  if (v.size() != n) throw ConfigError(where + "." + key + ": expected " + std::to_string(n) + " numbers");
  return v;
}

int joint_dof(const dyn::KinematicTree& tree, const std::string& name, const std::string& where) {
  for (int l = 0; l < tree.link_count(); ++l) {
    if (tree.link(l).name == name && tree.joint_index(l) >= 0) return tree.joint_index(l);
  }
  throw ConfigError(where + ": no actuated joint named '" + name + "'");
}

act::ActuatorConfig parse_actuator(const Json& j, const dyn::KinematicTree& tree, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  require_keys(j,
               {"name", "kind", "joints", "stiffness", "damping", "effort_limit", "velocity_limit",
                "armature", "delay_steps", "saturation_effort"},
               where);
  act::ActuatorConfig a;
  a.name = get_or<std::string>(j, "name", "actuator", where);
  try {
    a.kind = act::actuator_kind_from_string(get_or<std::string>(j, "kind", "ideal_pd", where));
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  for (const auto& name : get_or<std::vector<std::string>>(j, "joints", {}, where)) {
    a.joints.push_back(joint_dof(tree, name, where));
  }
  if (a.joints.empty()) throw ConfigError(where + ": actuator needs at least one joint");
  a.stiffness = get_or<double>(j, "stiffness", 0.0, where);
  a.damping = get_or<double>(j, "damping", 0.0, where);
  a.effort_limit = get_or<double>(j, "effort_limit", act::kUnlimited, where);
  a.velocity_limit = get_or<double>(j, "velocity_limit", act::kUnlimited, where);
  a.armature = get_or<double>(j, "armature", 0.0, where);
  a.delay_steps = get_or<int>(j, "delay_steps", 0, where);
  a.saturation_effort = get_or<double>(j, "saturation_effort", 0.0, where);
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return a;
}

TerrainSpec parse_terrain(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  require_keys(j, {"size", "cell", "border", "rows", "types", "max_init_level"}, where);
  TerrainSpec t;
  auto& c = t.config;
  if (j.contains("size")) {
    const auto s = get_vec(j, "size", 2, where);
    c.size_x = s[0];
    c.size_y = s[1];
  }
  c.cell = get_or<double>(j, "cell", c.cell, where);
  c.border = get_or<double>(j, "border", c.border, where);
  c.rows = get_or<int>(j, "rows", c.rows, where);
  t.max_init_level = get_or<int>(j, "max_init_level", 0, where);
  const auto types = j.find("types");
  if (types == j.end() || !types->is_array() || types->empty()) {
    throw ConfigError(where + ".types: expected a non-empty array");
  }
  for (std::size_t i = 0; i < types->size(); ++i) {
    const std::string w = where + ".types[" + std::to_string(i) + "]";
    const Json& tj = (*types)[i];
    require_keys(tj, {"name", "kind", "height", "quantum", "step_width", "levels"}, w);
    terrain::SubTerrainSpec s;
    try {
      s.kind = terrain::sub_terrain_kind_from_string(get_or<std::string>(tj, "kind", "flat", w));
    } catch (const InvalidArgument& e) {
      throw ConfigError(w + ": " + e.what());
    }
    s.name = get_or<std::string>(tj, "name", terrain::to_string(s.kind), w);
    if (tj.contains("height")) {
      const auto h = get_vec(tj, "height", 2, w);
      s.height_easy = h[0];
      s.height_hard = h[1];
    }
    s.quantum = get_or<double>(tj, "quantum", s.quantum, w);
    s.step_width = get_or<double>(tj, "step_width", s.step_width, w);
    s.levels = get_or<int>(tj, "levels", s.levels, w);
    c.types.push_back(s);
  }
  if (t.max_init_level < 0 || t.max_init_level >= c.rows) {
    throw ConfigError(where + ".max_init_level: must lie in [0, rows)");
  }
  return t;
}

HeightScannerSpec parse_scanner(const Json& j, double default_period, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  require_keys(j, {"link", "offset", "size", "resolution", "period", "max_range"}, where);
  HeightScannerSpec h;
  h.link = get_or<std::string>(j, "link", "", where);
  if (j.contains("offset")) {
    const auto o = get_vec(j, "offset", 3, where);
    h.offset = Vec3(o[0], o[1], o[2]);
  }
  if (j.contains("size")) {
    const auto s = get_vec(j, "size", 2, where);
    h.size_x = s[0];
    h.size_y = s[1];
  }
  h.resolution = get_or<double>(j, "resolution", h.resolution, where);
  h.period = get_or<double>(j, "period", default_period, where);
  h.max_range = get_or<double>(j, "max_range", h.max_range, where);
  if (!(h.resolution > 0.0) || !(h.period >= 0.0) || !(h.max_range > 0.0)) {
    throw ConfigError(where + ": resolution and max_range must be > 0, period >= 0");
  }
  return h;
}

Transform yaw_only(const Transform& t) {
  const Mat3 r = t.orientation.toRotationMatrix();
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {t.position, Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()))};
}

}  // namespace

SceneSpec parse_scene_spec(const Json& scene, RobotModel robot, double default_period) {
  const std::string where = "config.scene";
  if (!scene.is_object()) throw ConfigError(where + ": expected an object");
  require_keys(scene, {"robot", "env_spacing", "actuators", "terrain", "height_scanner", "contact_sensor"},
               where);
  SceneSpec s;
  s.robot = std::move(robot);
  s.env_spacing = get_or<double>(scene, "env_spacing", s.env_spacing, where);
  if (const auto it = scene.find("actuators"); it != scene.end()) {
    if (!it->is_array()) throw ConfigError(where + ".actuators: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      s.actuators.push_back(
          parse_actuator((*it)[i], s.robot.tree, where + ".actuators[" + std::to_string(i) + "]"));
    }
  }
  if (const auto it = scene.find("terrain"); it != scene.end()) s.terrain = parse_terrain(*it, where + ".terrain");
  if (const auto it = scene.find("height_scanner"); it != scene.end()) {
    s.height_scanner = parse_scanner(*it, default_period, where + ".height_scanner");
  }
  if (const auto it = scene.find("contact_sensor"); it != scene.end()) {
    require_keys(*it, {"links"}, where + ".contact_sensor");
    s.contact_links = get_or<std::vector<std::string>>(*it, "links", {}, where + ".contact_sensor");
  }
  return s;
}

Scene::Scene(SceneSpec spec, int env_count, double physics_dt, std::uint64_t seed)
    : spec_(std::move(spec)), env_count_(env_count), physics_dt_(physics_dt), registry_(env_count) {
  if (env_count < 1) throw InvalidArgument("scene needs at least one environment");
  if (!(physics_dt > 0.0)) throw InvalidArgument("physics dt must be > 0");
  const auto& tree = spec_.robot.tree;
  const int n = tree.dof();
  if (spec_.robot.default_q.size() != n) throw InvalidArgument("robot default_q does not match its dof");
  spec_.robot.probes.validate();
  const auto n_env = static_cast<std::size_t>(env_count);

  registry_.add_cloned("Robot", EntityKind::kArticulation);

  auto base = std::make_shared<const dyn::KinematicTree>(tree);
  trees_.assign(n_env, base);
  commands_.assign(n_env, std::vector<act::JointCommand>(static_cast<std::size_t>(n)));
  efforts_.assign(n_env, VecX::Zero(n));
  default_q_.assign(n_env, spec_.robot.default_q);
  probes_.assign(n_env, spec_.robot.probes);
  gravity_.assign(n_env, dyn::kDefaultGravity);
  actuator_calls_.assign(n_env, 0);

  armature_ = VecX::Zero(n);
  velocity_limit_ = VecX::Constant(n, act::kUnlimited);
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (std::size_t g = 0; g < spec_.actuators.size(); ++g) {
    const auto& a = spec_.actuators[g];
    for (const int j : a.joints) {
      if (j < 0 || j >= n) throw InvalidArgument("actuator '" + a.name + "' joint index out of range");
      if (owner[static_cast<std::size_t>(j)] >= 0) {
        throw InvalidArgument("joint " + std::to_string(j) + " is driven by two actuators");
      }
      owner[static_cast<std::size_t>(j)] = static_cast<int>(g);
      armature_(j) = a.armature;
      velocity_limit_(j) = a.velocity_limit;
    }
    actuators_.emplace_back(a, env_count);
    has_implicit_ = has_implicit_ || actuators_.back().implicit();
  }
  if (has_implicit_) {
    dyn::ImplicitPd pd{VecX::Zero(n), VecX::Zero(n), VecX::Zero(n), VecX::Zero(n),
                       VecX::Constant(n, act::kUnlimited)};
    implicit_pd_.assign(n_env, pd);
  }

  if (spec_.terrain) {
    auto cfg = spec_.terrain->config;
    cfg.seed = derive_seed(seed, 1);
    terrain_ = terrain::TerrainGrid::compose(cfg);
    std::mt19937_64 rng(derive_seed(seed, 2));
    curriculum_ = terrain::CurriculumState::initial(env_count, terrain_->rows(), terrain_->cols(),
                                                    spec_.terrain->max_init_level, rng);
    const auto* grid = &*terrain_;
    terrain_query_ = [grid](const Vec3& p) { return grid->sample(p); };
  } else {
    terrain_query_ = dyn::flat_ground(0.0);
  }
  origins_.resize(n_env);
  for (int e = 0; e < env_count; ++e) {
    origins_[static_cast<std::size_t>(e)] = terrain_ ? Transform{} : grid_origin(e);
    if (terrain_) refresh_origin(e);
  }

  states_.reserve(n_env);
  for (int e = 0; e < env_count; ++e) states_.push_back(default_state(e));

  link_poses_.reserve(n_env);
  for (int e = 0; e < env_count; ++e) {
    link_poses_.emplace_back(&clock_, [this, e](std::vector<Transform>& out) {
      const auto& st = states_[static_cast<std::size_t>(e)];
      out = dyn::forward_kinematics(*trees_[static_cast<std::size_t>(e)], st.q, st.root_pose);
    });
  }
  contacts_.assign(n_env, {});

  if (!spec_.contact_links.empty()) {
    registry_.add_cloned("Robot/contact_forces", EntityKind::kSensor);
    std::vector<int> links;
    for (const auto& name : spec_.contact_links) links.push_back(tree.find_link(name));
    contact_sensors_.assign(n_env, sensors::ContactSensor(links, spec_.robot.probes));
  }

  if (spec_.height_scanner) {
    const auto& h = *spec_.height_scanner;
    registry_.add_cloned("Robot/height_scanner", EntityKind::kSensor);
    scanner_link_ = tree.find_link(h.link);
    scanner_pattern_ = sensors::pattern_grid(h.size_x, h.size_y, h.resolution);
    if (terrain_) {
      ray_scene_.add(sensors::MeshGeometry::build(terrain_->mesh()));
    } else {
      ray_scene_.add(sensors::MeshGeometry::build(sensors::make_plane(1e3, 1e3)));
    }
    scanner_clocks_.assign(n_env, sensors::SensorClock(h.period));
    scans_.assign(n_env, VecX::Zero(static_cast<Eigen::Index>(scanner_pattern_->size())));
    scanner_updates_.assign(n_env, 0);
  }
}

std::size_t Scene::idx(int env) const {
  if (env < 0 || env >= env_count_) {
    throw InvalidArgument("env index " + std::to_string(env) + " out of range [0, " +
                          std::to_string(env_count_) + ")");
  }
  return static_cast<std::size_t>(env);
}

Transform Scene::grid_origin(int env) const {
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(env_count_))));
  const int r = env / side;
  const int c = env % side;
  const double half = 0.5 * (side - 1);
  return Transform::from_translation(
      Vec3((r - half) * spec_.env_spacing, (c - half) * spec_.env_spacing, 0.0));
}

void Scene::refresh_origin(int env) {
  if (!terrain_) return;
  const auto e = idx(env);
  origins_[e] = terrain_->origin(curriculum_->levels[e], curriculum_->columns[e]);
}

int Scene::find_actuator(const std::string& name) const {
  for (std::size_t g = 0; g < actuators_.size(); ++g) {
    if (actuators_[g].config().name == name) return static_cast<int>(g);
  }
  throw InvalidArgument("no actuator named '" + name + "'");
}

int Scene::find_joint(const std::string& name) const {
  const auto& tree = spec_.robot.tree;
  const int l = tree.find_link(name);
  const int j = tree.joint_index(l);
  if (j < 0) throw InvalidArgument("link '" + name + "' has no joint coordinate");
  return j;
}

void Scene::set_default_q(int env, const VecX& q) {
  if (q.size() != spec_.robot.tree.dof()) throw InvalidArgument("default q has the wrong size");
  default_q_[idx(env)] = q;
}

double Scene::link_mass(int env, int link) const { return tree(env).link(link).mass; }

void Scene::set_link_mass(int env, int link, double mass) {
  const auto e = idx(env);
  const double current = trees_[e]->link(link).mass;
  if (!(mass > 0.0)) throw InvalidArgument("link mass must stay positive");
  trees_[e] = std::make_shared<const dyn::KinematicTree>(trees_[e]->with_mass_scaled(link, mass / current));
}

const std::vector<Transform>& Scene::link_poses(int env) const { return link_poses_[idx(env)].get(); }

const sensors::ContactSensor& Scene::contact_sensor(int env) const {
  if (contact_sensors_.empty()) throw InvalidArgument("scene has no contact sensor");
  return contact_sensors_[idx(env)];
}

const sensors::RayPattern& Scene::scanner_pattern() const {
  if (!scanner_pattern_) throw InvalidArgument("scene has no height scanner");
  return *scanner_pattern_;
}

const VecX& Scene::height_scan(int env) {
  const auto e = idx(env);
  if (!scanner_pattern_) throw InvalidArgument("scene has no height scanner");
  if (scanner_clocks_[e].tick(sim_time())) {
    const auto& h = *spec_.height_scanner;
    const Transform link_pose = link_poses(env)[static_cast<std::size_t>(scanner_link_)];
    const Transform sensor = yaw_only(compose(link_pose, Transform::from_translation(h.offset)));
    const auto rays = scanner_pattern_->place(sensor);
    sensors::RaycastOptions opts;
    opts.max_range = h.max_range;
    const auto hits = sensors::raycast(ray_scene_, rays, opts);
    VecX& out = scans_[e];
    for (std::size_t i = 0; i < hits.size(); ++i) {
      out(static_cast<Eigen::Index>(i)) = hits[i].hit ? hits[i].point.z() : sensor.position.z() - h.max_range;
    }
    ++scanner_updates_[e];
  }
  return scans_[e];
}

void Scene::apply_actuators() {
  for (int e = 0; e < env_count_; ++e) {
    const auto i = static_cast<std::size_t>(e);
    VecX& effort = efforts_[i];
    effort.setZero();
    const auto& st = states_[i];
    for (auto& group : actuators_) {
      if (group.implicit()) {
        group.fill_implicit(e, commands_[i], implicit_pd_[i], effort);
      } else {
        group.compute(e, commands_[i], st.q, st.qd, effort);
      }
    }
    ++actuator_calls_[i];
  }
}

void Scene::step_physics() {
  dyn::StepOptions opts;
  opts.dt = physics_dt_;
  opts.armature = armature_;
  opts.velocity_limit = velocity_limit_;
  opts.terrain = terrain_query_;
  for (int e = 0; e < env_count_; ++e) {
    const auto i = static_cast<std::size_t>(e);
    opts.gravity = gravity_[i];
    opts.implicit_pd = has_implicit_ ? &implicit_pd_[i] : nullptr;
    opts.probes = probes_[i].probes.empty() ? nullptr : &probes_[i];
    opts.env_index = e;
    auto out = dyn::step(*trees_[i], states_[i], efforts_[i], opts);
    contacts_[i] = std::move(out.contacts);
  }
  clock_.advance();
}

void Scene::render() { ++renders_; }

void Scene::update_buffers() {
  for (std::size_t i = 0; i < contact_sensors_.size(); ++i) contact_sensors_[i].update(contacts_[i], physics_dt_);
}

dyn::ArticulationState Scene::default_state(int env) const {
  auto s = dyn::ArticulationState::zeros(*trees_[idx(env)]);
  s.q = default_q_[idx(env)];
  s.root_pose = compose(origins_[idx(env)], spec_.robot.base_offset);
  return s;
}

void Scene::write_state(int env, const dyn::ArticulationState& state) {
  const auto e = idx(env);
  if (state.q.size() != states_[e].q.size() || state.qd.size() != states_[e].qd.size()) {
    throw InvalidArgument("state write has the wrong shape");
  }
  states_[e] = state;
  link_poses_[e].invalidate();
  contacts_[e].clear();
}

void Scene::reset_buffers(int env) {
  const auto e = idx(env);
  for (auto& group : actuators_) group.reset(env);
  for (auto& c : commands_[e]) c = {};
  efforts_[e].setZero();
  if (!contact_sensors_.empty()) contact_sensors_[e].reset();
}

void Scene::force_sensor_update(int env) {
  const auto e = idx(env);
  if (!scanner_clocks_.empty()) scanner_clocks_[e].reset();
}

}  // namespace batchlab::env
