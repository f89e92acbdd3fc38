#include "batchlab/envman/tasks.hpp"

#include <cmath>
#include <numbers>

#include "batchlab/core/error.hpp"

namespace batchlab::env {

namespace {

dyn::Link make_link(std::string name, int parent, dyn::JointKind joint, const Vec3& axis, const Vec3& origin,
                    double mass, const Vec3& com, const Vec3& inertia_diag) {
  dyn::Link l;
  l.name = std::move(name);
  l.parent = parent;
  l.joint = joint;
  l.axis = axis;
  l.parent_to_joint = Transform::from_translation(origin);
  l.mass = mass;
  l.com = com;
  l.inertia = inertia_diag.asDiagonal();
  return l;
}

// Slender rod of length `len` along one axis: m L^2 / 12 across it.
double rod(double mass, double len) { return mass * len * len / 12.0; }

constexpr double kQuarterPi = 0.25 * std::numbers::pi;

Json cartpole_json(int n, std::uint64_t seed) {
  return Json{
      {"task", "cartpole"},
      {"env_count", n},
      {"physics_dt", 1.0 / 120.0},
      {"decimation", 2},
      {"render_interval", 2},
      {"episode_length", 5.0},
      {"seed", seed},
      {"scene",
       {{"robot", "cartpole"},
        {"env_spacing", 4.0},
        {"actuators",
         Json::array({{{"name", "cart"}, {"kind", "ideal_pd"}, {"joints", {"cart"}}, {"damping", 10.0},
                       {"effort_limit", 400.0}}})}}},
      {"actions", Json::array({{{"name", "cart_effort"},
                                {"function", "joint_effort"},
                                {"params", {{"joints", {"cart"}}, {"scale", 100.0}}}}})},
      {"observations",
       {{"policy", Json::array({{{"name", "joint_pos"}, {"function", "joint_pos_rel"}},
                                {{"name", "joint_vel"}, {"function", "joint_vel"}}})}}},
      {"rewards",
       Json::array({{{"name", "alive"}, {"function", "is_alive"}, {"weight", 1.0}},
                    {{"name", "terminating"}, {"function", "is_terminated"}, {"weight", -2.0}},
                    {{"name", "pole_pos"},
                     {"function", "joint_pos_target_l2"},
                     {"weight", -1.0},
                     {"params", {{"joints", {"pole"}}, {"target", 0.0}}}},
                    {{"name", "cart_vel"}, {"function", "joint_vel_l1"}, {"weight", -0.01},
                     {"params", {{"joints", {"cart"}}}}},
                    {{"name", "pole_vel"}, {"function", "joint_vel_l1"}, {"weight", -0.005},
                     {"params", {{"joints", {"pole"}}}}}})},
      {"terminations", Json::array({{{"name", "cart_out_of_bounds"},
                                     {"function", "joint_pos_out_of_bounds"},
                                     {"params", {{"joint", "cart"}, {"bounds", {-3.0, 3.0}}}}}})},
      {"events",
       Json::array({{{"name", "reset_cart_pos"}, {"mode", "reset"}, {"parameter", "joint_pos"},
                     {"targets", {"cart"}}, {"range", {-1.0, 1.0}}, {"operation", "add"}},
                    {{"name", "reset_cart_vel"}, {"mode", "reset"}, {"parameter", "joint_vel"},
                     {"targets", {"cart"}}, {"range", {-0.5, 0.5}}, {"operation", "add"}},
                    {{"name", "reset_pole_pos"}, {"mode", "reset"}, {"parameter", "joint_pos"},
                     {"targets", {"pole"}}, {"range", {-kQuarterPi, kQuarterPi}}, {"operation", "add"}},
                    {{"name", "reset_pole_vel"}, {"mode", "reset"}, {"parameter", "joint_vel"},
                     {"targets", {"pole"}}, {"range", {-kQuarterPi, kQuarterPi}}, {"operation", "add"}}})}};
}

Json hopper_json(int n, std::uint64_t seed) {
  return Json{
      {"task", "hopper"},
      {"env_count", n},
      {"physics_dt", 0.005},
      {"decimation", 4},
      {"render_interval", 0},
      {"episode_length", 10.0},
      {"seed", seed},
      {"scene",
       {{"robot", "hopper"},
        {"actuators", Json::array({{{"name", "legs"},
                                    {"kind", "delayed_pd"},
                                    {"joints", {"hip", "knee"}},
                                    {"stiffness", 60.0},
                                    {"damping", 2.0},
                                    {"effort_limit", 60.0},
                                    {"delay_steps", 1}}})},
        {"terrain",
         {{"size", {4.0, 4.0}},
          {"cell", 0.1},
          {"border", 1.0},
          {"rows", 3},
          {"max_init_level", 0},
          {"types", Json::array({{{"name", "flat"}, {"kind", "flat"}},
                                 {{"name", "rough"}, {"kind", "random_uniform"}, {"height", {0.0, 0.05}},
                                  {"quantum", 0.005}},
                                 {{"name", "stairs"}, {"kind", "pyramid_stairs"}, {"height", {0.02, 0.08}},
                                  {"step_width", 0.4}, {"levels", 3}}})}}},
        {"height_scanner",
         {{"link", "torso"}, {"offset", {0.0, 0.0, 0.5}}, {"size", {1.6, 1.2}}, {"resolution", 0.1}}},
        {"contact_sensor", {{"links", {"knee"}}}}}},
      {"actions", Json::array({{{"name", "legs"},
                                {"function", "joint_position"},
                                {"params", {{"joints", {"hip", "knee"}}, {"scale", 0.5}}}}})},
      {"commands", Json::array({{{"name", "base_velocity"},
                                 {"ranges", Json::array({{0.0, 1.0}})},
                                 {"resampling_time", {3.0, 5.0}}}})},
      {"observations",
       {{"policy", Json::array({{{"name", "joint_pos"}, {"function", "joint_pos_rel"}},
                                {{"name", "joint_vel"}, {"function", "joint_vel"}, {"scale", 0.1}},
                                {{"name", "velocity_command"}, {"function", "command"},
                                 {"params", {{"name", "base_velocity"}}}},
                                {{"name", "actions"}, {"function", "last_action"}},
                                {{"name", "heights"}, {"function", "height_scan"}, {"clip", {-1.0, 1.0}},
                                 {"params", {{"offset", 0.5}}}}})}}},
      {"rewards",
       Json::array({{{"name", "alive"}, {"function", "is_alive"}, {"weight", 1.0}},
                    {{"name", "track_velocity"},
                     {"function", "track_joint_vel_exp"},
                     {"weight", 1.0},
                     {"params", {{"joint", "slider_x"}, {"command", "base_velocity"}, {"std", 0.5}}}},
                    {{"name", "effort"}, {"function", "effort_l2"}, {"weight", -1e-4},
                     {"params", {{"joints", {"hip", "knee"}}}}},
                    {{"name", "action_rate"}, {"function", "action_rate_l2"}, {"weight", -0.01}},
                    {{"name", "terminating"}, {"function", "is_terminated"}, {"weight", -5.0}}})},
      {"terminations",
       Json::array({{{"name", "base_too_low"},
                     {"function", "link_height_below"},
                     {"params", {{"link", "torso"}, {"minimum", 0.5}}}},
                    {{"name", "torso_tilt"},
                     {"function", "joint_pos_out_of_bounds"},
                     {"params", {{"joint", "torso"}, {"bounds", {-1.0, 1.0}}}}}})},
      {"events",
       Json::array({{{"name", "torso_mass"}, {"mode", "startup"}, {"parameter", "mass"}, {"targets", {"torso"}},
                     {"range", {0.9, 1.1}}, {"operation", "scale"}},
                    {{"name", "foot_friction"}, {"mode", "startup"}, {"parameter", "friction"},
                     {"targets", {"knee"}}, {"range", {0.8, 1.2}}, {"operation", "scale"}},
                    {{"name", "reset_legs"}, {"mode", "reset"}, {"parameter", "joint_pos"},
                     {"targets", {"hip", "knee"}}, {"range", {-0.1, 0.1}}, {"operation", "add"}},
                    {{"name", "push"}, {"mode", "interval"}, {"parameter", "push_velocity"},
                     {"targets", {"slider_x"}}, {"range", {-0.5, 0.5}}, {"operation", "add"},
                     {"interval", {2.0, 4.0}}}})},
      {"curriculum", Json::array({{{"name", "terrain_levels"},
                                   {"function", "terrain_levels"},
                                   {"params", {{"link", "torso"}, {"promote_distance", 2.0},
                                               {"demote_distance", 0.5}}}}})}};
}

Json reacher_json(int n, std::uint64_t seed) {
  return Json{
      {"task", "reacher"},
      {"env_count", n},
      {"physics_dt", 0.01},
      {"decimation", 2},
      {"render_interval", 0},
      {"episode_length", 4.0},
      {"seed", seed},
      {"scene",
       {{"robot", "reacher"},
        {"actuators", Json::array({{{"name", "arm"},
                                    {"kind", "implicit_pd"},
                                    {"joints", {"link1", "link2", "link3"}},
                                    {"stiffness", 200.0},
                                    {"damping", 20.0}}})}}},
      {"actions", Json::array({{{"name", "ee_delta"},
                                {"function", "diff_ik"},
                                {"params", {{"link", "link3"}, {"offset", {0.2, 0.0, 0.0}}, {"scale", 0.05},
                                            {"method", "damped"}, {"damping", 0.05}, {"clip", {-1.0, 1.0}}}}}})},
      {"commands", Json::array({{{"name", "ee_target"},
                                 {"ranges", Json::array({{0.3, 0.6}, {-0.4, 0.4}})},
                                 {"resampling_time", {2.0, 3.0}}}})},
      {"observations",
       {{"policy", Json::array({{{"name", "joint_pos"}, {"function", "joint_pos_rel"}},
                                {{"name", "joint_vel"}, {"function", "joint_vel"}},
                                {{"name", "target"}, {"function", "command"}, {"params", {{"name", "ee_target"}}}},
                                {{"name", "ee_pos"}, {"function", "link_pos"},
                                 {"params", {{"link", "link3"}, {"offset", {0.2, 0.0, 0.0}}}}}})}}},
      {"rewards", Json::array({{{"name", "distance"},
                                {"function", "position_command_error"},
                                {"weight", -1.0},
                                {"params", {{"link", "link3"}, {"offset", {0.2, 0.0, 0.0}}, {"command", "ee_target"}}}}})},
      {"events", Json::array({{{"name", "reset_arm"}, {"mode", "reset"}, {"parameter", "joint_pos"},
                               {"range", {-0.3, 0.3}}, {"operation", "add"}}})}};
}

// ---------------------------------------------------------------------------
// Direct variants. Each mirrors its reference config term for term,
// including the order of random draws on every per-env stream.

struct DirectCartpole {
  int cart = 0;
  int pole = 0;

  DirectHooks hooks() {
    DirectHooks h;
    h.action_dim = 1;
    h.setup = [this](DirectEnv& env) {
      cart = env.scene().find_joint("cart");
      pole = env.scene().find_joint("pole");
    };
    h.pre_physics = [this](DirectEnv& env, const MatX& a) {
      for (int e = 0; e < env.env_count(); ++e) {
        env.scene().commands(e)[static_cast<std::size_t>(cart)].effort = 100.0 * a(e, 0);
      }
    };
    h.post_physics = [this](DirectEnv& env, DirectOutput& out) {
      const double dt = env.env_dt();
      for (int e = 0; e < env.env_count(); ++e) {
        const auto& st = env.scene().state(e);
        const bool term = st.q(cart) < -3.0 || st.q(cart) > 3.0;
        out.terminated[static_cast<std::size_t>(e)] = term ? 1 : 0;
        const double pole_err = st.q(pole) - 0.0;
        double r = 0.0;
        r += 1.0 * (term ? 0.0 : 1.0) * dt;
        r += -2.0 * (term ? 1.0 : 0.0) * dt;
        r += -1.0 * (0.0 + pole_err * pole_err) * dt;
        r += -0.01 * (0.0 + std::abs(st.qd(cart))) * dt;
        r += -0.005 * (0.0 + std::abs(st.qd(pole))) * dt;
        out.reward(e) = r;
      }
    };
    h.reset = [this](DirectEnv& env, std::span<const int> ids, std::vector<dyn::ArticulationState>& staged) {
      for (std::size_t k = 0; k < ids.size(); ++k) {
        auto& g = env.rng(ids[k]);
        auto& st = staged[k];
        const VecX& q0 = env.scene().default_q(ids[k]);
        st.q(cart) = q0(cart) + std::uniform_real_distribution<double>(-1.0, 1.0)(g);
        st.qd(cart) = 0.0 + std::uniform_real_distribution<double>(-0.5, 0.5)(g);
        st.q(pole) = q0(pole) + std::uniform_real_distribution<double>(-kQuarterPi, kQuarterPi)(g);
        st.qd(pole) = 0.0 + std::uniform_real_distribution<double>(-kQuarterPi, kQuarterPi)(g);
      }
    };
    h.observe = [](DirectEnv& env) {
      const Scene& s = env.scene();
      const int dof = s.robot().tree.dof();
      MatX obs(env.env_count(), 2 * dof);
      for (int e = 0; e < env.env_count(); ++e) {
        obs.row(e).head(dof) = (s.state(e).q - s.default_q(e)).transpose();
        obs.row(e).tail(dof) = s.state(e).qd.transpose();
      }
      return ObsGroups{{"policy", obs}};
    };
    return h;
  }
};

struct DirectHopper {
  int slider_x = 0;
  int torso_joint = 0;
  int hip = 0;
  int knee = 0;
  int torso_link = 0;
  MatX actions;
  MatX previous;
  VecX command;
  VecX command_timer;
  VecX push_timer;

  Vec3 torso_local(DirectEnv& env, int e) const {
    const Scene& s = env.scene();
    return s.link_poses(e)[static_cast<std::size_t>(torso_link)].position - s.env_origin(e).position;
  }

  void resample_command(DirectEnv& env, int e) {
    auto& g = env.rng(e);
    command(e) = std::uniform_real_distribution<double>(0.0, 1.0)(g);
    command_timer(e) = std::uniform_real_distribution<double>(3.0, 5.0)(g);
  }

  DirectHooks hooks() {
    DirectHooks h;
    h.action_dim = 2;
    h.setup = [this](DirectEnv& env) {
      Scene& s = env.scene();
      const int n = env.env_count();
      slider_x = s.find_joint("slider_x");
      torso_joint = s.find_joint("torso");
      hip = s.find_joint("hip");
      knee = s.find_joint("knee");
      torso_link = s.robot().tree.find_link("torso");
      actions = MatX::Zero(n, 2);
      previous = MatX::Zero(n, 2);
      command = VecX::Zero(n);
      command_timer = VecX::Zero(n);
      push_timer = VecX::Zero(n);
      for (int e = 0; e < n; ++e) push_timer(e) = std::uniform_real_distribution<double>(2.0, 4.0)(env.rng(e));
      const double torso_mass = s.robot().tree.link(torso_link).mass;
      for (int e = 0; e < n; ++e) {
        s.set_link_mass(e, torso_link, torso_mass * std::uniform_real_distribution<double>(0.9, 1.1)(env.rng(e)));
      }
      for (int e = 0; e < n; ++e) {
        auto& probes = s.probes(e).probes;
        for (std::size_t i = 0; i < probes.size(); ++i) {
          probes[i].friction =
              s.robot().probes.probes[i].friction * std::uniform_real_distribution<double>(0.8, 1.2)(env.rng(e));
        }
      }
    };
    h.pre_physics = [this](DirectEnv& env, const MatX& a) {
      previous = actions;
      actions = a;
      for (int e = 0; e < env.env_count(); ++e) {
        auto cmd = env.scene().commands(e);
        const VecX& q0 = env.scene().default_q(e);
        cmd[static_cast<std::size_t>(hip)].position = q0(hip) + 0.5 * a(e, 0);
        cmd[static_cast<std::size_t>(knee)].position = q0(knee) + 0.5 * a(e, 1);
      }
    };
    h.post_physics = [this](DirectEnv& env, DirectOutput& out) {
      const double dt = env.env_dt();
      const VecX rate = (actions - previous).rowwise().squaredNorm();
      for (int e = 0; e < env.env_count(); ++e) {
        const Scene& s = env.scene();
        const auto& st = s.state(e);
        const bool low = torso_local(env, e).z() < 0.5;
        const bool tilt = st.q(torso_joint) < -1.0 || st.q(torso_joint) > 1.0;
        const bool term = low || tilt;
        out.terminated[static_cast<std::size_t>(e)] = term ? 1 : 0;
        const double dv = st.qd(slider_x) - command(e);
        const VecX& eff = s.efforts(e);
        double r = 0.0;
        r += 1.0 * (term ? 0.0 : 1.0) * dt;
        r += 1.0 * std::exp(-dv * dv / (0.5 * 0.5)) * dt;
        r += -1e-4 * (0.0 + eff(hip) * eff(hip) + eff(knee) * eff(knee)) * dt;
        r += -0.01 * rate(e) * dt;
        r += -5.0 * (term ? 1.0 : 0.0) * dt;
        out.reward(e) = r;
      }
      // Commands and pushes for envs that keep running are handled in
      // observe, which the loop calls after resets.
    };
    h.reset = [this](DirectEnv& env, std::span<const int> ids, std::vector<dyn::ArticulationState>& staged) {
      Scene& s = env.scene();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const int e = ids[k];
        const double travelled = torso_local(env, e).head<2>().norm();
        const int one[] = {e};
        const double score[] = {travelled};
        terrain::curriculum_update(*s.curriculum(), one, score, 2.0, 0.5, env.rng(e));
        s.refresh_origin(e);
        staged[k] = s.default_state(e);
      }
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const int e = ids[k];
        auto& g = env.rng(e);
        const VecX& q0 = s.default_q(e);
        staged[k].q(hip) = q0(hip) + std::uniform_real_distribution<double>(-0.1, 0.1)(g);
        staged[k].q(knee) = q0(knee) + std::uniform_real_distribution<double>(-0.1, 0.1)(g);
        actions.row(e).setZero();
        previous.row(e).setZero();
        resample_command(env, e);
        pending_reset.push_back(e);
      }
    };
    h.observe = [this](DirectEnv& env) {
      Scene& s = env.scene();
      const int n = env.env_count();
      const double dt = env.env_dt();
      // Command timers and interval pushes run after resets and before
      // observations, once per env step (not on explicit resets).
      if (env.total_steps() != observed_step) {
        std::vector<std::uint8_t> reset(static_cast<std::size_t>(n), 0);
        for (const int e : pending_reset) reset[static_cast<std::size_t>(e)] = 1;
        for (int e = 0; e < n; ++e) {
          if (reset[static_cast<std::size_t>(e)]) continue;
          command_timer(e) -= dt;
          if (command_timer(e) <= 1e-12) resample_command(env, e);
        }
        std::vector<int> due;
        for (int e = 0; e < n; ++e) {
          push_timer(e) -= dt;
          if (push_timer(e) <= 1e-12) due.push_back(e);
        }
        for (const int e : due) {
          auto st = s.state(e);
          st.qd(slider_x) = st.qd(slider_x) + std::uniform_real_distribution<double>(-0.5, 0.5)(env.rng(e));
          s.write_state(e, st);
        }
        for (const int e : due) push_timer(e) = std::uniform_real_distribution<double>(2.0, 4.0)(env.rng(e));
      }
      observed_step = env.total_steps();
      pending_reset.clear();

      const int dof = s.robot().tree.dof();
      const auto rays = static_cast<Eigen::Index>(s.scanner_pattern().size());
      MatX vel(n, dof);
      MatX heights(n, rays);
      MatX obs(n, 2 * dof + 1 + 2 + rays);
      for (int e = 0; e < n; ++e) {
        const auto& st = s.state(e);
        vel.row(e) = st.qd.transpose();
        const double base_z = s.link_poses(e)[static_cast<std::size_t>(torso_link)].position.z();
        heights.row(e) = (base_z - s.height_scan(e).array() - 0.5).matrix().transpose();
      }
      vel *= 0.1;
      heights = heights.cwiseMax(-1.0).cwiseMin(1.0);
      heights *= 1.0;
      for (int e = 0; e < n; ++e) {
        const auto& st = s.state(e);
        obs.row(e).head(dof) = (st.q - s.default_q(e)).transpose();
        obs.row(e).segment(dof, dof) = vel.row(e);
        obs(e, 2 * dof) = command(e);
        obs.row(e).segment(2 * dof + 1, 2) = actions.row(e);
        obs.row(e).tail(rays) = heights.row(e);
      }
      return ObsGroups{{"policy", obs}};
    };
    return h;
  }

  std::uint64_t observed_step = 0;
  std::vector<int> pending_reset;
};

}  // namespace

RobotModel cartpole_robot() {
  using dyn::JointKind;
  RobotModel r;
  r.name = "cartpole";
  r.tree.add_link(make_link("cart", -1, JointKind::kPrismatic, Vec3::UnitX(), Vec3::Zero(), 1.0, Vec3::Zero(),
                            Vec3(0.02, 0.02, 0.02)));
  r.tree.add_link(make_link("pole", 0, JointKind::kRevolute, Vec3::UnitY(), Vec3::Zero(), 0.1, Vec3(0, 0, 0.5),
                            Vec3(rod(0.1, 1.0), rod(0.1, 1.0), 1e-5)));
  r.default_q = VecX::Zero(2);
  r.base_offset = Transform::from_translation(Vec3(0.0, 0.0, 2.0));
  return r;
}

RobotModel hopper_robot() {
  using dyn::JointKind;
  RobotModel r;
  r.name = "hopper";
  const Vec3 tiny(1e-4, 1e-4, 1e-4);
  r.tree.add_link(make_link("slider_x", -1, JointKind::kPrismatic, Vec3::UnitX(), Vec3::Zero(), 0.01, Vec3::Zero(), tiny));
  r.tree.add_link(make_link("slider_z", 0, JointKind::kPrismatic, Vec3::UnitZ(), Vec3::Zero(), 0.01, Vec3::Zero(), tiny));
  r.tree.add_link(make_link("torso", 1, JointKind::kRevolute, Vec3::UnitY(), Vec3::Zero(), 3.0, Vec3::Zero(),
                            Vec3(0.04, 0.04, 0.02)));
  r.tree.add_link(make_link("hip", 2, JointKind::kRevolute, Vec3::UnitY(), Vec3(0, 0, -0.2), 1.0, Vec3(0, 0, -0.2),
                            Vec3(rod(1.0, 0.4), rod(1.0, 0.4), 1e-3)));
  r.tree.add_link(make_link("knee", 3, JointKind::kRevolute, Vec3::UnitY(), Vec3(0, 0, -0.4), 0.5, Vec3(0, 0, -0.2),
                            Vec3(rod(0.5, 0.4), rod(0.5, 0.4), 5e-4)));
  r.default_q = VecX::Zero(5);
  r.default_q << 0.0, 1.03, 0.0, 0.3, -0.6;
  dyn::ContactProbe foot;
  foot.link = 4;
  foot.offset = Vec3(0, 0, -0.4);
  foot.radius = 0.05;
  foot.stiffness = 1e4;
  foot.damping = 100.0;
  foot.friction = 1.0;
  foot.tangential_damping = 100.0;
  r.probes.probes.push_back(foot);
  return r;
}

RobotModel reacher_robot() {
  using dyn::JointKind;
  RobotModel r;
  r.name = "reacher";
  r.tree.add_link(make_link("link1", -1, JointKind::kRevolute, Vec3::UnitZ(), Vec3::Zero(), 1.0, Vec3(0.2, 0, 0),
                            Vec3(1e-3, rod(1.0, 0.4), rod(1.0, 0.4))));
  r.tree.add_link(make_link("link2", 0, JointKind::kRevolute, Vec3::UnitZ(), Vec3(0.4, 0, 0), 0.7, Vec3(0.15, 0, 0),
                            Vec3(1e-3, rod(0.7, 0.3), rod(0.7, 0.3))));
  r.tree.add_link(make_link("link3", 1, JointKind::kRevolute, Vec3::UnitZ(), Vec3(0.3, 0, 0), 0.4, Vec3(0.1, 0, 0),
                            Vec3(1e-3, rod(0.4, 0.2), rod(0.4, 0.2))));
  r.default_q = VecX::Zero(3);
  r.default_q << 0.3, 0.6, 0.6;
  return r;
}

RobotModel robot_by_name(const std::string& name) {
  if (name == "cartpole") return cartpole_robot();
  if (name == "hopper") return hopper_robot();
  if (name == "reacher") return reacher_robot();
  throw ConfigError("unknown robot '" + name + "'");
}

EnvConfig reference_config(const std::string& task, int env_count, std::uint64_t seed) {
  if (task == "cartpole") return parse_env_config(cartpole_json(env_count, seed));
  if (task == "hopper") return parse_env_config(hopper_json(env_count, seed));
  if (task == "reacher") return parse_env_config(reacher_json(env_count, seed));
  throw ConfigError("unknown task '" + task + "'");
}

TermLibrary task_library() { return TermLibrary::common(); }

SceneSpec build_scene(const EnvConfig& config) {
  const std::string robot = config.scene.value("robot", config.task);
  return parse_scene_spec(config.scene, robot_by_name(robot), config.settings.env_dt());
}

std::unique_ptr<ManagerEnv> make_manager_env(const EnvConfig& config) {
  return std::make_unique<ManagerEnv>(config, build_scene(config), task_library());
}

bool has_direct_variant(const std::string& task) { return task == "cartpole" || task == "hopper"; }

std::unique_ptr<DirectEnv> make_direct_env(const EnvConfig& config) {
  if (config.task == "cartpole") {
    auto impl = std::make_shared<DirectCartpole>();
    DirectHooks hooks = impl->hooks();
    // The hooks capture `impl`; keep it alive with them.
    hooks.setup = [impl, setup = hooks.setup](DirectEnv& env) { setup(env); };
    return std::make_unique<DirectEnv>(config.settings, build_scene(config), std::move(hooks));
  }
  if (config.task == "hopper") {
    auto impl = std::make_shared<DirectHopper>();
    DirectHooks hooks = impl->hooks();
    hooks.setup = [impl, setup = hooks.setup](DirectEnv& env) { setup(env); };
    return std::make_unique<DirectEnv>(config.settings, build_scene(config), std::move(hooks));
  }
  throw ConfigError("task '" + config.task + "' has no direct variant");
}

}  // namespace batchlab::env
