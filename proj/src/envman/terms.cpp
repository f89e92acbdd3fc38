#include <algorithm>
#include <cmath>

#include "batchlab/controllers/controllers.hpp"
#include "batchlab/core/error.hpp"
#include "batchlab/envman/managers.hpp"

namespace batchlab::env {

namespace {

std::vector<int> joints_param(const Json& p, const Scene& scene) {
  std::vector<int> dofs;
  if (p.contains("joints")) {
    for (const auto& name : p.at("joints").get<std::vector<std::string>>()) dofs.push_back(scene.find_joint(name));
  } else {
    for (int j = 0; j < scene.robot().tree.dof(); ++j) dofs.push_back(j);
  }
  return dofs;
}

Vec3 vec3_param(const Json& p, const char* key, const Vec3& fallback) {
  if (!p.contains(key)) return fallback;
  const auto v = p.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError(std::string(key) + " must have 3 entries");
  return {v[0], v[1], v[2]};
}

Range range_param(const Json& p, const char* key) {
  const auto v = p.at(key).get<std::vector<double>>();
  if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError(std::string(key) + " must be [low, high]");
  return {v[0], v[1]};
}

double clip(double v, const std::optional<Range>& r) {
  return r ? std::clamp(v, r->first, r->second) : v;
}

std::optional<Range> clip_param(const Json& p) {
  if (!p.contains("clip")) return std::nullopt;
  return range_param(p, "clip");
}

/// Link point relative to the env origin, in world axes.
Vec3 local_point(ManagerEnv& env, int e, int link, const Vec3& offset) {
  const Scene& s = env.scene();
  return s.link_poses(e)[static_cast<std::size_t>(link)].apply(offset) - s.env_origin(e).position;
}

class JointEffortAction : public ActionTerm {
 public:
  JointEffortAction(const Json& p, const Scene& scene) {
    require_keys(p, {"joints", "scale", "clip"}, "joint_effort");
    joints_ = joints_param(p, scene);
    scale_ = p.value("scale", 1.0);
    clip_ = clip_param(p);
  }
  int dim() const override { return static_cast<int>(joints_.size()); }
  void process(ManagerEnv& env, const MatX& a) override {
    for (int e = 0; e < env.env_count(); ++e) {
      auto cmd = env.scene().commands(e);
      for (std::size_t k = 0; k < joints_.size(); ++k) {
        cmd[static_cast<std::size_t>(joints_[k])].effort = scale_ * clip(a(e, static_cast<Eigen::Index>(k)), clip_);
      }
    }
  }

 private:
  std::vector<int> joints_;
  double scale_ = 1.0;
  std::optional<Range> clip_;
};

class JointPositionAction : public ActionTerm {
 public:
  JointPositionAction(const Json& p, const Scene& scene) {
    require_keys(p, {"joints", "scale", "use_default_offset", "clip"}, "joint_position");
    joints_ = joints_param(p, scene);
    scale_ = p.value("scale", 1.0);
    use_default_ = p.value("use_default_offset", true);
    clip_ = clip_param(p);
  }
  int dim() const override { return static_cast<int>(joints_.size()); }
  void process(ManagerEnv& env, const MatX& a) override {
    for (int e = 0; e < env.env_count(); ++e) {
      auto cmd = env.scene().commands(e);
      const VecX& q0 = env.scene().default_q(e);
      for (std::size_t k = 0; k < joints_.size(); ++k) {
        const int j = joints_[k];
        const double offset = use_default_ ? q0(j) : 0.0;
        cmd[static_cast<std::size_t>(j)].position = offset + scale_ * clip(a(e, static_cast<Eigen::Index>(k)), clip_);
      }
    }
  }

 private:
  std::vector<int> joints_;
  double scale_ = 1.0;
  bool use_default_ = true;
  std::optional<Range> clip_;
};

/// Relative end-effector position command resolved by damped IK into joint
/// position targets every substep.
class DiffIkAction : public ActionTerm {
 public:
  DiffIkAction(const Json& p, const Scene& scene) {
    require_keys(p, {"link", "offset", "scale", "method", "damping", "clip"}, "diff_ik");
    link_ = scene.robot().tree.find_link(p.at("link").get<std::string>());
    offset_ = vec3_param(p, "offset", Vec3::Zero());
    scale_ = p.value("scale", 1.0);
    clip_ = clip_param(p);
    config_.method = ctrl::ik_method_from_string(p.value("method", std::string("damped")));
    config_.damping = p.value("damping", 0.05);
    config_.target = ctrl::IkTarget::kPosition;
    config_.command_mode = ctrl::IkCommandMode::kRelative;
    config_.validate();
    targets_.assign(static_cast<std::size_t>(scene.env_count()), Vec3::Zero());
  }
  int dim() const override { return 3; }
  void process(ManagerEnv& env, const MatX& a) override {
    for (int e = 0; e < env.env_count(); ++e) {
      Vec3 delta;
      for (int c = 0; c < 3; ++c) delta(c) = scale_ * clip(a(e, c), clip_);
      targets_[static_cast<std::size_t>(e)] = ee_pose(env, e).position + delta;
    }
  }
  void apply(ManagerEnv& env) override {
    Scene& s = env.scene();
    for (int e = 0; e < env.env_count(); ++e) {
      const auto& st = s.state(e);
      const Transform current = ee_pose(env, e);
      const MatX j = dyn::jacobian(s.tree(e), st.q, st.root_pose, link_, offset_);
      const Vec3 err = targets_[static_cast<std::size_t>(e)] - current.position;
      const VecX dq = ctrl::diff_ik_step(j.topRows(3).rightCols(s.tree(e).dof()), err, config_);
      auto cmd = s.commands(e);
      for (Eigen::Index k = 0; k < dq.size(); ++k) cmd[static_cast<std::size_t>(k)].position = st.q(k) + dq(k);
    }
  }

 private:
  Transform ee_pose(ManagerEnv& env, int e) const {
    const Transform& link = env.scene().link_poses(e)[static_cast<std::size_t>(link_)];
    return {link.apply(offset_), link.orientation};
  }

  int link_ = 0;
  Vec3 offset_;
  double scale_ = 1.0;
  std::optional<Range> clip_;
  ctrl::IkConfig config_;
  std::vector<Vec3> targets_;
};

}  // namespace

TermLibrary TermLibrary::common() {
  TermLibrary lib;

  // Observations ----------------------------------------------------------
  lib.observations["joint_pos_rel"] = [](const Json& p, const Scene& scene) -> ObservationFn {
    require_keys(p, {"joints"}, "joint_pos_rel");
    const auto joints = joints_param(p, scene);
    return [joints](ManagerEnv& env) {
      MatX out(env.env_count(), static_cast<Eigen::Index>(joints.size()));
      for (int e = 0; e < env.env_count(); ++e) {
        const VecX& q = env.scene().state(e).q;
        const VecX& q0 = env.scene().default_q(e);
        for (std::size_t k = 0; k < joints.size(); ++k) out(e, static_cast<Eigen::Index>(k)) = q(joints[k]) - q0(joints[k]);
      }
      return out;
    };
  };
  lib.observations["joint_vel"] = [](const Json& p, const Scene& scene) -> ObservationFn {
    require_keys(p, {"joints"}, "joint_vel");
    const auto joints = joints_param(p, scene);
    return [joints](ManagerEnv& env) {
      MatX out(env.env_count(), static_cast<Eigen::Index>(joints.size()));
      for (int e = 0; e < env.env_count(); ++e) {
        const VecX& qd = env.scene().state(e).qd;
        for (std::size_t k = 0; k < joints.size(); ++k) out(e, static_cast<Eigen::Index>(k)) = qd(joints[k]);
      }
      return out;
    };
  };
  lib.observations["last_action"] = [](const Json& p, const Scene&) -> ObservationFn {
    require_keys(p, {}, "last_action");
    return [](ManagerEnv& env) { return env.actions(); };
  };
  lib.observations["command"] = [](const Json& p, const Scene&) -> ObservationFn {
    require_keys(p, {"name"}, "command");
    const auto name = p.at("name").get<std::string>();
    return [name](ManagerEnv& env) { return env.command(name); };
  };
  lib.observations["link_pos"] = [](const Json& p, const Scene& scene) -> ObservationFn {
    require_keys(p, {"link", "offset"}, "link_pos");
    const int link = scene.robot().tree.find_link(p.at("link").get<std::string>());
    const Vec3 offset = vec3_param(p, "offset", Vec3::Zero());
    return [link, offset](ManagerEnv& env) {
      MatX out(env.env_count(), 3);
      for (int e = 0; e < env.env_count(); ++e) out.row(e) = local_point(env, e, link, offset).transpose();
      return out;
    };
  };
  lib.observations["height_scan"] = [](const Json& p, const Scene& scene) -> ObservationFn {
    require_keys(p, {"offset"}, "height_scan");
    if (!scene.has_height_scanner()) throw ConfigError("height_scan needs a height_scanner in the scene");
    const int link = scene.robot().tree.find_link(scene.spec().height_scanner->link);
    const double offset = p.value("offset", 0.5);
    return [link, offset](ManagerEnv& env) {
      Scene& s = env.scene();
      const auto rays = static_cast<Eigen::Index>(s.scanner_pattern().size());
      MatX out(env.env_count(), rays);
      for (int e = 0; e < env.env_count(); ++e) {
        const double base_z = s.link_poses(e)[static_cast<std::size_t>(link)].position.z();
        out.row(e) = (base_z - s.height_scan(e).array() - offset).matrix().transpose();
      }
      return out;
    };
  };

  // Rewards ---------------------------------------------------------------
  lib.rewards["is_alive"] = [](const Json& p, const Scene&) -> RewardFn {
    require_keys(p, {}, "is_alive");
    return [](ManagerEnv& env) {
      VecX out(env.env_count());
      for (int e = 0; e < env.env_count(); ++e) out(e) = env.terminated_now()[static_cast<std::size_t>(e)] ? 0.0 : 1.0;
      return out;
    };
  };
  lib.rewards["is_terminated"] = [](const Json& p, const Scene&) -> RewardFn {
    require_keys(p, {}, "is_terminated");
    return [](ManagerEnv& env) {
      VecX out(env.env_count());
      for (int e = 0; e < env.env_count(); ++e) out(e) = env.terminated_now()[static_cast<std::size_t>(e)] ? 1.0 : 0.0;
      return out;
    };
  };
  lib.rewards["joint_pos_target_l2"] = [](const Json& p, const Scene& scene) -> RewardFn {
    require_keys(p, {"joints", "target"}, "joint_pos_target_l2");
    const auto joints = joints_param(p, scene);
    const double target = p.value("target", 0.0);
    return [joints, target](ManagerEnv& env) {
      VecX out = VecX::Zero(env.env_count());
      for (int e = 0; e < env.env_count(); ++e) {
        for (const int j : joints) {
          const double d = env.scene().state(e).q(j) - target;
          out(e) += d * d;
        }
      }
      return out;
    };
  };
  lib.rewards["joint_vel_l1"] = [](const Json& p, const Scene& scene) -> RewardFn {
    require_keys(p, {"joints"}, "joint_vel_l1");
    const auto joints = joints_param(p, scene);
    return [joints](ManagerEnv& env) {
      VecX out = VecX::Zero(env.env_count());
      for (int e = 0; e < env.env_count(); ++e) {
        for (const int j : joints) out(e) += std::abs(env.scene().state(e).qd(j));
      }
      return out;
    };
  };
  lib.rewards["effort_l2"] = [](const Json& p, const Scene& scene) -> RewardFn {
    require_keys(p, {"joints"}, "effort_l2");
    const auto joints = joints_param(p, scene);
    return [joints](ManagerEnv& env) {
      VecX out = VecX::Zero(env.env_count());
      for (int e = 0; e < env.env_count(); ++e) {
        for (const int j : joints) out(e) += env.scene().efforts(e)(j) * env.scene().efforts(e)(j);
      }
      return out;
    };
  };
  lib.rewards["action_rate_l2"] = [](const Json& p, const Scene&) -> RewardFn {
    require_keys(p, {}, "action_rate_l2");
    return [](ManagerEnv& env) -> VecX {
      return (env.actions() - env.previous_actions()).rowwise().squaredNorm();
    };
  };
  lib.rewards["track_joint_vel_exp"] = [](const Json& p, const Scene& scene) -> RewardFn {
    require_keys(p, {"joint", "command", "component", "std"}, "track_joint_vel_exp");
    const int j = scene.find_joint(p.at("joint").get<std::string>());
    const auto command = p.at("command").get<std::string>();
    const int component = p.value("component", 0);
    const double sigma = p.value("std", 0.5);
    if (!(sigma > 0.0)) throw ConfigError("track_joint_vel_exp: std must be > 0");
    return [j, command, component, sigma](ManagerEnv& env) {
      VecX out(env.env_count());
      const MatX& c = env.command(command);
      for (int e = 0; e < env.env_count(); ++e) {
        const double d = env.scene().state(e).qd(j) - c(e, component);
        out(e) = std::exp(-d * d / (sigma * sigma));
      }
      return out;
    };
  };
  lib.rewards["position_command_error"] = [](const Json& p, const Scene& scene) -> RewardFn {
    require_keys(p, {"link", "offset", "command"}, "position_command_error");
    const int link = scene.robot().tree.find_link(p.at("link").get<std::string>());
    const Vec3 offset = vec3_param(p, "offset", Vec3::Zero());
    const auto command = p.at("command").get<std::string>();
    return [link, offset, command](ManagerEnv& env) {
      VecX out(env.env_count());
      const MatX& c = env.command(command);
      for (int e = 0; e < env.env_count(); ++e) {
        const Vec3 x = local_point(env, e, link, offset);
        out(e) = (x.head(c.cols()) - c.row(e).transpose()).norm();
      }
      return out;
    };
  };

  // Terminations ----------------------------------------------------------
  lib.terminations["joint_pos_out_of_bounds"] = [](const Json& p, const Scene& scene) -> TerminationFn {
    require_keys(p, {"joint", "bounds"}, "joint_pos_out_of_bounds");
    const int j = scene.find_joint(p.at("joint").get<std::string>());
    const Range b = range_param(p, "bounds");
    return [j, b](ManagerEnv& env) {
      Flags out(static_cast<std::size_t>(env.env_count()));
      for (int e = 0; e < env.env_count(); ++e) {
        const double q = env.scene().state(e).q(j);
        out[static_cast<std::size_t>(e)] = (q < b.first || q > b.second) ? 1 : 0;
      }
      return out;
    };
  };
  lib.terminations["link_height_below"] = [](const Json& p, const Scene& scene) -> TerminationFn {
    require_keys(p, {"link", "minimum"}, "link_height_below");
    const int link = scene.robot().tree.find_link(p.at("link").get<std::string>());
    const double minimum = p.at("minimum").get<double>();
    return [link, minimum](ManagerEnv& env) {
      Flags out(static_cast<std::size_t>(env.env_count()));
      for (int e = 0; e < env.env_count(); ++e) {
        out[static_cast<std::size_t>(e)] = local_point(env, e, link, Vec3::Zero()).z() < minimum ? 1 : 0;
      }
      return out;
    };
  };

  // Actions ---------------------------------------------------------------
  lib.actions["joint_effort"] = [](const Json& p, const Scene& s) -> std::unique_ptr<ActionTerm> {
    return std::make_unique<JointEffortAction>(p, s);
  };
  lib.actions["joint_position"] = [](const Json& p, const Scene& s) -> std::unique_ptr<ActionTerm> {
    return std::make_unique<JointPositionAction>(p, s);
  };
  lib.actions["diff_ik"] = [](const Json& p, const Scene& s) -> std::unique_ptr<ActionTerm> {
    return std::make_unique<DiffIkAction>(p, s);
  };

  // Curriculum ------------------------------------------------------------
  lib.curriculum["terrain_levels"] = [](const Json& p, const Scene& scene) -> CurriculumFn {
    require_keys(p, {"link", "promote_distance", "demote_distance"}, "terrain_levels");
    if (!scene.terrain()) throw ConfigError("terrain_levels needs terrain in the scene");
    const int link = scene.robot().tree.find_link(p.at("link").get<std::string>());
    const double promote = p.value("promote_distance", 2.0);
    const double demote = p.value("demote_distance", 0.5);
    if (!(promote > demote)) throw ConfigError("terrain_levels: promote_distance must exceed demote_distance");
    return [link, promote, demote](ManagerEnv& env, std::span<const int> ids) {
      Scene& s = env.scene();
      for (const int e : ids) {
        const double travelled = local_point(env, e, link, Vec3::Zero()).head<2>().norm();
        const int one[] = {e};
        const double score[] = {travelled};
        terrain::curriculum_update(*s.curriculum(), one, score, promote, demote, env.rng(e));
        s.refresh_origin(e);
      }
    };
  };

  return lib;
}

}  // namespace batchlab::env
