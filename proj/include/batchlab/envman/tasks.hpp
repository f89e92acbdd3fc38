#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "batchlab/envman/config.hpp"
#include "batchlab/envman/env.hpp"
#include "batchlab/envman/managers.hpp"
#include "batchlab/envman/scene.hpp"

namespace batchlab::env {

// Reference articulations. All are fixed-base; planar motion is expressed
// through prismatic and revolute joints.

/// Cart on a prismatic x rail ("cart") carrying a 1 m pole hinged about y
/// ("pole"). q = 0 is the upright pole.
RobotModel cartpole_robot();
/// Planar one-legged hopper: prismatic x ("slider_x"), prismatic z
/// ("slider_z"), unactuated torso pitch ("torso"), then "hip" and "knee".
/// A contact probe sits at the foot.
RobotModel hopper_robot();
/// Three revolute-z links ("link1".."link3") of 0.4, 0.3, 0.2 m.
RobotModel reacher_robot();
/// Looks a model up by name; throws ConfigError for an unknown robot.
RobotModel robot_by_name(const std::string& name);

/// Reference configurations for "cartpole", "hopper" and "reacher".
EnvConfig reference_config(const std::string& task, int env_count, std::uint64_t seed);

/// Common terms plus the task-specific ones used by the reference configs.
TermLibrary task_library();

/// Scene for a config: the robot named by scene.robot (default: the task
/// name) plus actuators, terrain and sensors. A height scanner without a
/// period updates once per env step.
SceneSpec build_scene(const EnvConfig& config);

std::unique_ptr<ManagerEnv> make_manager_env(const EnvConfig& config);

/// Hand-written direct implementation of a reference task. Its MDP matches
/// reference_config(task) term for term, so both workflows produce the same
/// trajectories under the same seed. Throws ConfigError for tasks without a
/// direct variant.
std::unique_ptr<DirectEnv> make_direct_env(const EnvConfig& config);

bool has_direct_variant(const std::string& task);

}  // namespace batchlab::env
