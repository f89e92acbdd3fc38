#include "batchlab/controllers/controllers.hpp"

#include <cmath>
#include <numbers>

#include "batchlab/core/error.hpp"
#include "batchlab/dynamics/dynamics.hpp"

namespace batchlab::ctrl {

namespace {

// J^+ dx with singular values below `cutoff` treated as zero.
VecX truncated_pinv_apply(const MatX& j, const VecX& dx, double cutoff) {
  const Eigen::JacobiSVD<MatX> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX& s = svd.singularValues();
  VecX inv_s = VecX::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) >= cutoff && s(i) > 0.0) inv_s(i) = 1.0 / s(i);
  }
  return svd.matrixV() * (inv_s.asDiagonal() * (svd.matrixU().transpose() * dx));
}

void require_size(const VecX& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw InvalidArgument(std::string(what) + " has size " + std::to_string(v.size()) +
                          ", expected " + std::to_string(n));
  }
}

}  // namespace

Vec3 rotation_error(const Quat& current, const Quat& target) {
  Quat e = (target * current.conjugate()).normalized();
  if (e.w() < 0.0) e.coeffs() *= -1.0;
  const Vec3 v = e.vec();
  const double s = v.norm();
  if (s < 1e-15) return Vec3::Zero();
  const double angle = 2.0 * std::atan2(s, e.w());
  Vec3 axis = v / s;
  if (e.w() < 1e-12) {
    // Antipodal: axis and -axis describe the same rotation.
    for (const int k : {2, 1, 0}) {
      if (axis(k) != 0.0) {
        if (axis(k) < 0.0) axis = -axis;
        break;
      }
    }
  }
  return axis * angle;
}

Vec6 pose_error(const Transform& current, const Transform& target) {
  Vec6 e;
  e.head<3>() = target.position - current.position;
  e.tail<3>() = rotation_error(current.orientation, target.orientation);
  return e;
}

IkMethod ik_method_from_string(const std::string& name) {
  if (name == "pinv") return IkMethod::kPinv;
  if (name == "svd_adaptive" || name == "svd") return IkMethod::kSvdAdaptive;
  if (name == "transpose" || name == "trans") return IkMethod::kTranspose;
  if (name == "damped" || name == "dls") return IkMethod::kDamped;
  throw InvalidArgument("unknown ik method '" + name + "'");
}

void IkConfig::validate() const {
  if (!(damping >= 0.0)) throw InvalidArgument("ik damping must be >= 0");
  if (singular_cutoff && !(*singular_cutoff >= 0.0)) throw InvalidArgument("singular value cutoff must be >= 0");
  if (!(transpose_gain > 0.0)) throw InvalidArgument("transpose gain must be > 0");
  if (!(step_scale > 0.0)) throw InvalidArgument("ik step scale must be > 0");
}

VecX diff_ik_step(const MatX& j, const VecX& dx, const IkConfig& config) {
  config.validate();
  if (j.rows() != dx.size()) {
    throw InvalidArgument("jacobian has " + std::to_string(j.rows()) + " rows but the task error has " +
                          std::to_string(dx.size()) + " entries");
  }
  switch (config.method) {
    case IkMethod::kPinv:
      return truncated_pinv_apply(j, dx, kPinvCutoff);
    case IkMethod::kSvdAdaptive: {
      double cutoff = 0.0;
      if (config.singular_cutoff) {
        cutoff = *config.singular_cutoff;
      } else {
        const Eigen::JacobiSVD<MatX> svd(j);
        cutoff = svd.singularValues().size() > 0 ? 0.05 * svd.singularValues()(0) : 0.0;
      }
      return truncated_pinv_apply(j, dx, std::max(cutoff, kPinvCutoff));
    }
    case IkMethod::kTranspose:
      return config.transpose_gain * j.transpose() * dx;
    case IkMethod::kDamped: {
      const double l2 = config.damping * config.damping;
      const MatX a = j * j.transpose() + l2 * MatX::Identity(j.rows(), j.rows());
      return j.transpose() * a.ldlt().solve(dx);
    }
  }
  throw InvalidArgument("unknown ik method");
}

DiffIkController::DiffIkController(IkConfig config) : config_(config) { config_.validate(); }

int DiffIkController::command_size() const {
  if (config_.target == IkTarget::kPosition) return 3;
  return 6;
}

void DiffIkController::set_command(const VecX& command, const Transform& current) {
  require_size(command, command_size(), "ik command");
  if (config_.command_mode == IkCommandMode::kAbsolute) {
    target_.position = command.head<3>();
    target_.orientation = config_.target == IkTarget::kPose ? quat_exp(command.tail<3>())
                                                            : current.orientation;
  } else {
    target_.position = current.position + command.head<3>();
    target_.orientation = config_.target == IkTarget::kPose
                              ? (quat_exp(command.tail<3>()) * current.orientation).normalized()
                              : current.orientation;
  }
}

VecX DiffIkController::compute(const Transform& current, const MatX& jacobian, const VecX& q) const {
  if (jacobian.rows() != 6 || jacobian.cols() != q.size()) {
    throw InvalidArgument("ik expects a 6 x n jacobian matching q");
  }
  const Vec6 e = pose_error(current, target_);
  VecX dq;
  if (config_.target == IkTarget::kPosition) {
    dq = diff_ik_step(jacobian.topRows(3), e.head<3>(), config_);
  } else {
    dq = diff_ik_step(jacobian, e, config_);
  }
  return q + config_.step_scale * dq;
}

VecX joint_impedance(const dyn::KinematicTree& tree, const VecX& q, const VecX& qd,
                     const VecX& q_target, const VecX& stiffness, const VecX& damping,
                     const JointImpedanceOptions& options, const Transform& root_pose,
                     const Vec3& gravity) {
  const int n = tree.dof();
  require_size(q, n, "q");
  require_size(qd, n, "qd");
  require_size(q_target, n, "q target");
  require_size(stiffness, n, "stiffness");
  require_size(damping, n, "damping");
  if ((stiffness.array() < 0.0).any() || (damping.array() < 0.0).any()) {
    throw InvalidArgument("impedance gains must be >= 0");
  }
  const VecX accel = stiffness.cwiseProduct(q_target - q) - damping.cwiseProduct(qd);
  const int r = tree.root_offset();
  VecX tau = accel;
  if (options.inertia_scaling) {
    tau = dyn::mass_matrix(tree, q, root_pose).block(r, r, n, n) * accel;
  }
  if (options.gravity_compensation) {
    auto state = dyn::ArticulationState::zeros(tree);
    state.q = q;
    state.root_pose = root_pose;
    tau += dyn::bias_forces(tree, state, gravity).segment(r, n);
  }
  return tau;
}

TaskSpaceGains TaskSpaceGains::motion(int dims, double stiffness, double damping) {
  return {VecX::Constant(dims, stiffness), VecX::Constant(dims, damping), VecX::Ones(dims),
          VecX::Zero(dims)};
}

void TaskSpaceGains::validate(int dims) const {
  require_size(stiffness, dims, "task stiffness");
  require_size(damping, dims, "task damping");
  require_size(selection, dims, "selection");
  require_size(feedforward_wrench, dims, "feedforward wrench");
  if ((stiffness.array() < 0.0).any() || (damping.array() < 0.0).any()) {
    throw InvalidArgument("task-space gains must be >= 0");
  }
  for (Eigen::Index i = 0; i < selection.size(); ++i) {
    if (selection(i) != 0.0 && selection(i) != 1.0) throw InvalidArgument("selection entries must be 0 or 1");
  }
}

OscOutput osc(const MatX& j, const MatX& mass, const VecX& gravity_torque, const VecX& dx,
              const VecX& xd, const TaskSpaceGains& gains, const VecX& q, const VecX& qd,
              const std::optional<NullSpacePosture>& posture) {
  const auto m = static_cast<int>(j.rows());
  const auto n = static_cast<int>(j.cols());
  if (mass.rows() != n || mass.cols() != n) throw InvalidArgument("mass matrix does not match the jacobian");
  require_size(dx, m, "task error");
  require_size(xd, m, "task velocity");
  require_size(q, n, "q");
  require_size(qd, n, "qd");
  gains.validate(m);

  const Eigen::LLT<MatX> llt(mass);
  if (llt.info() != Eigen::Success) throw InvalidArgument("mass matrix is not positive definite");
  const MatX minv_jt = llt.solve(j.transpose());  // M^-1 J^T
  const MatX inv_lambda = j * minv_jt;
  const MatX lambda =
      (inv_lambda + kOscRegularizer * MatX::Identity(m, m)).ldlt().solve(MatX::Identity(m, m));

  const VecX s = gains.selection;
  const VecX motion = s.cwiseProduct(gains.stiffness.cwiseProduct(dx) - gains.damping.cwiseProduct(xd));
  const VecX force = lambda * motion + (VecX::Ones(m) - s).cwiseProduct(gains.feedforward_wrench);

  OscOutput out;
  out.task_inertia = lambda;
  out.task_torque = j.transpose() * force;
  out.null_torque = VecX::Zero(n);
  if (posture) {
    require_size(posture->q_reference, n, "posture reference");
    const VecX tau0 = posture->stiffness * (posture->q_reference - q) - posture->damping * qd;
    // The projector uses the unregularized task inertia (pseudo-inverse) so
    // that J M^-1 N tau0 vanishes exactly.
    const Eigen::CompleteOrthogonalDecomposition<MatX> cod(inv_lambda);
    const MatX lambda_exact = cod.pseudoInverse();
    const MatX jbar = minv_jt * lambda_exact;  // dynamically consistent inverse
    out.null_torque = tau0 - j.transpose() * (jbar.transpose() * tau0);
  }
  out.torque = out.task_torque + out.null_torque;
  if (gravity_torque.size() > 0) {
    require_size(gravity_torque, n, "gravity torque");
    out.torque += gravity_torque;
  }
  return out;
}

}  // namespace batchlab::ctrl
