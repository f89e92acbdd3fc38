#include "batchlab/dynamics/dynamics.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "batchlab/core/error.hpp"

namespace batchlab::dyn {

// Spatial vectors are 6-vectors [angular; linear] referred to the world
// origin in world coordinates. Because every quantity shares one reference
// point, no spatial transforms are needed between links.
namespace {

Vec6 cross_motion(const Vec6& v, const Vec6& u) {
  Vec6 out;
  const Vec3 w = v.head<3>();
  out.head<3>() = w.cross(u.head<3>());
  out.tail<3>() = w.cross(u.tail<3>()) + v.tail<3>().cross(u.head<3>());
  return out;
}

Vec6 cross_force(const Vec6& v, const Vec6& f) {
  Vec6 out;
  const Vec3 w = v.head<3>();
  out.head<3>() = w.cross(f.head<3>()) + v.tail<3>().cross(f.tail<3>());
  out.tail<3>() = w.cross(f.tail<3>());
  return out;
}

Mat6 spatial_inertia(const Link& link, const Transform& x) {
  const Mat3 r = x.orientation.toRotationMatrix();
  const Vec3 c = x.apply(link.com);
  const Mat3 ic = r * link.inertia * r.transpose();
  const Mat3 cx = skew(c);
  Mat6 out;
  out.topLeftCorner<3, 3>() = ic + link.mass * cx * cx.transpose();
  out.topRightCorner<3, 3>() = link.mass * cx;
  out.bottomLeftCorner<3, 3>() = link.mass * cx.transpose();
  out.bottomRightCorner<3, 3>() = link.mass * Mat3::Identity();
  return out;
}

Vec6 spatial_force_at(const Vec3& point, const Vec3& force, const Vec3& torque) {
  Vec6 f;
  f.head<3>() = torque + point.cross(force);
  f.tail<3>() = force;
  return f;
}

Transform joint_motion(const Link& link, double q) {
  switch (link.joint) {
    case JointKind::kRevolute:
      return Transform::from_rotation(quat_from_axis_angle(link.axis, q));
    case JointKind::kPrismatic:
      return Transform::from_translation(q * link.axis);
    default:
      return Transform::identity();
  }
}

/// Per-configuration quantities shared by the algorithms below.
struct Frames {
  std::vector<Transform> x;
  Matrix6X s;                 // motion subspace, one column per velocity coordinate
  std::vector<int> col_begin; // first column of each link's joint (-1 if none)
  std::vector<int> col_count;
};

Frames compute_frames(const KinematicTree& tree, const VecX& q, const Transform& root_pose) {
  if (q.size() != tree.dof()) {
    throw InvalidArgument("q has " + std::to_string(q.size()) + " entries, tree has " +
                          std::to_string(tree.dof()) + " dof");
  }
  const int n = tree.link_count();
  Frames fr;
  fr.x.resize(static_cast<std::size_t>(n));
  fr.s = Matrix6X::Zero(6, tree.nv());
  fr.col_begin.assign(static_cast<std::size_t>(n), -1);
  fr.col_count.assign(static_cast<std::size_t>(n), 0);
  const int r = tree.root_offset();
  for (int i = 0; i < n; ++i) {
    const Link& l = tree.link(i);
    const auto ui = static_cast<std::size_t>(i);
    if (l.joint == JointKind::kFree) {
      fr.x[ui] = root_pose;
      const Vec3 p = root_pose.position;
      for (int k = 0; k < 3; ++k) {
        fr.s(3 + k, k) = 1.0;
        const Vec3 e = Vec3::Unit(k);
        fr.s.col(3 + k).head<3>() = e;
        fr.s.col(3 + k).tail<3>() = p.cross(e);
      }
      fr.col_begin[ui] = 0;
      fr.col_count[ui] = 6;
      continue;
    }
    const int j = tree.joint_index(i);
    const double qi = j >= 0 ? q(j) : 0.0;
    // A fixed-base tree is mounted at root_pose.
    const Transform parent = l.parent >= 0 ? fr.x[static_cast<std::size_t>(l.parent)] : root_pose;
    fr.x[ui] = compose(compose(parent, l.parent_to_joint), joint_motion(l, qi));
    if (j < 0) continue;
    const Vec3 a = fr.x[ui].orientation * l.axis;
    const int c = r + j;
    if (l.joint == JointKind::kRevolute) {
      fr.s.col(c).head<3>() = a;
      fr.s.col(c).tail<3>() = fr.x[ui].position.cross(a);
    } else {
      fr.s.col(c).head<3>().setZero();
      fr.s.col(c).tail<3>() = a;
    }
    fr.col_begin[ui] = c;
    fr.col_count[ui] = 1;
  }
  return fr;
}

/// Recursive Newton-Euler returning generalized forces for the given
/// acceleration. `ext` holds world spatial forces acting on each link.
VecX rnea(const KinematicTree& tree, const Frames& fr, const VecX& nu, const VecX& nu_dot,
          const Vec3& gravity, const std::vector<Vec6>* ext) {
  const int n = tree.link_count();
  std::vector<Vec6> v(static_cast<std::size_t>(n)), acc(static_cast<std::size_t>(n));
  std::vector<Vec6> force(static_cast<std::size_t>(n));
  Vec6 a_world;
  a_world.head<3>().setZero();
  a_world.tail<3>() = -gravity;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Link& l = tree.link(i);
    const bool has_parent = l.parent >= 0;
    const auto up = static_cast<std::size_t>(std::max(l.parent, 0));
    Vec6 vj = Vec6::Zero();
    Vec6 aj = Vec6::Zero();
    const int cb = fr.col_begin[ui];
    const int cc = fr.col_count[ui];
    if (cc > 0) {
      vj = fr.s.middleCols(cb, cc) * nu.segment(cb, cc);
      aj = fr.s.middleCols(cb, cc) * nu_dot.segment(cb, cc);
    }
    v[ui] = (has_parent ? v[up] : Vec6::Zero()) + vj;
    acc[ui] = (has_parent ? acc[up] : a_world) + aj;
    if (l.joint == JointKind::kFree) {
      // Only the p x w block of the root subspace varies with time.
      acc[ui].tail<3>() += nu.head<3>().cross(nu.segment<3>(3));
    } else {
      acc[ui] += cross_motion(v[ui], vj);
    }
    const Mat6 inertia = spatial_inertia(l, fr.x[ui]);
    force[ui] = inertia * acc[ui] + cross_force(v[ui], inertia * v[ui]);
    if (ext != nullptr) force[ui] -= (*ext)[ui];
  }
  VecX tau = VecX::Zero(tree.nv());
  for (int i = n - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    const int cb = fr.col_begin[ui];
    const int cc = fr.col_count[ui];
    if (cc > 0) tau.segment(cb, cc) = fr.s.middleCols(cb, cc).transpose() * force[ui];
    const int p = tree.link(i).parent;
    if (p >= 0) force[static_cast<std::size_t>(p)] += force[ui];
  }
  return tau;
}

MatX crba(const KinematicTree& tree, const Frames& fr) {
  const int n = tree.link_count();
  std::vector<Mat6> ic(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ic[static_cast<std::size_t>(i)] = spatial_inertia(tree.link(i), fr.x[static_cast<std::size_t>(i)]);
  }
  for (int i = n - 1; i >= 0; --i) {
    const int p = tree.link(i).parent;
    if (p >= 0) ic[static_cast<std::size_t>(p)] += ic[static_cast<std::size_t>(i)];
  }
  MatX m = MatX::Zero(tree.nv(), tree.nv());
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const int cb = fr.col_begin[ui];
    const int cc = fr.col_count[ui];
    if (cc == 0) continue;
    const Matrix6X force = ic[ui] * fr.s.middleCols(cb, cc);
    m.block(cb, cb, cc, cc) = fr.s.middleCols(cb, cc).transpose() * force;
    for (int j = tree.link(i).parent; j >= 0; j = tree.link(j).parent) {
      const auto uj = static_cast<std::size_t>(j);
      const int jb = fr.col_begin[uj];
      const int jc = fr.col_count[uj];
      if (jc == 0) continue;
      m.block(jb, cb, jc, cc) = fr.s.middleCols(jb, jc).transpose() * force;
      m.block(cb, jb, cc, jc) = m.block(jb, cb, jc, cc).transpose();
    }
  }
  return m;
}

std::vector<Vec6> velocities_from_frames(const KinematicTree& tree, const Frames& fr,
                                         const VecX& nu) {
  const int n = tree.link_count();
  std::vector<Vec6> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const int p = tree.link(i).parent;
    v[ui] = p >= 0 ? v[static_cast<std::size_t>(p)] : Vec6::Zero();
    const int cb = fr.col_begin[ui];
    const int cc = fr.col_count[ui];
    if (cc > 0) v[ui] += fr.s.middleCols(cb, cc) * nu.segment(cb, cc);
  }
  return v;
}

std::vector<Vec6> external_spatial_forces(const KinematicTree& tree, const Frames& fr,
                                          const ArticulationState& state) {
  const int n = tree.link_count();
  std::vector<Vec6> ext(static_cast<std::size_t>(n), Vec6::Zero());
  if (state.external_wrench.empty()) return ext;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Vec6& w = state.external_wrench[ui];
    if (w.isZero(0.0)) continue;
    const Transform& x = fr.x[ui];
    ext[ui] = spatial_force_at(x.apply(tree.link(i).com), x.rotate(w.head<3>()),
                               x.rotate(w.tail<3>()));
  }
  return ext;
}

void add_armature(const KinematicTree& tree, MatX& m, const VecX& armature) {
  if (armature.size() == 0) return;
  if (armature.size() != tree.dof()) throw InvalidArgument("armature length must equal dof");
  if ((armature.array() < 0.0).any()) throw InvalidArgument("armature must be non-negative");
  const int r = tree.root_offset();
  for (int j = 0; j < tree.dof(); ++j) m(r + j, r + j) += armature(j);
}

}  // namespace

std::vector<Transform> forward_kinematics(const KinematicTree& tree, const VecX& q,
                                          const Transform& root_pose) {
  return compute_frames(tree, q, root_pose).x;
}

std::vector<Vec6> link_spatial_velocities(const KinematicTree& tree, const VecX& q,
                                          const ArticulationState& state) {
  const Frames fr = compute_frames(tree, q, state.root_pose);
  return velocities_from_frames(tree, fr, state.velocity(tree));
}

MatX jacobian(const KinematicTree& tree, const VecX& q, const Transform& root_pose, int link,
              const Vec3& point_offset) {
  if (link < 0 || link >= tree.link_count()) throw InvalidArgument("link index out of range");
  const Frames fr = compute_frames(tree, q, root_pose);
  const Vec3 x = fr.x[static_cast<std::size_t>(link)].apply(point_offset);
  MatX jac = MatX::Zero(6, tree.nv());
  for (int i = link; i >= 0; i = tree.link(i).parent) {
    const auto ui = static_cast<std::size_t>(i);
    for (int k = 0; k < fr.col_count[ui]; ++k) {
      const int c = fr.col_begin[ui] + k;
      const Vec3 w = fr.s.col(c).head<3>();
      jac.col(c).head<3>() = fr.s.col(c).tail<3>() + w.cross(x);
      jac.col(c).tail<3>() = w;
    }
  }
  return jac;
}

MatX mass_matrix(const KinematicTree& tree, const VecX& q, const Transform& root_pose,
                 const VecX& armature) {
  MatX m = crba(tree, compute_frames(tree, q, root_pose));
  add_armature(tree, m, armature);
  return m;
}

VecX bias_forces(const KinematicTree& tree, const ArticulationState& state, const Vec3& gravity,
                 bool include_external) {
  const Frames fr = compute_frames(tree, state.q, state.root_pose);
  const VecX nu = state.velocity(tree);
  if (include_external) {
    const auto ext = external_spatial_forces(tree, fr, state);
    return rnea(tree, fr, nu, VecX::Zero(tree.nv()), gravity, &ext);
  }
  return rnea(tree, fr, nu, VecX::Zero(tree.nv()), gravity, nullptr);
}

VecX generalized_force(const KinematicTree& tree, const VecX& q, const Transform& root_pose,
                       int link, const Vec3& world_point, const Vec3& force) {
  const Frames fr = compute_frames(tree, q, root_pose);
  const Vec6 f = spatial_force_at(world_point, force, Vec3::Zero());
  VecX tau = VecX::Zero(tree.nv());
  for (int i = link; i >= 0; i = tree.link(i).parent) {
    const auto ui = static_cast<std::size_t>(i);
    const int cb = fr.col_begin[ui];
    const int cc = fr.col_count[ui];
    if (cc > 0) tau.segment(cb, cc) = fr.s.middleCols(cb, cc).transpose() * f;
  }
  return tau;
}

void ContactPointSet::validate() const {
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    if (!(p.radius > 0.0)) throw InvalidArgument("probe " + std::to_string(i) + ": radius must be > 0");
    if (p.stiffness < 0.0 || p.damping < 0.0 || p.friction < 0.0 || p.tangential_damping < 0.0) {
      throw InvalidArgument("probe " + std::to_string(i) + ": coefficients must be >= 0");
    }
  }
}

ProbeContact penalty_contact(const ContactProbe& probe, double penetration,
                             double normal_velocity, const Vec3& slip_velocity,
                             const Vec3& normal) {
  ProbeContact c;
  c.normal = normal;
  if (penetration <= 0.0) return c;
  c.normal_force = std::max(0.0, probe.stiffness * penetration - probe.damping * normal_velocity);
  c.in_contact = true;
  const double slip = slip_velocity.norm();
  if (slip > 0.0 && c.normal_force > 0.0) {
    const double limit = probe.friction * c.normal_force;
    const double mag = std::min(probe.tangential_damping * slip, limit);
    c.tangent_force = -mag * slip_velocity / slip;
  }
  return c;
}

std::vector<ProbeContact> contact_forces(const std::vector<Transform>& link_transforms,
                                         const std::vector<Vec6>& link_velocities,
                                         const ContactPointSet& probes,
                                         const TerrainQuery& terrain) {
  std::vector<ProbeContact> out;
  out.reserve(probes.probes.size());
  for (const auto& probe : probes.probes) {
    const auto ul = static_cast<std::size_t>(probe.link);
    const Vec3 center = link_transforms[ul].apply(probe.offset);
    const TerrainSample ground = terrain(center);
    const Vec3 n = ground.normal.normalized();
    const double gap = (center.z() - ground.height) * n.z();
    const double penetration = probe.radius - gap;
    const Vec3 point = center - probe.radius * n;
    const Vec3 vel = point_velocity(link_velocities[ul], point);
    const double vn = vel.dot(n);
    ProbeContact c = penalty_contact(probe, penetration, vn, vel - vn * n, n);
    c.point = point;
    c.surface_id = ground.surface_id;
    out.push_back(c);
  }
  return out;
}

StepOutput step(const KinematicTree& tree, ArticulationState& state, const VecX& joint_efforts,
                const StepOptions& options) {
  if (!(options.dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (joint_efforts.size() != tree.dof()) throw InvalidArgument("effort length must equal dof");
  if (!joint_efforts.allFinite()) throw InvalidArgument("efforts must be finite");
  const double dt = options.dt;
  const int r = tree.root_offset();
  const int dof = tree.dof();

  const Frames fr = compute_frames(tree, state.q, state.root_pose);
  const VecX nu = state.velocity(tree);
  std::vector<Vec6> ext = external_spatial_forces(tree, fr, state);

  StepOutput out;
  if (options.probes != nullptr && !options.probes->probes.empty()) {
    const TerrainQuery terrain = options.terrain ? options.terrain : flat_ground();
    const auto vel = velocities_from_frames(tree, fr, nu);
    out.contacts = contact_forces(fr.x, vel, *options.probes, terrain);
    for (std::size_t k = 0; k < out.contacts.size(); ++k) {
      const auto& c = out.contacts[k];
      if (!c.in_contact) continue;
      ext[static_cast<std::size_t>(options.probes->probes[k].link)] +=
          spatial_force_at(c.point, c.world_force(), Vec3::Zero());
    }
  }

  MatX m = crba(tree, fr);
  add_armature(tree, m, options.armature);
  const VecX bias = rnea(tree, fr, nu, VecX::Zero(tree.nv()), options.gravity, &ext);

  VecX tau = VecX::Zero(tree.nv());
  tau.tail(dof) = joint_efforts;
  VecX base_rhs = m * nu + dt * (tau - bias);
  VecX nu_next;

  const ImplicitPd* pd = options.implicit_pd;
  if (pd == nullptr) {
    nu_next = m.ldlt().solve(base_rhs);
  } else {
    if (pd->stiffness.size() != dof || pd->damping.size() != dof ||
        pd->position_target.size() != dof || pd->velocity_target.size() != dof) {
      throw InvalidArgument("implicit PD arrays must have one entry per dof");
    }
    // Joints whose implicit effort saturates fall back to an explicit,
    // clamped effort and the system is re-solved.
    std::vector<bool> saturated(static_cast<std::size_t>(dof), false);
    VecX clamped = VecX::Zero(dof);
    out.implicit_effort = VecX::Zero(dof);
    for (int pass = 0; pass < 3; ++pass) {
      MatX a = m;
      VecX rhs = base_rhs;
      for (int j = 0; j < dof; ++j) {
        if (saturated[static_cast<std::size_t>(j)]) {
          rhs(r + j) += dt * clamped(j);
          continue;
        }
        const double kp = pd->stiffness(j);
        const double kd = pd->damping(j);
        a(r + j, r + j) += dt * kd + dt * dt * kp;
        rhs(r + j) += dt * (kp * (pd->position_target(j) - state.q(j)) + kd * pd->velocity_target(j));
      }
      nu_next = a.ldlt().solve(rhs);
      bool changed = false;
      for (int j = 0; j < dof; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (saturated[uj]) {
          out.implicit_effort(j) = clamped(j);
          continue;
        }
        const double qdn = nu_next(r + j);
        const double effort = pd->stiffness(j) * (pd->position_target(j) - state.q(j) - dt * qdn) +
                              pd->damping(j) * (pd->velocity_target(j) - qdn);
        out.implicit_effort(j) = effort;
        if (pd->effort_limit.size() == dof && std::abs(effort) > pd->effort_limit(j)) {
          saturated[uj] = true;
          clamped(j) = std::clamp(effort, -pd->effort_limit(j), pd->effort_limit(j));
          changed = true;
        }
      }
      if (!changed) break;
    }
  }

  if (options.velocity_limit.size() == dof) {
    for (int j = 0; j < dof; ++j) {
      const double lim = options.velocity_limit(j);
      nu_next(r + j) = std::clamp(nu_next(r + j), -lim, lim);
    }
  }

  state.set_velocity(tree, nu_next);
  state.q += dt * state.qd;
  if (tree.floating()) {
    state.root_pose.position += dt * state.root_lin_vel;
    state.root_pose.orientation =
        (quat_exp(dt * state.root_ang_vel) * state.root_pose.orientation).normalized();
  }
  for (auto& w : state.external_wrench) w.setZero();

  if (!state.q.allFinite() || !state.qd.allFinite() || !state.root_pose.position.allFinite() ||
      !state.root_pose.orientation.coeffs().allFinite() || !state.root_lin_vel.allFinite() ||
      !state.root_ang_vel.allFinite()) {
    throw DivergenceError(options.env_index, "non-finite state after step");
  }
  return out;
}

void apply_external_wrench(const KinematicTree& tree, ArticulationState& state, int link,
                           const Vec3& force, const Vec3& torque) {
  if (link < 0 || link >= tree.link_count()) {
    throw InvalidArgument("invalid link index " + std::to_string(link));
  }
  if (state.external_wrench.size() != static_cast<std::size_t>(tree.link_count())) {
    state.external_wrench.assign(static_cast<std::size_t>(tree.link_count()), Vec6::Zero());
  }
  auto& w = state.external_wrench[static_cast<std::size_t>(link)];
  w.head<3>() += force;
  w.tail<3>() += torque;
}

void apply_external_wrench(const KinematicTree& tree, std::span<ArticulationState> states,
                           int link, const Vec3& force, const Vec3& torque) {
  for (auto& s : states) apply_external_wrench(tree, s, link, force, torque);
}

double total_energy(const KinematicTree& tree, const ArticulationState& state,
                    const Vec3& gravity) {
  const Frames fr = compute_frames(tree, state.q, state.root_pose);
  const VecX nu = state.velocity(tree);
  const double kinetic = 0.5 * nu.dot(crba(tree, fr) * nu);
  double potential = 0.0;
  for (int i = 0; i < tree.link_count(); ++i) {
    const Link& l = tree.link(i);
    potential -= l.mass * gravity.dot(fr.x[static_cast<std::size_t>(i)].apply(l.com));
  }
  return kinetic + potential;
}

}  // namespace batchlab::dyn
