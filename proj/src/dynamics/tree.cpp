#include "batchlab/dynamics/tree.hpp"

#include <Eigen/Eigenvalues>

#include "batchlab/core/error.hpp"

namespace batchlab::dyn {

int KinematicTree::add_link(Link link) {
  const int index = link_count();
  if (link.parent >= index) {
    throw InvalidArgument("link '" + link.name + "': parent index must precede child");
  }
  if (link.joint == JointKind::kFree) {
    if (index != 0 || link.parent != -1) {
      throw InvalidArgument("free-root joint is only allowed on link 0");
    }
    floating_ = true;
  } else if (link.parent < 0 && index != 0) {
    throw InvalidArgument("link '" + link.name + "': only link 0 may be parentless");
  }
  if (!(link.mass > 0.0)) {
    throw InvalidArgument("link '" + link.name + "': mass must be positive");
  }
  if (!link.inertia.isApprox(link.inertia.transpose(), 1e-12)) {
    throw InvalidArgument("link '" + link.name + "': inertia must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(link.inertia, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw InvalidArgument("link '" + link.name + "': inertia must be positive-definite");
  }
  if (link.joint == JointKind::kRevolute || link.joint == JointKind::kPrismatic) {
    if (link.axis.norm() < 1e-12) {
      throw InvalidArgument("link '" + link.name + "': joint axis must be non-zero");
    }
    link.axis.normalize();
    q_index_.push_back(dof_);
    dof_link_.push_back(index);
    ++dof_;
  } else {
    q_index_.push_back(-1);
  }
  links_.push_back(std::move(link));
  return index;
}

int KinematicTree::find_link(const std::string& name) const {
  for (int i = 0; i < link_count(); ++i) {
    if (links_[static_cast<std::size_t>(i)].name == name) return i;
  }
  throw InvalidArgument("unknown link '" + name + "'");
}

double KinematicTree::total_mass() const {
  double m = 0.0;
  for (const auto& l : links_) m += l.mass;
  return m;
}

KinematicTree KinematicTree::with_mass_scaled(int i, double factor) const {
  if (i < 0 || i >= link_count()) throw InvalidArgument("link index out of range");
  if (!(factor > 0.0)) throw InvalidArgument("mass scale must be positive");
  KinematicTree copy = *this;
  auto& l = copy.links_[static_cast<std::size_t>(i)];
  l.mass *= factor;
  l.inertia *= factor;
  return copy;
}

ArticulationState ArticulationState::zeros(const KinematicTree& tree) {
  ArticulationState s;
  s.q = VecX::Zero(tree.dof());
  s.qd = VecX::Zero(tree.dof());
  s.external_wrench.assign(static_cast<std::size_t>(tree.link_count()), Vec6::Zero());
  return s;
}

VecX ArticulationState::velocity(const KinematicTree& tree) const {
  VecX v(tree.nv());
  const int r = tree.root_offset();
  if (r == 6) {
    v.head<3>() = root_lin_vel;
    v.segment<3>(3) = root_ang_vel;
  }
  v.tail(tree.dof()) = qd;
  return v;
}

void ArticulationState::set_velocity(const KinematicTree& tree, const VecX& v) {
  if (tree.floating()) {
    root_lin_vel = v.head<3>();
    root_ang_vel = v.segment<3>(3);
  }
  qd = v.tail(tree.dof());
}

}  // namespace batchlab::dyn
