// Copyright 2026 The gvswhip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gvswhip/dynamics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "gvswhip/error.h"

namespace gvswhip {
namespace {

constexpr double kZannaOffset = 0.28867513459481288225;  // sqrt(3)/6
constexpr double kSqrt3 = 1.73205080756887729353;

struct Step {
  Twist xi1;
  Twist xi2;
  Twist omega;
  double half_h;
  double c2;
};

Step MagnusFromBasis(const Matrix6X& phi1, const Matrix6X& phi2, const Eigen::VectorXd& q_soft,
                     const Vector6& ref, double h) {
  Step st;
  st.xi1 = Twist(phi1 * q_soft + ref);
  st.xi2 = Twist(phi2 * q_soft + ref);
  st.half_h = 0.5 * h;
  st.c2 = kSqrt3 * h * h / 12.0;
  st.omega = Twist(st.half_h * (st.xi1.vec() + st.xi2.vec()) +
                   st.c2 * lie_bracket(st.xi1, st.xi2).vec());
  return st;
}

// dOmega/dq_soft.
void MagnusDerivative(const Step& st, const Matrix6X& phi1, const Matrix6X& phi2, Matrix6X& out) {
  out = st.half_h * (phi1 + phi2);
  out.noalias() += (st.c2 * ad(st.xi1)) * phi2;
  out.noalias() -= (st.c2 * ad(st.xi2)) * phi1;
}

// dOmega/dq_soft applied to qd_soft without forming the matrix.
Vector6 MagnusRate(const Step& st, const Matrix6X& phi1, const Matrix6X& phi2,
                   const Eigen::VectorXd& qd_soft) {
  const Twist r1(phi1 * qd_soft);
  const Twist r2(phi2 * qd_soft);
  return st.half_h * (r1.vec() + r2.vec()) +
         st.c2 * (lie_bracket(st.xi1, r2).vec() - lie_bracket(st.xi2, r1).vec());
}

struct ChainResult {
  std::vector<Pose> nodes;
  std::vector<Vector6> node_velocities;
  std::vector<Pose> points;
  std::vector<Vector6> velocities;
  Eigen::MatrixXd jacobians;  // stacked 6 x dof blocks, one per quadrature point
};

void CheckState(const RodModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  CheckConfig(model, q);
  if (qd.size() != model.dof()) {
    throw Error(ErrorCode::kShapeMismatch, "velocity has " + std::to_string(qd.size()) +
                                               " entries, model expects " +
                                               std::to_string(model.dof()));
  }
}

}  // namespace

RodDynamics::RodDynamics(const RodModel& model) : model_(model) {
  model_.Validate();
  const int n = model_.n_intervals;
  const int ns = model_.n_soft();
  const double ds = 1.0 / n;
  const Quadrature quad = GaussLegendre(model_.quadrature_points);
  soft_stiffness_ = Eigen::MatrixXd::Zero(ns, ns);
  soft_damping_ = Eigen::MatrixXd::Zero(ns, ns);
  for (int i = 0; i < n; ++i) {
    const double s_left = i * ds;
    const double len = (i + 1 == n) ? 1.0 - s_left : ds;
    interval_phi1_.push_back(model_.basis.evaluate(s_left + len * (0.5 - kZannaOffset)));
    interval_phi2_.push_back(
        model_.basis.evaluate(std::min(1.0, s_left + len * (0.5 + kZannaOffset))));
    for (size_t k = 0; k < quad.nodes.size(); ++k) {
      QuadraturePoint p;
      p.interval = i;
      p.offset = len * quad.nodes[k];
      p.s = s_left + p.offset;
      p.weight = quad.weights[k] * len * model_.rod_length;
      p.inertia = model_.section_inertia(p.s);
      p.phi1 = model_.basis.evaluate(s_left + p.offset * (0.5 - kZannaOffset));
      p.phi2 = model_.basis.evaluate(s_left + p.offset * (0.5 + kZannaOffset));
      const Matrix6X phi = model_.basis.evaluate(p.s);
      soft_stiffness_ += p.weight * phi.transpose() *
                         model_.section_stiffness(p.s).asDiagonal() * phi;
      soft_damping_ += p.weight * phi.transpose() * model_.section_damping(p.s).asDiagonal() * phi;
      points_.push_back(std::move(p));
    }
  }
}

namespace {

// Walks the chain once. With `jacobians` the body Jacobian of every
// quadrature point is formed and velocities are J qd; otherwise velocities
// are propagated directly.
ChainResult Walk(const RodModel& model, const std::vector<RodDynamics::QuadraturePoint>& points,
                 const std::vector<Matrix6X>& phi1, const std::vector<Matrix6X>& phi2,
                 const Eigen::VectorXd& q, const Eigen::VectorXd& qd, bool jacobians,
                 bool with_points) {
  const int dof = model.dof();
  const int ns = model.n_soft();
  const int n = model.n_intervals;
  const Vector6& ref = model.basis.reference_strain().vec();
  const Eigen::VectorXd q_soft = q.tail(ns);
  const Eigen::VectorXd qd_soft = qd.tail(ns);

  const Twist z1(model.joints[0].screw() * q[0]);
  const Twist z2(model.joints[1].screw() * q[1]);
  const Pose e1 = exp_se3(z1);
  const Pose e2 = exp_se3(z2);
  const Pose root = model.joints[0].offset * e1 * model.joints[1].offset * e2;
  Matrix6X j0 = Matrix6X::Zero(6, dof);
  j0.col(0) = (e1 * model.joints[1].offset * e2).inverse().adjoint() * left_jacobian(z1) *
              model.joints[0].screw();
  j0.col(1) = e2.inverse().adjoint() * left_jacobian(z2) * model.joints[1].screw();

  ChainResult out;
  out.nodes.reserve(n + 1);
  out.node_velocities.reserve(n + 1);
  out.nodes.push_back(root);
  out.node_velocities.push_back(j0.leftCols<2>() * qd.head<2>());
  Matrix6X node_jac;
  if (jacobians) node_jac = j0;
  if (with_points) {
    out.points.reserve(points.size());
    out.velocities.reserve(points.size());
    if (jacobians) out.jacobians.resize(6 * points.size(), dof);
  }
  Matrix6X work(6, dof);
  Matrix6X d_omega(6, ns);

  const double ds = 1.0 / n;
  size_t p = 0;
  for (int i = 0; i < n; ++i) {
    const Pose g = out.nodes.back();
    const Vector6 eta = out.node_velocities.back();
    // Quadrature points inside this interval.
    for (; with_points && p < points.size() && points[p].interval == i; ++p) {
      const auto& pt = points[p];
      const Step st = MagnusFromBasis(pt.phi1, pt.phi2, q_soft, ref, pt.offset * model.rod_length);
      const Pose e = exp_se3(st.omega);
      const Matrix6 back = e.inverse().adjoint();
      const Matrix6 jl = left_jacobian(st.omega);
      out.points.push_back(g * e);
      if (jacobians) {
        MagnusDerivative(st, pt.phi1, pt.phi2, d_omega);
        work = node_jac;
        work.rightCols(ns).noalias() += jl * d_omega;
        auto jac = out.jacobians.middleRows<6>(6 * p);
        jac.noalias() = back * work;
        out.velocities.push_back(jac * qd);
      } else {
        out.velocities.push_back(back * (eta + jl * MagnusRate(st, pt.phi1, pt.phi2, qd_soft)));
      }
    }
    const double len = (i + 1 == n) ? 1.0 - i * ds : ds;
    const Step st = MagnusFromBasis(phi1[i], phi2[i], q_soft, ref, len * model.rod_length);
    const Pose e = exp_se3(st.omega);
    const Matrix6 back = e.inverse().adjoint();
    const Matrix6 jl = left_jacobian(st.omega);
    out.nodes.push_back(g * e);
    if (jacobians) {
      MagnusDerivative(st, phi1[i], phi2[i], d_omega);
      work = node_jac;
      work.rightCols(ns).noalias() += jl * d_omega;
      node_jac.noalias() = back * work;
      out.node_velocities.push_back(node_jac * qd);
    } else {
      out.node_velocities.push_back(back * (eta + jl * MagnusRate(st, phi1[i], phi2[i], qd_soft)));
    }
  }
  return out;
}

}  // namespace

std::vector<Vector6> RodDynamics::QuadratureVelocities(const Eigen::VectorXd& q,
                                                       const Eigen::VectorXd& qd) const {
  CheckState(model_, q, qd);
  return Walk(model_, points_, interval_phi1_, interval_phi2_, q, qd, false, true).velocities;
}

RodDynamics::NodeStates RodDynamics::Nodes(const Eigen::VectorXd& q,
                                           const Eigen::VectorXd& qd) const {
  CheckState(model_, q, qd);
  ChainResult chain = Walk(model_, points_, interval_phi1_, interval_phi2_, q, qd, false, false);
  return {std::move(chain.nodes), std::move(chain.node_velocities)};
}

DynamicsTerms RodDynamics::Evaluate(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                    bool with_coriolis) const {
  CheckState(model_, q, qd);
  const int dof = model_.dof();
  const int ns = model_.n_soft();
  const ChainResult chain =
      Walk(model_, points_, interval_phi1_, interval_phi2_, q, qd, true, true);

  // Jdot qd by a central difference of J(q) qd along the velocity direction.
  std::vector<Vector6> jdot_qd(points_.size(), Vector6::Zero());
  const double speed = qd.norm();
  if (with_coriolis && speed > 0.0) {
    constexpr double kStep = 1e-6;
    const Eigen::VectorXd dir = qd / speed;
    const auto plus = Walk(model_, points_, interval_phi1_, interval_phi2_, q + kStep * dir, qd,
                           false, true);
    const auto minus = Walk(model_, points_, interval_phi1_, interval_phi2_, q - kStep * dir, qd,
                            false, true);
    for (size_t k = 0; k < points_.size(); ++k) {
      jdot_qd[k] = (speed / (2.0 * kStep)) * (plus.velocities[k] - minus.velocities[k]);
    }
  }

  // Stacked sqrt(w M) J, inertial wrenches and gravity wrenches; the sums
  // over quadrature points become single products.
  const int rows = 6 * static_cast<int>(points_.size());
  Eigen::MatrixXd scaled(rows, dof);
  Eigen::VectorXd wrench(rows);
  Eigen::VectorXd gravity(rows);
  for (size_t k = 0; k < points_.size(); ++k) {
    const auto& pt = points_[k];
    const Vector6 weighted = pt.weight * pt.inertia;
    scaled.middleRows<6>(6 * k) =
        weighted.cwiseSqrt().asDiagonal() * chain.jacobians.middleRows<6>(6 * k);
    if (with_coriolis) {
      const Vector6& eta = chain.velocities[k];
      const Vector6 momentum = weighted.cwiseProduct(eta);
      wrench.segment<6>(6 * k) =
          weighted.cwiseProduct(jdot_qd[k]) - ad(Twist(eta)).transpose() * momentum;
    }
    gravity.segment<3>(6 * k).setZero();
    gravity.segment<3>(6 * k + 3) =
        weighted[3] * (chain.points[k].rotation().transpose() * model_.gravity);
  }

  DynamicsTerms t;
  t.mass = Eigen::MatrixXd::Zero(dof, dof);
  t.mass.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
  t.mass.triangularView<Eigen::StrictlyUpper>() = t.mass.transpose();
  t.coriolis = Eigen::VectorXd::Zero(dof);
  if (with_coriolis) t.coriolis.noalias() = chain.jacobians.transpose() * wrench;
  t.gravity.noalias() = chain.jacobians.transpose() * gravity;

  t.stiffness = Eigen::VectorXd::Zero(dof);
  t.stiffness.tail(ns) = soft_stiffness_ * q.tail(ns);
  t.damping = Eigen::VectorXd::Zero(dof);
  t.damping.tail(ns) = soft_damping_ * qd.tail(ns);
  if (model_.mass_damping != 0.0) {
    t.damping.tail(ns) += model_.mass_damping * (t.mass.bottomRightCorner(ns, ns) * qd.tail(ns));
  }
  return t;
}

Eigen::VectorXd RodDynamics::ForwardDynamics(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                             const Eigen::Vector2d& rigid_accel) const {
  const DynamicsTerms t = Evaluate(q, qd, true);
  const int ns = model_.n_soft();
  const Eigen::MatrixXd m_ss = t.mass.bottomRightCorner(ns, ns);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(m_ss);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (!(rcond > 1e-12) || !ldlt.isPositive()) {
    throw Error(ErrorCode::kSolverSingular,
                "soft mass block reciprocal condition " + std::to_string(rcond));
  }
  const Eigen::VectorXd rhs = (t.gravity - t.coriolis - t.stiffness - t.damping).tail(ns) -
                              t.mass.bottomLeftCorner(ns, 2) * rigid_accel;
  Eigen::VectorXd qdd(model_.dof());
  qdd.head<2>() = rigid_accel;
  qdd.tail(ns) = ldlt.solve(rhs);
  return qdd;
}

double RodDynamics::Energy(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const {
  CheckState(model_, q, qd);
  const ChainResult chain =
      Walk(model_, points_, interval_phi1_, interval_phi2_, q, qd, false, true);
  double kinetic = 0.0;
  double potential = 0.0;
  for (size_t k = 0; k < points_.size(); ++k) {
    const auto& pt = points_[k];
    const Vector6& eta = chain.velocities[k];
    kinetic += 0.5 * pt.weight * eta.dot(pt.inertia.cwiseProduct(eta));
    potential -= pt.weight * pt.inertia[3] * model_.gravity.dot(chain.points[k].translation());
  }
  const auto q_soft = q.tail(model_.n_soft());
  return kinetic + potential + 0.5 * q_soft.dot(soft_stiffness_ * q_soft);
}

Eigen::MatrixXd mass_matrix(const RodModel& model, const Eigen::VectorXd& q) {
  return RodDynamics(model).Evaluate(q, Eigen::VectorXd::Zero(model.dof()), false).mass;
}

Eigen::VectorXd coriolis_force(const RodModel& model, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& qd) {
  return RodDynamics(model).Evaluate(q, qd, true).coriolis;
}

Eigen::VectorXd stiffness_force(const RodModel& model, const Eigen::VectorXd& q) {
  CheckConfig(model, q);
  const RodDynamics dyn(model);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(model.dof());
  f.tail(model.n_soft()) = dyn.soft_stiffness() * q.tail(model.n_soft());
  return f;
}

Eigen::VectorXd damping_force(const RodModel& model, const Eigen::VectorXd& q,
                              const Eigen::VectorXd& qd) {
  return RodDynamics(model).Evaluate(q, qd, false).damping;
}

Eigen::VectorXd gravity_force(const RodModel& model, const Eigen::VectorXd& q) {
  return RodDynamics(model).Evaluate(q, Eigen::VectorXd::Zero(model.dof()), false).gravity;
}

namespace {

// Joint reference, coasting at the final rate past the horizon.
JointReference RigidReference(const ControlInput& control, double t) {
  if (t <= kHorizon) return reference_trajectory(control, std::max(t, 0.0));
  JointReference ref = reference_trajectory(control, kHorizon);
  ref.angle += (t - kHorizon) * ref.rate;
  ref.accel.setZero();
  return ref;
}

}  // namespace

Eigen::VectorXd forward_dynamics(const RodModel& model, const SystemState& state,
                                 const ControlInput& control) {
  const JointReference ref = RigidReference(control, state.t);
  return RodDynamics(model).ForwardDynamics(state.q, state.qd, ref.accel);
}

Trajectory integrate(const RodModel& model, const ControlInput& control,
                     const SystemState& initial, const IntegrationOptions& options) {
  control.Validate();
  CheckState(model, initial.q, initial.qd);
  if (!(options.dt > 0.0) || !(options.duration >= 0.0) || options.record_every < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "integration needs dt > 0, duration >= 0 and record_every >= 1");
  }
  const RodDynamics dyn(model);
  const int dof = model.dof();
  const int ns = model.n_soft();
  const int np = model.n_points();
  const int steps = static_cast<int>(std::llround(options.duration / options.dt));
  const int rows = steps / options.record_every + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Trajectory traj;
  traj.control = control;
  traj.times.resize(rows);
  for (int r = 0; r < rows; ++r) {
    traj.times[r] = initial.t + static_cast<double>(r) * options.record_every * options.dt;
  }
  traj.Q = Eigen::MatrixXd::Constant(rows, dof, nan);
  traj.Qd = Eigen::MatrixXd::Constant(rows, dof, nan);
  if (options.record_points) {
    traj.point_positions = Eigen::MatrixXd::Constant(rows, 3 * np, nan);
    traj.point_velocities = Eigen::MatrixXd::Constant(rows, 3 * np, nan);
  }

  auto full_state = [&](double t, const Eigen::VectorXd& qs, const Eigen::VectorXd& vs,
                        Eigen::VectorXd& q, Eigen::VectorXd& qd) {
    const JointReference ref = RigidReference(control, t);
    q.resize(dof);
    qd.resize(dof);
    q.head<2>() = ref.angle;
    qd.head<2>() = ref.rate;
    q.tail(ns) = qs;
    qd.tail(ns) = vs;
    return Eigen::Vector2d(ref.accel);
  };
  auto soft_accel = [&](double t, const Eigen::VectorXd& qs, const Eigen::VectorXd& vs) {
    Eigen::VectorXd q, qd;
    const Eigen::Vector2d a = full_state(t, qs, vs, q, qd);
    return Eigen::VectorXd(dyn.ForwardDynamics(q, qd, a).tail(ns));
  };
  auto write_row = [&](int row, double t, const Eigen::VectorXd& qs, const Eigen::VectorXd& vs) {
    Eigen::VectorXd q, qd;
    full_state(t, qs, vs, q, qd);
    traj.Q.row(row) = q.transpose();
    traj.Qd.row(row) = qd.transpose();
    if (!options.record_points) return;
    const RodDynamics::NodeStates nodes = dyn.Nodes(q, qd);
    for (int j = 0; j < np; ++j) {
      const Pose& g = nodes.frames[j];
      traj.point_positions.block<1, 3>(row, 3 * j) = g.translation().transpose();
      traj.point_velocities.block<1, 3>(row, 3 * j) =
          (g.rotation() * nodes.velocities[j].tail<3>()).transpose();
    }
  };

  Eigen::VectorXd qs = initial.q.tail(ns);
  Eigen::VectorXd vs = initial.qd.tail(ns);
  const double dt = options.dt;
  traj.valid = true;
  try {
    write_row(0, initial.t, qs, vs);
    for (int k = 0; k < steps; ++k) {
      const double t = initial.t + k * dt;
      const Eigen::VectorXd a1 = soft_accel(t, qs, vs);
      const Eigen::VectorXd q2 = qs + 0.5 * dt * vs, v2 = vs + 0.5 * dt * a1;
      const Eigen::VectorXd a2 = soft_accel(t + 0.5 * dt, q2, v2);
      const Eigen::VectorXd q3 = qs + 0.5 * dt * v2, v3 = vs + 0.5 * dt * a2;
      const Eigen::VectorXd a3 = soft_accel(t + 0.5 * dt, q3, v3);
      const Eigen::VectorXd q4 = qs + dt * v3, v4 = vs + dt * a3;
      const Eigen::VectorXd a4 = soft_accel(t + dt, q4, v4);
      qs += (dt / 6.0) * (vs + 2.0 * v2 + 2.0 * v3 + v4);
      vs += (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
      if (!qs.allFinite() || !vs.allFinite() ||
          std::max(qs.cwiseAbs().maxCoeff(), vs.cwiseAbs().maxCoeff()) >
              options.divergence_limit) {
        traj.valid = false;
        break;
      }
      if ((k + 1) % options.record_every == 0) {
        write_row((k + 1) / options.record_every, initial.t + (k + 1) * dt, qs, vs);
      }
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSolverSingular && e.code() != ErrorCode::kAngleNearPi &&
        e.code() != ErrorCode::kOutOfDomain) {
      throw;
    }
    traj.valid = false;
  }
  return traj;
}

Trajectory simulate(const RodModel& model, const ControlInput& control) {
  SystemState start;
  start.q = Eigen::VectorXd::Zero(model.dof());
  start.qd = Eigen::VectorXd::Zero(model.dof());
  return integrate(model, control, start);
}

}  // namespace gvswhip
