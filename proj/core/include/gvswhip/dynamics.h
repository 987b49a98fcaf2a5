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

#ifndef GVSWHIP_DYNAMICS_H_
#define GVSWHIP_DYNAMICS_H_

#include <vector>

#include <Eigen/Core>

#include "gvswhip/kinematics.h"
#include "gvswhip/reference_trajectory.h"
#include "gvswhip/rod_model.h"

namespace gvswhip {

struct SystemState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  double t = 0.0;
};

// One simulated rollout. Point arrays are flattened row-major: column
// 3 * j + k holds coordinate k of material point j.
struct Trajectory {
  Eigen::VectorXd times;            // L
  Eigen::MatrixXd Q;                // L x D
  Eigen::MatrixXd Qd;               // L x D
  Eigen::MatrixXd point_positions;  // L x (3 * n_points)
  Eigen::MatrixXd point_velocities; // L x (3 * n_points)
  ControlInput control;
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();
  bool valid = false;

  int length() const { return static_cast<int>(times.size()); }
  int n_points() const { return static_cast<int>(point_positions.cols() / 3); }
  Eigen::Vector3d point(int row, int j) const {
    return point_positions.block<1, 3>(row, 3 * j).transpose();
  }
  Eigen::Vector3d point_velocity(int row, int j) const {
    return point_velocities.block<1, 3>(row, 3 * j).transpose();
  }
};

// Generalized forces of M(q) qdd + c(q, qd) + K q + D qd = F_grav + B u.
struct DynamicsTerms {
  Eigen::MatrixXd mass;        // D x D
  Eigen::VectorXd coriolis;    // c(q, qd)
  Eigen::VectorXd stiffness;   // K(q)
  Eigen::VectorXd damping;     // D(q) qd
  Eigen::VectorXd gravity;     // generalized gravity force
};

// Quadrature layout and configuration-independent matrices for one model.
// Cheap to copy; the hot simulation loop reuses one instance.
class RodDynamics {
 public:
  explicit RodDynamics(const RodModel& model);

  const RodModel& model() const { return model_; }

  DynamicsTerms Evaluate(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                         bool with_coriolis = true) const;

  // Soft accelerations with the rigid accelerations prescribed. Throws
  // kSolverSingular when the soft mass block is numerically singular.
  Eigen::VectorXd ForwardDynamics(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                  const Eigen::Vector2d& rigid_accel) const;

  // Kinetic + elastic + gravitational energy (gravity datum at the world
  // origin).
  double Energy(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const;

  // sum w L Phi^T Sigma Phi over the soft block.
  const Eigen::MatrixXd& soft_stiffness() const { return soft_stiffness_; }
  const Eigen::MatrixXd& soft_damping() const { return soft_damping_; }

  // Body velocities J(q) qd at every quadrature point, without forming J.
  std::vector<Vector6> QuadratureVelocities(const Eigen::VectorXd& q,
                                            const Eigen::VectorXd& qd) const;

  // Frames and body velocities at the n_intervals + 1 rope nodes.
  struct NodeStates {
    std::vector<Pose> frames;
    std::vector<Vector6> velocities;
  };
  NodeStates Nodes(const Eigen::VectorXd& q, const Eigen::VectorXd& qd) const;

  struct QuadraturePoint {
    int interval;
    double offset;   // normalized arclength past the interval start
    double s;        // normalized arclength
    double weight;   // physical length weight (m)
    Vector6 inertia;
    Matrix6X phi1;   // basis at the sub-step Magnus points
    Matrix6X phi2;
  };
  const std::vector<QuadraturePoint>& quadrature() const { return points_; }

 private:
  RodModel model_;
  std::vector<QuadraturePoint> points_;
  std::vector<Matrix6X> interval_phi1_;
  std::vector<Matrix6X> interval_phi2_;
  Eigen::MatrixXd soft_stiffness_;
  Eigen::MatrixXd soft_damping_;
};

Eigen::MatrixXd mass_matrix(const RodModel& model, const Eigen::VectorXd& q);
Eigen::VectorXd coriolis_force(const RodModel& model, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& qd);
Eigen::VectorXd stiffness_force(const RodModel& model, const Eigen::VectorXd& q);
Eigen::VectorXd damping_force(const RodModel& model, const Eigen::VectorXd& q,
                              const Eigen::VectorXd& qd);
Eigen::VectorXd gravity_force(const RodModel& model, const Eigen::VectorXd& q);

// Full acceleration vector: rigid entries from the reference trajectory at
// state.t, soft entries from the partitioned solve.
Eigen::VectorXd forward_dynamics(const RodModel& model, const SystemState& state,
                                 const ControlInput& control);

struct IntegrationOptions {
  double dt = kTimeStep;
  double duration = kHorizon;
  int record_every = 1;
  bool record_points = true;
  double divergence_limit = 1e6;
};

// Fixed-step RK4 from `initial` with the rigid joints following `control`
// (past the horizon they coast at their final rate). Never throws on
// numerical failure; the returned trajectory is flagged invalid instead and
// unreached rows are NaN.
Trajectory integrate(const RodModel& model, const ControlInput& control,
                     const SystemState& initial, const IntegrationOptions& options = {});

// RK4 at 1 ms over 0.5 s from rest: 501 samples.
Trajectory simulate(const RodModel& model, const ControlInput& control);

}  // namespace gvswhip

#endif  // GVSWHIP_DYNAMICS_H_
