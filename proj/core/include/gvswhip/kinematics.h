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

#ifndef GVSWHIP_KINEMATICS_H_
#define GVSWHIP_KINEMATICS_H_

#include <array>
#include <vector>

#include <Eigen/Core>

#include "gvswhip/rod_model.h"
#include "gvswhip/se3.h"

namespace gvswhip {

// Gauss-Legendre nodes and weights mapped to [0, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature GaussLegendre(int n);

// Strain twist per unit physical arclength at normalized arclength s:
// Phi(s) q_soft + xi*. Throws kOutOfDomain for s outside [0, 1].
Twist eval_strain(const RodModel& model, const Eigen::VectorXd& q, double s);

// Fourth-order Magnus step over [s_left, s_left + step] (normalized units).
// The returned twist is dimensionless: exp(hat(Omega)) maps the frame at
// s_left to the frame at s_left + step.
Twist magnus_step(const RodModel& model, const Eigen::VectorXd& q, double s_left, double step);

// Magnus step together with dOmega/dq (6 x dof; rigid columns are zero).
struct MagnusStep {
  Twist omega;
  Matrix6X d_omega;
};
MagnusStep magnus_step_with_derivative(const RodModel& model, const Eigen::VectorXd& q,
                                       double s_left, double step);

struct KinematicsResult {
  std::array<Pose, 2> joint_frames;  // after joint 1, after joint 2 (= rope root)
  std::vector<Pose> frames;          // n_intervals + 1 rope frames, root to tip
};

KinematicsResult forward_kinematics(const RodModel& model, const Eigen::VectorXd& q);
Eigen::Vector3d tip_position(const RodModel& model, const Eigen::VectorXd& q);

// Body-frame geometric Jacobian of the tip frame: column i is
// vee(g_N^-1 dg_N/dq_i).
Matrix6X pose_jacobian(const RodModel& model, const Eigen::VectorXd& q);

// Frames and body Jacobians along the rope. Built once per configuration;
// the dynamics evaluates quadrature points through Sample().
class RodChain {
 public:
  RodChain(const RodModel& model, const Eigen::VectorXd& q, bool with_jacobians = true);

  const Pose& node(int i) const { return nodes_[i]; }
  const Matrix6X& node_jacobian(int i) const { return node_jacobians_[i]; }
  const std::array<Pose, 2>& joint_frames() const { return joint_frames_; }
  int n_nodes() const { return static_cast<int>(nodes_.size()); }

  struct Sample {
    Pose pose;
    Matrix6X jacobian;
  };
  // Frame at normalized arclength offset `offset` inside interval `interval`.
  Sample sample(int interval, double offset) const;

 private:
  const RodModel& model_;
  Eigen::VectorXd q_;
  bool with_jacobians_;
  std::array<Pose, 2> joint_frames_;
  std::vector<Pose> nodes_;
  std::vector<Matrix6X> node_jacobians_;
};

void CheckConfig(const RodModel& model, const Eigen::VectorXd& q);

}  // namespace gvswhip

#endif  // GVSWHIP_KINEMATICS_H_
