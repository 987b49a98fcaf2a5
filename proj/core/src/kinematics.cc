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

#include "gvswhip/kinematics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "gvswhip/error.h"

namespace gvswhip {

namespace {

// P_n(x) and P_n'(x) by the three-term recurrence.
std::pair<double, double> Legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace

Quadrature GaussLegendre(int n) {
  Quadrature quad;
  quad.nodes.resize(n);
  quad.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = Legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = Legendre(n, x).second;
    // Roots come out descending; store ascending on [0, 1].
    quad.nodes[n - 1 - i] = 0.5 * (x + 1.0);
    quad.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return quad;
}

void CheckConfig(const RodModel& model, const Eigen::VectorXd& q) {
  if (q.size() != model.dof()) {
    throw Error(ErrorCode::kShapeMismatch, "configuration has " + std::to_string(q.size()) +
                                               " entries, model expects " +
                                               std::to_string(model.dof()));
  }
}

Twist eval_strain(const RodModel& model, const Eigen::VectorXd& q, double s) {
  CheckConfig(model, q);
  const Matrix6X phi = model.basis.evaluate(s);
  return Twist(phi * q.tail(model.n_soft()) + model.basis.reference_strain().vec());
}

MagnusStep magnus_step_with_derivative(const RodModel& model, const Eigen::VectorXd& q,
                                       double s_left, double step) {
  CheckConfig(model, q);
  const double s_right = s_left + step;
  if (!(s_left >= 0.0) || !(step >= 0.0) || s_right > 1.0 + 1e-12) {
    throw Error(ErrorCode::kOutOfDomain, "magnus step [" + std::to_string(s_left) + ", " +
                                             std::to_string(s_right) + "] leaves [0, 1]");
  }
  constexpr double kOffset = 0.28867513459481288225;  // sqrt(3)/6
  const double s1 = s_left + step * (0.5 - kOffset);
  const double s2 = std::min(1.0, s_left + step * (0.5 + kOffset));
  const Matrix6X phi1 = model.basis.evaluate(s1);
  const Matrix6X phi2 = model.basis.evaluate(s2);
  const auto q_soft = q.tail(model.n_soft());
  const Vector6& ref = model.basis.reference_strain().vec();
  const Twist xi1(phi1 * q_soft + ref);
  const Twist xi2(phi2 * q_soft + ref);

  const double h = step * model.rod_length;  // physical step
  const double c2 = std::sqrt(3.0) * h * h / 12.0;

  MagnusStep out;
  out.omega = Twist(0.5 * h * (xi1.vec() + xi2.vec()) + c2 * lie_bracket(xi1, xi2).vec());
  out.d_omega = Matrix6X::Zero(6, model.dof());
  out.d_omega.rightCols(model.n_soft()) =
      0.5 * h * (phi1 + phi2) + c2 * (ad(xi1) * phi2 - ad(xi2) * phi1);
  return out;
}

Twist magnus_step(const RodModel& model, const Eigen::VectorXd& q, double s_left, double step) {
  return magnus_step_with_derivative(model, q, s_left, step).omega;
}

RodChain::RodChain(const RodModel& model, const Eigen::VectorXd& q, bool with_jacobians)
    : model_(model), q_(q), with_jacobians_(with_jacobians) {
  CheckConfig(model, q);
  const int dof = model.dof();
  const Twist xi1(model.joints[0].screw() * q[0]);
  const Twist xi2(model.joints[1].screw() * q[1]);
  const Pose e1 = exp_se3(xi1);
  const Pose e2 = exp_se3(xi2);
  joint_frames_[0] = model.joints[0].offset * e1;
  joint_frames_[1] = joint_frames_[0] * model.joints[1].offset * e2;

  nodes_.reserve(model.n_intervals + 1);
  nodes_.push_back(joint_frames_[1]);
  if (with_jacobians_) {
    Matrix6X j0 = Matrix6X::Zero(6, dof);
    // dg = prefix * (J_l(xi_k) Phi_k dq)^ * exp(xi_k) * suffix, moved to the
    // body frame of the rope root.
    const Pose after1 = e1 * model.joints[1].offset * e2;
    j0.col(0) = after1.inverse().adjoint() * left_jacobian(xi1) * model.joints[0].screw();
    j0.col(1) = e2.inverse().adjoint() * left_jacobian(xi2) * model.joints[1].screw();
    node_jacobians_.reserve(model.n_intervals + 1);
    node_jacobians_.push_back(std::move(j0));
  }

  const double step = 1.0 / model.n_intervals;
  for (int i = 0; i < model.n_intervals; ++i) {
    const double s_left = i * step;
    const double len = (i + 1 == model.n_intervals) ? 1.0 - s_left : step;
    const MagnusStep ms = magnus_step_with_derivative(model, q, s_left, len);
    const Pose e = exp_se3(ms.omega);
    nodes_.push_back(nodes_.back() * e);
    if (with_jacobians_) {
      node_jacobians_.push_back(e.inverse().adjoint() *
                                (node_jacobians_.back() + left_jacobian(ms.omega) * ms.d_omega));
    }
  }
}

RodChain::Sample RodChain::sample(int interval, double offset) const {
  Sample out;
  if (offset <= 0.0) {
    out.pose = nodes_[interval];
    if (with_jacobians_) out.jacobian = node_jacobians_[interval];
    return out;
  }
  const double s_left = static_cast<double>(interval) / model_.n_intervals;
  const MagnusStep ms = magnus_step_with_derivative(model_, q_, s_left, offset);
  const Pose e = exp_se3(ms.omega);
  out.pose = nodes_[interval] * e;
  if (with_jacobians_) {
    out.jacobian = e.inverse().adjoint() *
                   (node_jacobians_[interval] + left_jacobian(ms.omega) * ms.d_omega);
  }
  return out;
}

KinematicsResult forward_kinematics(const RodModel& model, const Eigen::VectorXd& q) {
  RodChain chain(model, q, /*with_jacobians=*/false);
  KinematicsResult out;
  out.joint_frames = chain.joint_frames();
  out.frames.reserve(chain.n_nodes());
  for (int i = 0; i < chain.n_nodes(); ++i) out.frames.push_back(chain.node(i));
  return out;
}

Eigen::Vector3d tip_position(const RodModel& model, const Eigen::VectorXd& q) {
  RodChain chain(model, q, /*with_jacobians=*/false);
  return chain.node(chain.n_nodes() - 1).translation();
}

Matrix6X pose_jacobian(const RodModel& model, const Eigen::VectorXd& q) {
  RodChain chain(model, q, /*with_jacobians=*/true);
  return chain.node_jacobian(chain.n_nodes() - 1);
}

}  // namespace gvswhip
