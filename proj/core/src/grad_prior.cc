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

#include "gvswhip/grad_prior.h"

#include <cmath>
#include <limits>
#include <string>

#include "gvswhip/error.h"
#include "gvswhip/kinematics.h"

namespace gvswhip {
namespace {

Twist PoseError(const Pose& target, const Pose& g) { return log_se3(target.inverse() * g); }

void CheckFinite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kNonFiniteLoss, std::string(what) + " is not finite");
  }
}

}  // namespace

double WorkspaceRadius(const RodModel& model) {
  double reach = model.rod_length;
  for (const auto& joint : model.joints) reach += joint.offset.translation().norm();
  return 1.1 * reach;
}

void GoalTask::Validate(const RodModel& model) const {
  const double radius = WorkspaceRadius(model);
  if (!target.allFinite() || target.norm() > radius) {
    throw Error(ErrorCode::kInvalidArgument,
                "target at distance " + std::to_string(target.norm()) +
                    " lies outside the workspace sphere of radius " + std::to_string(radius));
  }
  if (strike_policy == StrikePolicy::kFixedIndex && strike_index < 0) {
    throw Error(ErrorCode::kInvalidArgument, "fixed strike index must be >= 0");
  }
}

double loss_pos(const RodModel& model, const Eigen::VectorXd& q, const GoalTask& goal) {
  double loss;
  if (goal.target_pose) {
    const KinematicsResult fk = forward_kinematics(model, q);
    loss = PoseError(*goal.target_pose, fk.frames.back()).vec().squaredNorm();
  } else {
    loss = (tip_position(model, q) - goal.target).squaredNorm();
  }
  CheckFinite(loss, "pose loss");
  return loss;
}

Eigen::VectorXd grad_loss_pos(const RodModel& model, const Eigen::VectorXd& q,
                              const GoalTask& goal) {
  const RodChain chain(model, q, /*with_jacobians=*/true);
  const Pose& tip = chain.node(chain.n_nodes() - 1);
  const Matrix6X& jac = chain.node_jacobian(chain.n_nodes() - 1);
  if (goal.target_pose) {
    const Twist delta = PoseError(*goal.target_pose, tip);
    const Vector6 row = 2.0 * right_jacobian_inverse(delta).transpose() * delta.vec();
    return jac.transpose() * row;
  }
  // Body-frame linear velocity rotated into the world frame.
  const Eigen::Vector3d err = tip.translation() - goal.target;
  const Eigen::Vector3d row = 2.0 * tip.rotation().transpose() * err;
  return jac.bottomRows<3>().transpose() * row;
}

namespace {

struct ResolvedWeights {
  double p, v, a;
};

ResolvedWeights Resolve(const KbcWeights& w, double dt) {
  return {w.position, w.velocity < 0.0 ? dt * dt : w.velocity,
          w.acceleration < 0.0 ? dt * dt * dt * dt : w.acceleration};
}

void CheckKbcInput(const Eigen::MatrixXd& Q, double dt) {
  if (Q.rows() < 3) {
    throw Error(ErrorCode::kTooShort,
                "boundary penalty needs >= 3 rows, got " + std::to_string(Q.rows()));
  }
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
}

}  // namespace

double loss_kbc(const Eigen::MatrixXd& Q, double dt, const KbcWeights& weights) {
  CheckKbcInput(Q, dt);
  const ResolvedWeights w = Resolve(weights, dt);
  const Eigen::RowVectorXd vel = (Q.row(1) - Q.row(0)) / dt;
  const Eigen::RowVectorXd acc = (Q.row(2) - 2.0 * Q.row(1) + Q.row(0)) / (dt * dt);
  const double loss =
      w.p * Q.row(0).squaredNorm() + w.v * vel.squaredNorm() + w.a * acc.squaredNorm();
  CheckFinite(loss, "boundary loss");
  return loss;
}

Eigen::MatrixXd grad_loss_kbc(const Eigen::MatrixXd& Q, double dt, const KbcWeights& weights) {
  CheckKbcInput(Q, dt);
  const ResolvedWeights w = Resolve(weights, dt);
  const Eigen::RowVectorXd vel = (Q.row(1) - Q.row(0)) / dt;
  const Eigen::RowVectorXd acc = (Q.row(2) - 2.0 * Q.row(1) + Q.row(0)) / (dt * dt);
  const Eigen::RowVectorXd gv = (2.0 * w.v / dt) * vel;
  const Eigen::RowVectorXd ga = (2.0 * w.a / (dt * dt)) * acc;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(Q.rows(), Q.cols());
  g.row(0) = 2.0 * w.p * Q.row(0) - gv + ga;
  g.row(1) = gv - 2.0 * ga;
  g.row(2) = ga;
  return g;
}

int strike_index(const RodModel& model, const Eigen::MatrixXd& Q, const GoalTask& goal) {
  if (Q.rows() == 0) throw Error(ErrorCode::kTooShort, "empty trajectory");
  if (Q.cols() != model.dof()) {
    throw Error(ErrorCode::kShapeMismatch, "trajectory has " + std::to_string(Q.cols()) +
                                               " columns, model expects " +
                                               std::to_string(model.dof()));
  }
  if (goal.strike_policy == StrikePolicy::kFixedIndex) {
    if (goal.strike_index >= Q.rows()) {
      throw Error(ErrorCode::kOutOfDomain, "strike index " + std::to_string(goal.strike_index) +
                                               " beyond " + std::to_string(Q.rows()) + " rows");
    }
    return goal.strike_index;
  }
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int r = 0; r < Q.rows(); ++r) {
    const double d = (tip_position(model, Q.row(r).transpose()) - goal.target).norm();
    if (d < best_dist) {
      best_dist = d;
      best = r;
    }
  }
  return best;
}

LossBreakdown evaluate_loss(const RodModel& model, const Eigen::MatrixXd& Q, const GoalTask& goal,
                            double dt, bool with_grad, bool use_pos, bool use_kbc,
                            const KbcWeights& weights) {
  LossBreakdown out;
  if (with_grad) out.grad = Eigen::MatrixXd::Zero(Q.rows(), Q.cols());
  if (use_pos) {
    out.strike = strike_index(model, Q, goal);
    const Eigen::VectorXd q = Q.row(out.strike).transpose();
    out.pos = loss_pos(model, q, goal);
    if (with_grad) out.grad.row(out.strike) += grad_loss_pos(model, q, goal).transpose();
  }
  if (use_kbc) {
    out.kbc = loss_kbc(Q, dt, weights);
    if (with_grad) out.grad += grad_loss_kbc(Q, dt, weights);
  }
  out.total = out.pos + out.kbc;
  return out;
}

double loss_total(const RodModel& model, const Eigen::MatrixXd& Q, const GoalTask& goal,
                  double dt) {
  return evaluate_loss(model, Q, goal, dt, false).total;
}

Eigen::MatrixXd grad_loss_total(const RodModel& model, const Eigen::MatrixXd& Q,
                                const GoalTask& goal, double dt) {
  return evaluate_loss(model, Q, goal, dt, true).grad;
}

}  // namespace gvswhip
