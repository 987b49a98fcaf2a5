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

#ifndef GVSWHIP_GRAD_PRIOR_H_
#define GVSWHIP_GRAD_PRIOR_H_

#include <optional>

#include <Eigen/Core>

#include "gvswhip/rod_model.h"
#include "gvswhip/se3.h"

namespace gvswhip {

enum class StrikePolicy {
  kMinDistance,  // row whose tip is closest to the target, earliest on ties
  kFixedIndex,
};

struct GoalTask {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  // When set, the pose loss compares full tip frames instead of positions.
  std::optional<Pose> target_pose;
  StrikePolicy strike_policy = StrikePolicy::kMinDistance;
  int strike_index = 0;  // used by kFixedIndex

  // Throws kInvalidArgument when the target lies outside the reachable
  // sphere (rope length plus joint offsets, +10%).
  void Validate(const RodModel& model) const;
};

double WorkspaceRadius(const RodModel& model);

// Squared tip position error, or ||log(target^-1 g_tip)||^2 in pose mode
// (throws kAngleNearPi when the relative rotation reaches pi).
double loss_pos(const RodModel& model, const Eigen::VectorXd& q, const GoalTask& goal);
Eigen::VectorXd grad_loss_pos(const RodModel& model, const Eigen::VectorXd& q,
                              const GoalTask& goal);

// ||Q0||^2 + w_v ||(Q1 - Q0)/dt||^2 + w_a ||(Q2 - 2 Q1 + Q0)/dt^2||^2.
struct KbcWeights {
  double position = 1.0;
  double velocity = -1.0;      // negative selects dt^2
  double acceleration = -1.0;  // negative selects dt^4
};

double loss_kbc(const Eigen::MatrixXd& Q, double dt, const KbcWeights& weights = {});
// Same shape as Q; only rows 0..2 are nonzero. Throws kTooShort for < 3 rows.
Eigen::MatrixXd grad_loss_kbc(const Eigen::MatrixXd& Q, double dt,
                              const KbcWeights& weights = {});

// Row of Q that the pose loss is evaluated at.
int strike_index(const RodModel& model, const Eigen::MatrixXd& Q, const GoalTask& goal);

struct LossBreakdown {
  double pos = 0.0;
  double kbc = 0.0;
  double total = 0.0;
  int strike = 0;
  Eigen::MatrixXd grad;  // d total / dQ, empty unless requested
};

// Pose loss at the strike row plus the boundary penalty. The strike index is
// held fixed while differentiating. Either term can be switched off.
LossBreakdown evaluate_loss(const RodModel& model, const Eigen::MatrixXd& Q, const GoalTask& goal,
                            double dt, bool with_grad, bool use_pos = true, bool use_kbc = true,
                            const KbcWeights& weights = {});

double loss_total(const RodModel& model, const Eigen::MatrixXd& Q, const GoalTask& goal,
                  double dt);
Eigen::MatrixXd grad_loss_total(const RodModel& model, const Eigen::MatrixXd& Q,
                                const GoalTask& goal, double dt);

}  // namespace gvswhip

#endif  // GVSWHIP_GRAD_PRIOR_H_
