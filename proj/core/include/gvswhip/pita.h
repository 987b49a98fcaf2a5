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

#ifndef GVSWHIP_PITA_H_
#define GVSWHIP_PITA_H_

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gvswhip/diffusion_policy.h"
#include "gvswhip/grad_prior.h"
#include "gvswhip/rod_model.h"

namespace gvswhip {

enum class AdaptMode { kNone, kSampleGrad, kProjFinetune, kFullFinetune };

std::string_view AdaptModeName(AdaptMode mode);
// Accepts none, sample_grad, proj_finetune, full_finetune.
AdaptMode ParseAdaptMode(std::string_view name);

struct AdaptConfig {
  AdaptMode mode = AdaptMode::kProjFinetune;
  int inner_steps = 2;
  double lr_tta = 1e-3;
  // Guidance runs at diffusion steps t < guide_from * T.
  double guide_from = 0.5;
  int ddim_steps = 20;
  bool use_pos = true;
  bool use_kbc = true;
  KbcWeights kbc;

  void Validate() const;
};

struct GuidanceStep {
  int step = 0;  // index into the DDIM schedule
  int t = 0;
  bool guided = false;
  bool fallback = false;  // non-finite loss; unguided prediction used
  double loss_pos_before = 0.0;
  double loss_kbc_before = 0.0;
  double loss_pos = 0.0;  // after adaptation
  double loss_kbc = 0.0;
  double seconds = 0.0;
};

struct GuidedSample {
  Eigen::MatrixXd Q;  // physical units on the strided grid
  std::vector<GuidanceStep> steps;
  int fallbacks = 0;
  double seconds = 0.0;
};

// DDIM with physics-informed adaptation, starting from normalized noise.
// The policy is never modified; finetuning acts on a private copy of the
// sampling weights that is discarded on return.
GuidedSample guided_sample_from_noise(const DiffusionPolicy& policy, const RodModel& model,
                                      const Eigen::Vector3d& goal, const AdaptConfig& config,
                                      const Eigen::MatrixXd& noise);

GuidedSample guided_sample(const DiffusionPolicy& policy, const RodModel& model,
                           const Eigen::Vector3d& goal, const AdaptConfig& config,
                           std::mt19937_64& rng);

// Boundary penalty on rows 0..2 of a strided sample.
double BoundaryPenalty(const Eigen::MatrixXd& Q, double dt, const KbcWeights& weights = {});

struct RolloutScore {
  double distance = 0.0;  // minimum tip-goal distance over the rollout
  int strike_index = 0;   // earliest row attaining it
  ControlInput control;
};

// Fits the rigid-joint columns of Q (strided by `stride`, or full length
// when stride is 1) to waypoints, simulates and scores against the goal.
// Throws kInvalidTrajectory when the simulation diverges.
RolloutScore rollout_and_score(const RodModel& model, const Eigen::MatrixXd& Q,
                               const Eigen::Vector3d& goal, int stride = 10);

// Minimum tip-goal distance of a simulated trajectory, earliest on ties.
RolloutScore ScoreTrajectory(const Trajectory& traj, const Eigen::Vector3d& goal);

}  // namespace gvswhip

#endif  // GVSWHIP_PITA_H_
