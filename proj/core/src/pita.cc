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

#include "gvswhip/pita.h"

#include <chrono>
#include <cmath>
#include <limits>

#include "gvswhip/error.h"
#include "gvswhip/reference_trajectory.h"

namespace gvswhip {
namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Physical loss of a normalized prediction and its gradient in normalized
// coordinates.
struct NormalizedLoss {
  LossBreakdown physical;
  Eigen::MatrixXd grad;
};

NormalizedLoss EvaluateNormalized(const DiffusionPolicy& policy, const RodModel& model,
                                  const GoalTask& task, const AdaptConfig& config,
                                  const Eigen::MatrixXd& x0n, bool with_grad) {
  NormalizedLoss out;
  const Eigen::MatrixXd q = policy.normalizer.Denormalize(x0n);
  out.physical = evaluate_loss(model, q, task, policy.token_dt(), with_grad, config.use_pos,
                               config.use_kbc, config.kbc);
  if (!std::isfinite(out.physical.total)) {
    throw Error(ErrorCode::kNonFiniteLoss, "guidance loss is not finite");
  }
  if (with_grad) {
    out.grad = out.physical.grad.array().rowwise() * policy.normalizer.q_std.array();
  }
  return out;
}

// Full diagnostics need both terms even when one is switched off for guidance.
constexpr int kMaxHalvings = 12;

// Guidance objective of a candidate; +inf when it cannot be evaluated.
double GuidedLoss(const DiffusionPolicy& policy, const RodModel& model, const GoalTask& task,
                  const AdaptConfig& config, const Eigen::MatrixXd& x0n) {
  if (!x0n.allFinite()) return std::numeric_limits<double>::infinity();
  try {
    const double v = evaluate_loss(model, policy.normalizer.Denormalize(x0n), task,
                                   policy.token_dt(), false, config.use_pos, config.use_kbc,
                                   config.kbc)
                         .total;
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

// Non-finite values are reported as NaN rather than thrown.
void Measure(const DiffusionPolicy& policy, const RodModel& model, const GoalTask& task,
             const Eigen::MatrixXd& x0n, double* pos, double* kbc) {
  try {
    const LossBreakdown l = evaluate_loss(model, policy.normalizer.Denormalize(x0n), task,
                                          policy.token_dt(), false);
    *pos = l.pos;
    *kbc = l.kbc;
  } catch (const Error&) {
    *pos = *kbc = std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::string_view AdaptModeName(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kNone:
      return "none";
    case AdaptMode::kSampleGrad:
      return "sample_grad";
    case AdaptMode::kProjFinetune:
      return "proj_finetune";
    case AdaptMode::kFullFinetune:
      return "full_finetune";
  }
  return "unknown";
}

AdaptMode ParseAdaptMode(std::string_view name) {
  for (AdaptMode m : {AdaptMode::kNone, AdaptMode::kSampleGrad, AdaptMode::kProjFinetune,
                      AdaptMode::kFullFinetune}) {
    if (AdaptModeName(m) == name) return m;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown adaptation mode '" + std::string(name) +
                  "' (expected none, sample_grad, proj_finetune or full_finetune)");
}

void AdaptConfig::Validate() const {
  if (inner_steps < 0) throw Error(ErrorCode::kInvalidArgument, "inner_steps must be >= 0");
  if (!(lr_tta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr_tta must be positive");
  if (!(guide_from >= 0.0 && guide_from <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "guide_from must lie in [0, 1]");
  }
  if (ddim_steps < 1) throw Error(ErrorCode::kInvalidArgument, "ddim_steps must be >= 1");
}

double BoundaryPenalty(const Eigen::MatrixXd& Q, double dt, const KbcWeights& weights) {
  return loss_kbc(Q, dt, weights);
}

GuidedSample guided_sample_from_noise(const DiffusionPolicy& policy, const RodModel& model,
                                      const Eigen::Vector3d& goal, const AdaptConfig& config,
                                      const Eigen::MatrixXd& noise) {
  config.Validate();
  const auto start = Clock::now();
  GoalTask task;
  task.target = goal;
  task.Validate(model);

  const NoiseSchedule& schedule = policy.schedule;
  const Eigen::Vector3d goal_n = policy.normalizer.NormalizeGoal(goal);
  const std::vector<int> ts = DdimTimesteps(schedule.steps(), config.ddim_steps);
  const bool adapt = config.mode != AdaptMode::kNone && config.inner_steps > 0 &&
                     (config.use_pos || config.use_kbc);
  const double threshold = config.guide_from * schedule.steps();

  DenoiserParams weights = policy.ema;  // private working copy
  const std::vector<int> proj = weights.projection_indices();

  GuidedSample out;
  Eigen::MatrixXd qt = noise;
  Eigen::MatrixXd x0;
  for (size_t i = 0; i < ts.size(); ++i) {
    const auto step_start = Clock::now();
    const int t = ts[i];
    GuidanceStep diag;
    diag.step = static_cast<int>(i);
    diag.t = t;
    const bool guide = adapt && t < threshold;

    if (!guide) {
      x0 = denoise(weights, qt, goal_n, t);
    } else {
      const DenoiserParams weights_before = weights;
      const Eigen::MatrixXd qt_before = qt;
      try {
        switch (config.mode) {
          case AdaptMode::kSampleGrad: {
            x0 = denoise(weights, qt, goal_n, t);
            Measure(policy, model, task, x0, &diag.loss_pos_before, &diag.loss_kbc_before);
            for (int k = 0; k < config.inner_steps; ++k) {
              DenoiserPass pass(weights, qt, goal_n, t, false, true);
              const NormalizedLoss l =
                  EvaluateNormalized(policy, model, task, config, pass.output(), true);
              Eigen::MatrixXd dqt;
              pass.Backward(l.grad, nullptr, &dqt);
              double lr = config.lr_tta;
              for (int trial = 0; trial < kMaxHalvings; ++trial, lr *= 0.5) {
                const Eigen::MatrixXd q = qt - lr * dqt;
                const Eigen::MatrixXd y = denoise(weights, q, goal_n, t);
                if (GuidedLoss(policy, model, task, config, y) < l.physical.total) {
                  qt = q;
                  x0 = y;
                  break;
                }
              }
            }
            break;
          }
          case AdaptMode::kProjFinetune: {
            // Earlier layers are frozen, so the features stay fixed.
            const DenoiserPass pass(weights, qt, goal_n, t, false, false);
            const Eigen::MatrixXd& h = pass.features();
            x0 = pass.output();
            Measure(policy, model, task, x0, &diag.loss_pos_before, &diag.loss_kbc_before);
            auto project = [&h](const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
              Eigen::MatrixXd y = h * w;
              y.rowwise() += b.row(0);
              return y;
            };
            for (int k = 0; k < config.inner_steps; ++k) {
              const NormalizedLoss l = EvaluateNormalized(policy, model, task, config, x0, true);
              const Eigen::MatrixXd gw = h.transpose() * l.grad;
              const Eigen::MatrixXd gb = l.grad.colwise().sum();
              double lr = config.lr_tta;
              for (int trial = 0; trial < kMaxHalvings; ++trial, lr *= 0.5) {
                const Eigen::MatrixXd w = weights.value(proj[0]) - lr * gw;
                const Eigen::MatrixXd b = weights.value(proj[1]) - lr * gb;
                const Eigen::MatrixXd y = project(w, b);
                if (GuidedLoss(policy, model, task, config, y) < l.physical.total) {
                  weights.value(proj[0]) = w;
                  weights.value(proj[1]) = b;
                  x0 = y;
                  break;
                }
              }
            }
            break;
          }
          case AdaptMode::kFullFinetune: {
            x0 = denoise(weights, qt, goal_n, t);
            Measure(policy, model, task, x0, &diag.loss_pos_before, &diag.loss_kbc_before);
            for (int k = 0; k < config.inner_steps; ++k) {
              DenoiserPass pass(weights, qt, goal_n, t, true, false);
              const NormalizedLoss l =
                  EvaluateNormalized(policy, model, task, config, pass.output(), true);
              ParamGrads grads;
              pass.Backward(l.grad, &grads, nullptr);
              double lr = config.lr_tta;
              for (int trial = 0; trial < kMaxHalvings; ++trial, lr *= 0.5) {
                DenoiserParams candidate = weights;
                for (int b = 0; b < candidate.size(); ++b) {
                  if (grads[b].size() != 0) candidate.value(b) -= lr * grads[b];
                }
                const Eigen::MatrixXd y = denoise(candidate, qt, goal_n, t);
                if (GuidedLoss(policy, model, task, config, y) < l.physical.total) {
                  weights = std::move(candidate);
                  x0 = y;
                  break;
                }
              }
            }
            break;
          }
          case AdaptMode::kNone:
            break;
        }
        Measure(policy, model, task, x0, &diag.loss_pos, &diag.loss_kbc);
        if (!x0.allFinite() || !weights.AllFinite() || !std::isfinite(diag.loss_pos + diag.loss_kbc)) {
          throw Error(ErrorCode::kNonFiniteLoss, "adapted prediction is not finite");
        }
        diag.guided = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFiniteLoss && e.code() != ErrorCode::kAngleNearPi) throw;
        weights = weights_before;
        qt = qt_before;
        x0 = denoise(weights, qt, goal_n, t);
        Measure(policy, model, task, x0, &diag.loss_pos, &diag.loss_kbc);
        diag.fallback = true;
        ++out.fallbacks;
      }
    }
    diag.seconds = Seconds(step_start);
    out.steps.push_back(diag);

    if (i + 1 < ts.size()) {
      const Eigen::MatrixXd eps = (qt - schedule.alpha(t) * x0) / schedule.sigma(t);
      const int next = ts[i + 1];
      qt = schedule.alpha(next) * x0 + schedule.sigma(next) * eps;
    }
  }
  out.Q = policy.normalizer.Denormalize(x0);
  out.seconds = Seconds(start);
  return out;
}

GuidedSample guided_sample(const DiffusionPolicy& policy, const RodModel& model,
                           const Eigen::Vector3d& goal, const AdaptConfig& config,
                           std::mt19937_64& rng) {
  const DenoiserConfig& c = policy.ema.config();
  return guided_sample_from_noise(policy, model, goal, config,
                                  SampleNoise(c.horizon, c.features, rng));
}

RolloutScore ScoreTrajectory(const Trajectory& traj, const Eigen::Vector3d& goal) {
  if (traj.length() == 0 || traj.n_points() == 0) {
    throw Error(ErrorCode::kInvalidTrajectory, "trajectory has no recorded points");
  }
  RolloutScore s;
  s.distance = std::numeric_limits<double>::infinity();
  s.control = traj.control;
  const int tip = traj.n_points() - 1;
  for (int r = 0; r < traj.length(); ++r) {
    const double d = (traj.point(r, tip) - goal).norm();
    if (d < s.distance) {
      s.distance = d;
      s.strike_index = r;
    }
  }
  return s;
}

RolloutScore rollout_and_score(const RodModel& model, const Eigen::MatrixXd& Q,
                               const Eigen::Vector3d& goal, int stride) {
  if (Q.cols() != model.dof()) {
    throw Error(ErrorCode::kShapeMismatch, "sequence has " + std::to_string(Q.cols()) +
                                               " columns, model expects " +
                                               std::to_string(model.dof()));
  }
  if (!Q.allFinite()) throw Error(ErrorCode::kInvalidTrajectory, "sequence is not finite");
  const Eigen::MatrixXd full =
      stride == 1 ? Q : UpsampleSequence(Q, stride, kTrajectoryLength);
  if (full.rows() < 2) throw Error(ErrorCode::kTooShort, "sequence needs >= 2 rows");
  const Eigen::VectorXd times =
      Eigen::VectorXd::LinSpaced(full.rows(), 0.0, kTimeStep * (full.rows() - 1));
  const ControlInput control = FitWaypoints(times, full.leftCols<2>());
  const Trajectory traj = simulate(model, control);
  if (!traj.valid) throw Error(ErrorCode::kInvalidTrajectory, "rollout diverged");
  return ScoreTrajectory(traj, goal);
}

}  // namespace gvswhip
