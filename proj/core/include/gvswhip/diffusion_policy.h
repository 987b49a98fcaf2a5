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

#ifndef GVSWHIP_DIFFUSION_POLICY_H_
#define GVSWHIP_DIFFUSION_POLICY_H_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gvswhip/autodiff.h"
#include "gvswhip/dynamics.h"

namespace gvswhip {

class NoiseSchedule {
 public:
  explicit NoiseSchedule(int steps = 512, double beta_start = 1e-4, double beta_end = 2e-2);

  int steps() const { return steps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  const Eigen::VectorXd& betas() const { return betas_; }
  const Eigen::VectorXd& alpha_bars() const { return alpha_bars_; }
  // alpha(t)^2 + sigma(t)^2 == 1 holds exactly in double arithmetic.
  double alpha(int t) const;
  double sigma(int t) const;

 private:
  int steps_;
  double beta_start_;
  double beta_end_;
  Eigen::VectorXd betas_;
  Eigen::VectorXd alpha_bars_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd sigma_;
};

// Strided DDIM timesteps, descending, always ending at 0 when n_steps > 1.
std::vector<int> DdimTimesteps(int steps, int n_steps);

// Qt = alpha(t) Q0 + sigma(t) eps.
Eigen::MatrixXd q_sample(const NoiseSchedule& schedule, const Eigen::MatrixXd& q0, int t,
                         const Eigen::MatrixXd& eps);

struct DenoiserConfig {
  int features = 20;
  int horizon = 51;
  int d_model = 256;
  int blocks = 4;
  int heads = 4;
  int goal_tokens = 4;
  int ffn_mult = 4;

  void Validate() const;
};

// Named parameter blocks of the transformer denoiser.
class DenoiserParams {
 public:
  static constexpr std::string_view kOutWeight = "out.weight";
  static constexpr std::string_view kOutBias = "out.bias";

  DenoiserParams() = default;
  static DenoiserParams Init(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int i) const { return names_[i]; }
  Eigen::MatrixXd& value(int i) { return values_[i]; }
  const Eigen::MatrixXd& value(int i) const { return values_[i]; }
  std::vector<Eigen::MatrixXd>& values() { return values_; }
  const std::vector<Eigen::MatrixXd>& values() const { return values_; }
  // Throws kInvalidArgument for unknown names.
  int index(std::string_view name) const;
  // Indices of the final projection block (weight, bias).
  std::vector<int> projection_indices() const;
  Eigen::Index n_scalars() const;
  bool AllFinite() const;

  void Add(std::string name, Eigen::MatrixXd value);
  void set_config(const DenoiserConfig& config) { config_ = config; }

 private:
  DenoiserConfig config_;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> values_;
};

using ParamGrads = std::vector<Eigen::MatrixXd>;

// One recorded forward pass of the denoiser on normalized data. Backward()
// may be called once.
class DenoiserPass {
 public:
  DenoiserPass(const DenoiserParams& params, const Eigen::MatrixXd& qt,
               const Eigen::Vector3d& goal, int t, bool param_grads, bool input_grad);

  const Eigen::MatrixXd& output() const { return tape_.value(output_); }
  // Final normalized features feeding the output projection.
  const Eigen::MatrixXd& features() const { return tape_.value(features_); }

  // Accumulates into param_grads (resized on first use) and input_grad.
  void Backward(const Eigen::MatrixXd& d_output, ParamGrads* param_grads,
                Eigen::MatrixXd* input_grad);

 private:
  Tape tape_;
  std::vector<Tape::Var> param_vars_;
  Tape::Var input_ = -1;
  Tape::Var features_ = -1;
  Tape::Var output_ = -1;
};

// Deterministic forward pass; predicts the clean normalized sequence.
Eigen::MatrixXd denoise(const DenoiserParams& params, const Eigen::MatrixXd& qt,
                        const Eigen::Vector3d& goal, int t);

struct DiffusionLossWeights {
  double lambda_q = 1.0;
  double lambda_qd = 1e-4;
  double dt = 0.01;  // spacing of the strided tokens
};

struct DiffusionLoss {
  double q = 0.0;
  double qd = 0.0;
  double total = 0.0;
};

// Mean-squared position and central-difference velocity error of a
// prediction. Writes dL/dprediction when requested.
DiffusionLoss x0_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                      const DiffusionLossWeights& weights, Eigen::MatrixXd* d_prediction = nullptr);

// Loss of one normalized example at fixed t and noise. Adds scale * dL/dparams
// into grads when non-null.
DiffusionLoss diffusion_loss(const DenoiserParams& params, const NoiseSchedule& schedule,
                             const Eigen::MatrixXd& q0, const Eigen::Vector3d& goal, int t,
                             const Eigen::MatrixXd& eps, const DiffusionLossWeights& weights,
                             ParamGrads* grads = nullptr, double scale = 1.0);

struct Normalizer {
  Eigen::RowVectorXd q_mean;
  Eigen::RowVectorXd q_std;
  Eigen::RowVector3d goal_mean = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d goal_std = Eigen::RowVector3d::Ones();

  static Normalizer Identity(int features);
  static Normalizer Fit(const std::vector<Eigen::MatrixXd>& sequences,
                        const std::vector<Eigen::Vector3d>& goals);
  Eigen::MatrixXd Normalize(const Eigen::MatrixXd& q) const;
  Eigen::MatrixXd Denormalize(const Eigen::MatrixXd& qn) const;
  Eigen::Vector3d NormalizeGoal(const Eigen::Vector3d& goal) const;
};

struct TrainConfig {
  double lr = 1e-4;
  double ema_decay = 0.9999;
  int batch = 32;
  int iterations = 1000;
  double lambda_q = 1.0;
  double lambda_qd = 1e-4;
  int stride = 10;
  int steps = 512;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  DenoiserConfig net;

  void Validate() const;
};

struct DiffusionPolicy {
  NoiseSchedule schedule;
  DenoiserParams params;
  DenoiserParams ema;
  Normalizer normalizer;
  TrainConfig config;
  std::uint64_t iterations_done = 0;

  double token_dt() const { return kTimeStep * config.stride; }
  DiffusionLossWeights loss_weights() const {
    return {config.lambda_q, config.lambda_qd, token_dt()};
  }
};

// Every stride-th row of Q (row 0 and the last row always included when the
// length is a multiple of the stride plus one).
Eigen::MatrixXd StrideSequence(const Eigen::MatrixXd& Q, int stride);
// Linear interpolation back onto the full time grid.
Eigen::MatrixXd UpsampleSequence(const Eigen::MatrixXd& Q, int stride, int length);

struct TrainingExample {
  Eigen::MatrixXd q;  // strided, physical units
  Eigen::Vector3d goal;
};

std::vector<TrainingExample> MakeExamples(const std::vector<Trajectory>& trajectories, int stride);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates values[i] for every i with a non-empty gradient.
  void Step(std::vector<Eigen::MatrixXd>& values, const ParamGrads& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

// Scales grads in place to global norm <= max_norm; returns the norm before.
double ClipGradients(ParamGrads& grads, double max_norm);

struct TrainStats {
  std::uint64_t iteration = 0;
  DiffusionLoss loss;
  double grad_norm = 0.0;
};

// Single optimizer stream over a fixed example set.
class Trainer {
 public:
  // Fits the normalizer and initializes weights when the policy is fresh.
  Trainer(DiffusionPolicy* policy, std::vector<TrainingExample> examples);

  TrainStats Step(std::mt19937_64& rng);
  // Moves the EMA weights toward the current weights; Step() calls this.
  void UpdateEma();
  // Mean loss over the examples at fixed (t, eps) draws from rng.
  DiffusionLoss Evaluate(std::mt19937_64& rng, int draws_per_example = 1) const;
  void set_lr(double lr) { adam_.set_lr(lr); }

 private:
  DiffusionPolicy* policy_;
  std::vector<Eigen::MatrixXd> q_;
  std::vector<Eigen::Vector3d> goals_;
  Adam adam_;
};

DiffusionPolicy InitPolicy(const TrainConfig& config, const std::vector<TrainingExample>& examples);

DiffusionPolicy train_policy(const std::vector<TrainingExample>& examples,
                             const TrainConfig& config,
                             const std::function<void(const TrainStats&)>& progress = {});

// Deterministic DDIM from the given normalized initial noise; returns the
// final normalized prediction.
Eigen::MatrixXd ddim_sample_normalized(const DenoiserParams& params, const NoiseSchedule& schedule,
                                       const Eigen::Vector3d& goal, int n_steps,
                                       const Eigen::MatrixXd& noise);

// Physical-unit sample (strided horizon) with EMA weights.
Eigen::MatrixXd ddim_sample(const DiffusionPolicy& policy, const Eigen::Vector3d& goal,
                            int n_steps, std::mt19937_64& rng);

Eigen::MatrixXd SampleNoise(int rows, int cols, std::mt19937_64& rng);

// Versioned binary checkpoint plus a text model card at path + ".card.txt".
void save_checkpoint(const DiffusionPolicy& policy, const std::string& path);
DiffusionPolicy load_checkpoint(const std::string& path);
std::string ModelCard(const DiffusionPolicy& policy);

}  // namespace gvswhip

#endif  // GVSWHIP_DIFFUSION_POLICY_H_
