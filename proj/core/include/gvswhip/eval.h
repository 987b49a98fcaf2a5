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

#ifndef GVSWHIP_EVAL_H_
#define GVSWHIP_EVAL_H_

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gvswhip/diffusion_policy.h"
#include "gvswhip/pita.h"
#include "gvswhip/rod_model.h"

namespace gvswhip {

inline const std::vector<double> kSuccessThresholds = {0.10, 0.05, 0.02, 0.01};

// Fraction of distances <= each threshold. Throws kEmptyEval on empty input.
std::vector<double> success_rates(const std::vector<double>& distances,
                                  const std::vector<double>& thresholds = kSuccessThresholds);

struct EvalCase {
  int index = 0;
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();
  double distance = 0.0;  // NaN when the case failed
  int strike_index = -1;
  std::string mode;
  double seconds = 0.0;  // sampling wall time
  std::string error;     // empty on success
};

// CSV schema version written in the first line of every report.
inline constexpr int kReportCsvVersion = 1;

struct EvalReport {
  int n_cases = 0;
  int n_failed = 0;
  double mean_distance = 0.0;  // over successful cases
  double mean_seconds = 0.0;
  std::vector<double> thresholds = kSuccessThresholds;
  std::vector<double> rates;  // failed cases count as misses
  std::vector<EvalCase> cases;

  // Aggregates the per-case rows. Throws kEmptyEval when there are none.
  static EvalReport FromCases(std::vector<EvalCase> cases,
                              const std::vector<double>& thresholds = kSuccessThresholds);
  // Columns: index,goal_x,goal_y,goal_z,distance,strike_index,mode,seconds,error
  std::string ToCsv() const;
  static EvalReport FromCsv(const std::string& text);  // throws kFormatError
  std::string ToText() const;
};

// Produces a strided physical-unit sequence for one case.
using CaseSampler =
    std::function<Eigen::MatrixXd(int index, const Eigen::Vector3d& goal, double* seconds)>;

// Samples, rolls out and scores each goal. Per-case errors are recorded in
// the report. Cases run on up to `threads` workers; results do not depend on
// the thread count.
EvalReport evaluate_cases(const RodModel& model, const std::vector<Eigen::Vector3d>& goals,
                          const std::string& mode, const CaseSampler& sampler, int threads = 1,
                          int stride = 10);

// Case i draws its initial noise from (seed, i), so reports for different
// modes with one seed share noise.
EvalReport evaluate_policy(const RodModel& model, const DiffusionPolicy& policy,
                           const std::vector<Eigen::Vector3d>& goals, const AdaptConfig& config,
                           std::uint64_t seed, int threads = 1);

Eigen::MatrixXd CaseNoise(const DiffusionPolicy& policy, std::uint64_t seed, int index);

enum class LearningStrategy { kIL, kTO, kILTO };

std::string_view LearningStrategyName(LearningStrategy strategy);
// Accepts IL, TO, IL_TO.
LearningStrategy ParseLearningStrategy(std::string_view name);

struct TrajOptConfig {
  int iterations = 200;
  double lr = 1e-4;
  int batch = 4;
  int ddim_steps = 20;
  double clip_norm = 1.0;
  bool use_pos = true;
  bool use_kbc = true;
  KbcWeights kbc;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct TrajOptStats {
  int iteration = 0;
  double loss = 0.0;  // batch mean of the physical loss before the update
  double grad_norm = 0.0;
};

// Minimizes the physical loss of sampled outputs over goals. Gradients flow
// through the final denoising step into all weights; the sampling weights are
// optimized directly.
void trajectory_optimize(const RodModel& model, DiffusionPolicy* policy,
                         const std::vector<Eigen::Vector3d>& goals, const TrajOptConfig& config,
                         const std::function<void(const TrajOptStats&)>& progress = {});

struct StrategyConfig {
  LearningStrategy strategy = LearningStrategy::kILTO;
  TrainConfig il;
  TrajOptConfig to;
  // IL_TO runs the optimization phase at to.lr * il_to_lr_scale.
  double il_to_lr_scale = 0.1;
  std::function<void(const TrainStats&)> il_progress;
  std::function<void(const TrajOptStats&)> to_progress;
};

// IL trains on the examples, TO starts from fresh weights and only uses
// the example goals (and data statistics for normalization), IL_TO chains them.
DiffusionPolicy finetune_to(const RodModel& model, const std::vector<TrainingExample>& examples,
                            const StrategyConfig& config);

// Per-step guidance diagnostics as CSV:
// step,t,guided,fallback,loss_pos_before,loss_kbc_before,loss_pos,loss_kbc,seconds
std::string GuidanceCsv(const GuidedSample& sample);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
};

// Comma-separated values; lines starting with '#' are skipped.
CsvTable ParseCsv(const std::string& text);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string LineChartSvg(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series,
                         bool log_y = false);
// Bins the y values of every series over a shared range.
std::string HistogramSvg(const std::string& title, const std::string& x_label,
                         const std::vector<Series>& samples, int bins = 20);

}  // namespace gvswhip

#endif  // GVSWHIP_EVAL_H_
