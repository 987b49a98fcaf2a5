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

#include "gvswhip/diffusion_policy.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gvswhip/error.h"
#include "byte_io.h"

namespace gvswhip {

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'V', 'S', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Nudges sqrt(ab), sqrt(1 - ab) by a few ulps until their squares sum to
// exactly one.
std::pair<double, double> UnitPair(double ab) {
  const double a0 = std::sqrt(ab);
  const double s0 = std::sqrt(1.0 - ab);
  for (int da = 0; da <= 8; ++da) {
    for (int sign_a : {1, -1}) {
      double a = a0;
      for (int i = 0; i < da; ++i) a = std::nextafter(a, sign_a > 0 ? 2.0 : 0.0);
      double lo = s0, hi = s0;
      for (int ds = 0; ds <= 64; ++ds) {
        if (a * a + lo * lo == 1.0) return {a, lo};
        if (a * a + hi * hi == 1.0) return {a, hi};
        lo = std::nextafter(lo, 0.0);
        hi = std::nextafter(hi, 2.0);
      }
      if (da == 0) break;
    }
  }
  return {a0, s0};
}

Eigen::RowVectorXd Sinusoid(double position, int width) {
  Eigen::RowVectorXd e(width);
  for (int k = 0; k < width / 2; ++k) {
    const double freq = std::exp(-std::log(10000.0) * 2.0 * k / width);
    e(2 * k) = std::sin(position * freq);
    e(2 * k + 1) = std::cos(position * freq);
  }
  return e;
}

std::string BlockName(int block, const char* leaf) {
  return "block" + std::to_string(block) + "." + leaf;
}

void CheckFiniteLoss(const DiffusionLoss& loss, int t) {
  if (!std::isfinite(loss.total)) {
    throw Error(ErrorCode::kNonFiniteLoss, "diffusion loss at t=" + std::to_string(t) +
                                               " is not finite (q=" + std::to_string(loss.q) +
                                               ", qd=" + std::to_string(loss.qd) + ")");
  }
}

}  // namespace

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : steps_(steps), beta_start_(beta_start), beta_end_(beta_end) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "schedule needs >= 1 step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "betas must satisfy 0 < start <= end < 1");
  }
  if (steps == 1) {
    betas_ = Eigen::VectorXd::Constant(1, beta_start);
  } else {
    betas_ = Eigen::VectorXd::LinSpaced(steps, beta_start, beta_end);
  }
  alpha_bars_.resize(steps);
  alpha_.resize(steps);
  sigma_.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    prod *= 1.0 - betas_(t);
    alpha_bars_(t) = prod;
    const auto [a, s] = UnitPair(prod);
    alpha_(t) = a;
    sigma_(t) = s;
  }
}

double NoiseSchedule::alpha(int t) const {
  if (t < 0 || t >= steps_) {
    throw Error(ErrorCode::kOutOfDomain, "timestep " + std::to_string(t) + " outside [0, " +
                                             std::to_string(steps_) + ")");
  }
  return alpha_(t);
}

double NoiseSchedule::sigma(int t) const {
  if (t < 0 || t >= steps_) {
    throw Error(ErrorCode::kOutOfDomain, "timestep " + std::to_string(t) + " outside [0, " +
                                             std::to_string(steps_) + ")");
  }
  return sigma_(t);
}

std::vector<int> DdimTimesteps(int steps, int n_steps) {
  if (n_steps < 1 || n_steps > steps) {
    throw Error(ErrorCode::kInvalidArgument, "DDIM steps must lie in [1, " +
                                                 std::to_string(steps) + "], got " +
                                                 std::to_string(n_steps));
  }
  if (n_steps == 1) return {steps - 1};
  std::vector<int> ts(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    ts[n_steps - 1 - k] = static_cast<int>(
        std::lround(static_cast<double>(k) * (steps - 1) / (n_steps - 1)));
  }
  return ts;
}

Eigen::MatrixXd q_sample(const NoiseSchedule& schedule, const Eigen::MatrixXd& q0, int t,
                         const Eigen::MatrixXd& eps) {
  if (q0.rows() != eps.rows() || q0.cols() != eps.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "noise shape differs from the clean sequence");
  }
  return schedule.alpha(t) * q0 + schedule.sigma(t) * eps;
}

void DenoiserConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(features > 0, "features must be positive");
  require(horizon >= 1, "horizon must be positive");
  require(d_model > 0 && d_model % 2 == 0, "d_model must be positive and even");
  require(heads > 0 && d_model % heads == 0, "heads must divide d_model");
  require(blocks >= 0, "blocks must be >= 0");
  require(goal_tokens >= 1, "goal_tokens must be >= 1");
  require(ffn_mult >= 1, "ffn_mult must be >= 1");
}

void DenoiserParams::Add(std::string name, Eigen::MatrixXd value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

DenoiserParams DenoiserParams::Init(const DenoiserConfig& config, std::uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  DenoiserParams p;
  p.config_ = config;
  auto weight = [&](int rows, int cols, double gain = 1.0) {
    Eigen::MatrixXd w(rows, cols);
    const double std = gain / std::sqrt(static_cast<double>(rows));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std * normal(rng);
    return w;
  };
  auto zeros = [](int cols) { return Eigen::MatrixXd::Zero(1, cols); };
  auto ones = [](int cols) { return Eigen::MatrixXd::Ones(1, cols); };
  const int d = config.d_model;
  const int f = config.features;
  const int g = config.goal_tokens;
  const int h = config.ffn_mult * d;
  const double residual = 1.0 / std::sqrt(2.0 * std::max(config.blocks, 1));

  p.Add("in.weight", weight(f, d));
  p.Add("in.bias", zeros(d));
  p.Add("time.w1", weight(d, d));
  p.Add("time.b1", zeros(d));
  p.Add("time.w2", weight(d, d));
  p.Add("time.b2", zeros(d));
  p.Add("goal.w1", weight(3, d));
  p.Add("goal.b1", zeros(d));
  p.Add("goal.w2", weight(d, g * d));
  p.Add("goal.b2", zeros(g * d));
  for (int b = 0; b < config.blocks; ++b) {
    p.Add(BlockName(b, "ln1.gain"), ones(d));
    p.Add(BlockName(b, "ln1.bias"), zeros(d));
    p.Add(BlockName(b, "self.wq"), weight(d, d));
    p.Add(BlockName(b, "self.wk"), weight(d, d));
    p.Add(BlockName(b, "self.wv"), weight(d, d));
    p.Add(BlockName(b, "self.wo"), weight(d, d, residual));
    p.Add(BlockName(b, "ln2.gain"), ones(d));
    p.Add(BlockName(b, "ln2.bias"), zeros(d));
    p.Add(BlockName(b, "cross.wq"), weight(d, d));
    p.Add(BlockName(b, "cross.wk"), weight(d, d));
    p.Add(BlockName(b, "cross.wv"), weight(d, d));
    p.Add(BlockName(b, "cross.wo"), weight(d, d, residual));
    p.Add(BlockName(b, "ln3.gain"), ones(d));
    p.Add(BlockName(b, "ln3.bias"), zeros(d));
    p.Add(BlockName(b, "ffn.w1"), weight(d, h));
    p.Add(BlockName(b, "ffn.b1"), zeros(h));
    p.Add(BlockName(b, "ffn.w2"), weight(h, d, residual));
    p.Add(BlockName(b, "ffn.b2"), zeros(d));
  }
  p.Add("final.ln.gain", ones(d));
  p.Add("final.ln.bias", zeros(d));
  p.Add(std::string(kOutWeight), weight(d, f));
  p.Add(std::string(kOutBias), zeros(f));
  return p;
}

int DenoiserParams::index(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw Error(ErrorCode::kInvalidArgument, "no parameter block named '" + std::string(name) + "'");
}

std::vector<int> DenoiserParams::projection_indices() const {
  return {index(kOutWeight), index(kOutBias)};
}

Eigen::Index DenoiserParams::n_scalars() const {
  Eigen::Index n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool DenoiserParams::AllFinite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](const Eigen::MatrixXd& v) { return v.allFinite(); });
}

DenoiserPass::DenoiserPass(const DenoiserParams& params, const Eigen::MatrixXd& qt,
                           const Eigen::Vector3d& goal, int t, bool param_grads,
                           bool input_grad) {
  const DenoiserConfig& c = params.config();
  if (qt.cols() != c.features || qt.rows() < 1 || qt.rows() > c.horizon) {
    throw Error(ErrorCode::kShapeMismatch,
                "denoiser input is " + std::to_string(qt.rows()) + "x" +
                    std::to_string(qt.cols()) + ", expected up to " + std::to_string(c.horizon) +
                    "x" + std::to_string(c.features));
  }
  if (t < 0) throw Error(ErrorCode::kOutOfDomain, "negative diffusion timestep");
  const int n = static_cast<int>(qt.rows());
  const int d = c.d_model;

  param_vars_.reserve(params.size());
  for (int i = 0; i < params.size(); ++i) {
    param_vars_.push_back(tape_.Leaf(params.value(i), param_grads));
  }
  int next = 0;
  auto take = [&]() { return param_vars_[next++]; };

  input_ = tape_.Leaf(qt, input_grad);
  Eigen::MatrixXd pe(n, d);
  for (int i = 0; i < n; ++i) pe.row(i) = Sinusoid(i, d);

  const Tape::Var in_w = take(), in_b = take();
  Tape::Var x = tape_.Add(tape_.AddRow(tape_.MatMul(input_, in_w), in_b), tape_.Leaf(pe));

  const Tape::Var tw1 = take(), tb1 = take(), tw2 = take(), tb2 = take();
  const Tape::Var temb_in = tape_.Leaf(Sinusoid(t, d));
  const Tape::Var temb = tape_.AddRow(
      tape_.MatMul(tape_.Silu(tape_.AddRow(tape_.MatMul(temb_in, tw1), tb1)), tw2), tb2);

  const Tape::Var gw1 = take(), gb1 = take(), gw2 = take(), gb2 = take();
  const Tape::Var goal_in = tape_.Leaf(goal.transpose());
  const Tape::Var goal_flat = tape_.AddRow(
      tape_.MatMul(tape_.Silu(tape_.AddRow(tape_.MatMul(goal_in, gw1), gb1)), gw2), gb2);
  const Tape::Var goal_tokens = tape_.Reshape(goal_flat, c.goal_tokens, d);

  for (int b = 0; b < c.blocks; ++b) {
    x = tape_.AddRow(x, temb);
    const Tape::Var ln1g = take(), ln1b = take();
    const Tape::Var wq = take(), wk = take(), wv = take(), wo = take();
    Tape::Var h = tape_.LayerNorm(x, ln1g, ln1b);
    Tape::Var a = tape_.Attention(tape_.MatMul(h, wq), tape_.MatMul(h, wk), tape_.MatMul(h, wv),
                                  c.heads, /*causal=*/true);
    x = tape_.Add(x, tape_.MatMul(a, wo));

    const Tape::Var ln2g = take(), ln2b = take();
    const Tape::Var cq = take(), ck = take(), cv = take(), co = take();
    h = tape_.LayerNorm(x, ln2g, ln2b);
    a = tape_.Attention(tape_.MatMul(h, cq), tape_.MatMul(goal_tokens, ck),
                        tape_.MatMul(goal_tokens, cv), c.heads, /*causal=*/false);
    x = tape_.Add(x, tape_.MatMul(a, co));

    const Tape::Var ln3g = take(), ln3b = take();
    const Tape::Var fw1 = take(), fb1 = take(), fw2 = take(), fb2 = take();
    h = tape_.LayerNorm(x, ln3g, ln3b);
    const Tape::Var ff =
        tape_.AddRow(tape_.MatMul(tape_.Gelu(tape_.AddRow(tape_.MatMul(h, fw1), fb1)), fw2), fb2);
    x = tape_.Add(x, ff);
  }
  const Tape::Var fg = take(), fb = take();
  features_ = tape_.LayerNorm(x, fg, fb);
  const Tape::Var ow = take(), ob = take();
  output_ = tape_.AddRow(tape_.MatMul(features_, ow), ob);
  if (next != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter set does not match the denoiser layout");
  }
}

void DenoiserPass::Backward(const Eigen::MatrixXd& d_output, ParamGrads* param_grads,
                            Eigen::MatrixXd* input_grad) {
  tape_.Backward(output_, d_output);
  if (param_grads != nullptr) {
    if (param_grads->size() != param_vars_.size()) param_grads->resize(param_vars_.size());
    for (size_t i = 0; i < param_vars_.size(); ++i) {
      const Eigen::MatrixXd& g = tape_.grad(param_vars_[i]);
      if (g.size() == 0) continue;
      Eigen::MatrixXd& dst = (*param_grads)[i];
      if (dst.size() == 0) {
        dst = g;
      } else {
        dst += g;
      }
    }
  }
  if (input_grad != nullptr) {
    const Eigen::MatrixXd& g = tape_.grad(input_);
    if (g.size() == 0) {
      *input_grad = Eigen::MatrixXd::Zero(tape_.value(input_).rows(), tape_.value(input_).cols());
    } else {
      *input_grad = g;
    }
  }
}

Eigen::MatrixXd denoise(const DenoiserParams& params, const Eigen::MatrixXd& qt,
                        const Eigen::Vector3d& goal, int t) {
  return DenoiserPass(params, qt, goal, t, false, false).output();
}

DiffusionLoss x0_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                      const DiffusionLossWeights& weights, Eigen::MatrixXd* d_prediction) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "prediction and target shapes differ");
  }
  const Eigen::Index n = prediction.rows();
  const Eigen::Index f = prediction.cols();
  const Eigen::MatrixXd err = prediction - target;
  DiffusionLoss loss;
  loss.q = weights.lambda_q * err.squaredNorm() / static_cast<double>(n * f);
  if (d_prediction != nullptr) *d_prediction = (2.0 * weights.lambda_q / (n * f)) * err;
  if (weights.lambda_qd != 0.0 && n >= 3) {
    // Central differences of the error equal the difference of velocities.
    const Eigen::MatrixXd verr = (err.bottomRows(n - 2) - err.topRows(n - 2)) / (2.0 * weights.dt);
    const double denom = static_cast<double>((n - 2) * f);
    loss.qd = weights.lambda_qd * verr.squaredNorm() / denom;
    if (d_prediction != nullptr) {
      const Eigen::MatrixXd dv = (2.0 * weights.lambda_qd / denom / (2.0 * weights.dt)) * verr;
      d_prediction->bottomRows(n - 2) += dv;
      d_prediction->topRows(n - 2) -= dv;
    }
  }
  loss.total = loss.q + loss.qd;
  return loss;
}

DiffusionLoss diffusion_loss(const DenoiserParams& params, const NoiseSchedule& schedule,
                             const Eigen::MatrixXd& q0, const Eigen::Vector3d& goal, int t,
                             const Eigen::MatrixXd& eps, const DiffusionLossWeights& weights,
                             ParamGrads* grads, double scale) {
  const Eigen::MatrixXd qt = q_sample(schedule, q0, t, eps);
  DenoiserPass pass(params, qt, goal, t, grads != nullptr, false);
  Eigen::MatrixXd d_out;
  const DiffusionLoss loss = x0_loss(pass.output(), q0, weights, grads ? &d_out : nullptr);
  CheckFiniteLoss(loss, t);
  if (grads != nullptr) pass.Backward(scale * d_out, grads, nullptr);
  return loss;
}

Normalizer Normalizer::Identity(int features) {
  Normalizer n;
  n.q_mean = Eigen::RowVectorXd::Zero(features);
  n.q_std = Eigen::RowVectorXd::Ones(features);
  return n;
}

namespace {

template <typename Row>
void FloorStd(Row& std_row) {
  const double top = std_row.maxCoeff();
  if (!(top > 0.0)) {
    std_row.setOnes();
    return;
  }
  const double floor = 1e-3 * top;
  for (Eigen::Index i = 0; i < std_row.size(); ++i) std_row(i) = std::max(std_row(i), floor);
}

}  // namespace

Normalizer Normalizer::Fit(const std::vector<Eigen::MatrixXd>& sequences,
                           const std::vector<Eigen::Vector3d>& goals) {
  if (sequences.empty()) throw Error(ErrorCode::kInvalidArgument, "no sequences to normalize");
  const Eigen::Index f = sequences.front().cols();
  Normalizer n;
  n.q_mean = Eigen::RowVectorXd::Zero(f);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(f);
  double count = 0.0;
  for (const auto& s : sequences) {
    if (s.cols() != f) throw Error(ErrorCode::kShapeMismatch, "sequences differ in width");
    n.q_mean += s.colwise().sum();
    count += static_cast<double>(s.rows());
  }
  n.q_mean /= count;
  for (const auto& s : sequences) sq += (s.rowwise() - n.q_mean).array().square().matrix().colwise().sum();
  n.q_std = (sq / count).array().sqrt();
  FloorStd(n.q_std);

  if (!goals.empty()) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (const auto& g : goals) mean += g.transpose();
    mean /= static_cast<double>(goals.size());
    Eigen::RowVector3d var = Eigen::RowVector3d::Zero();
    for (const auto& g : goals) var += (g.transpose() - mean).array().square().matrix();
    n.goal_mean = mean;
    n.goal_std = (var / static_cast<double>(goals.size())).array().sqrt();
    FloorStd(n.goal_std);
  }
  return n;
}

Eigen::MatrixXd Normalizer::Normalize(const Eigen::MatrixXd& q) const {
  return (q.rowwise() - q_mean).array().rowwise() / q_std.array();
}

Eigen::MatrixXd Normalizer::Denormalize(const Eigen::MatrixXd& qn) const {
  Eigen::MatrixXd q = qn.array().rowwise() * q_std.array();
  q.rowwise() += q_mean;
  return q;
}

Eigen::Vector3d Normalizer::NormalizeGoal(const Eigen::Vector3d& goal) const {
  return ((goal.transpose() - goal_mean).array() / goal_std.array()).transpose();
}

void TrainConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(lr > 0.0, "lr must be positive");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must lie in [0, 1)");
  require(batch >= 1, "batch must be >= 1");
  require(iterations >= 0, "iterations must be >= 0");
  require(lambda_q >= 0.0 && lambda_qd >= 0.0, "loss weights must be >= 0");
  require(stride >= 1, "stride must be >= 1");
  require(steps >= 1, "diffusion steps must be >= 1");
  require(clip_norm >= 0.0, "clip_norm must be >= 0");
  net.Validate();
  require(net.horizon >= 3, "horizon must be >= 3 rows");
}

Eigen::MatrixXd StrideSequence(const Eigen::MatrixXd& Q, int stride) {
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  const Eigen::Index n = (Q.rows() + stride - 1) / stride;
  Eigen::MatrixXd out(n, Q.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = Q.row(i * stride);
  return out;
}

Eigen::MatrixXd UpsampleSequence(const Eigen::MatrixXd& Q, int stride, int length) {
  if (stride < 1 || Q.rows() < 1) throw Error(ErrorCode::kInvalidArgument, "bad upsampling input");
  Eigen::MatrixXd out(length, Q.cols());
  const Eigen::Index last = Q.rows() - 1;
  for (int r = 0; r < length; ++r) {
    const Eigen::Index i = r / stride;
    if (i >= last) {
      out.row(r) = Q.row(last);
      continue;
    }
    const double frac = static_cast<double>(r - i * stride) / stride;
    out.row(r) = (1.0 - frac) * Q.row(i) + frac * Q.row(i + 1);
  }
  return out;
}

std::vector<TrainingExample> MakeExamples(const std::vector<Trajectory>& trajectories, int stride) {
  std::vector<TrainingExample> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    if (!t.valid) continue;
    out.push_back({StrideSequence(t.Q, stride), t.goal});
  }
  return out;
}

void Adam::Step(std::vector<Eigen::MatrixXd>& values, const ParamGrads& grads) {
  if (m_.size() != values.size()) {
    m_.assign(values.size(), Eigen::MatrixXd());
    v_.assign(values.size(), Eigen::MatrixXd());
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < values.size() && i < grads.size(); ++i) {
    const Eigen::MatrixXd& g = grads[i];
    if (g.size() == 0) continue;
    if (m_[i].size() == 0) {
      m_[i] = Eigen::MatrixXd::Zero(g.rows(), g.cols());
      v_[i] = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    }
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
    values[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double ClipGradients(ParamGrads& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

DiffusionPolicy InitPolicy(const TrainConfig& config, const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw Error(ErrorCode::kInvalidArgument, "no training examples");
  DiffusionPolicy policy;
  policy.config = config;
  policy.config.net.features = static_cast<int>(examples.front().q.cols());
  policy.config.net.horizon = static_cast<int>(examples.front().q.rows());
  policy.config.Validate();
  for (const auto& e : examples) {
    if (e.q.rows() != policy.config.net.horizon || e.q.cols() != policy.config.net.features) {
      throw Error(ErrorCode::kShapeMismatch, "training examples differ in shape");
    }
  }
  policy.schedule = NoiseSchedule(config.steps);
  policy.params = DenoiserParams::Init(policy.config.net, config.seed);
  policy.ema = policy.params;
  std::vector<Eigen::MatrixXd> seqs;
  std::vector<Eigen::Vector3d> goals;
  for (const auto& e : examples) {
    seqs.push_back(e.q);
    goals.push_back(e.goal);
  }
  policy.normalizer = Normalizer::Fit(seqs, goals);
  return policy;
}

Trainer::Trainer(DiffusionPolicy* policy, std::vector<TrainingExample> examples)
    : policy_(policy), adam_(policy->config.lr) {
  if (policy_->params.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "policy has no parameters; call InitPolicy first");
  }
  if (examples.empty()) throw Error(ErrorCode::kInvalidArgument, "no training examples");
  for (auto& e : examples) {
    q_.push_back(policy_->normalizer.Normalize(e.q));
    goals_.push_back(policy_->normalizer.NormalizeGoal(e.goal));
  }
}

TrainStats Trainer::Step(std::mt19937_64& rng) {
  const DiffusionLossWeights weights = policy_->loss_weights();
  const int batch = policy_->config.batch;
  std::uniform_int_distribution<size_t> pick(0, q_.size() - 1);
  std::uniform_int_distribution<int> step(0, policy_->schedule.steps() - 1);
  ParamGrads grads;
  TrainStats stats;
  for (int b = 0; b < batch; ++b) {
    const size_t i = pick(rng);
    const int t = step(rng);
    const Eigen::MatrixXd eps = SampleNoise(static_cast<int>(q_[i].rows()),
                                            static_cast<int>(q_[i].cols()), rng);
    const DiffusionLoss l = diffusion_loss(policy_->params, policy_->schedule, q_[i], goals_[i], t,
                                           eps, weights, &grads, 1.0 / batch);
    stats.loss.q += l.q / batch;
    stats.loss.qd += l.qd / batch;
    stats.loss.total += l.total / batch;
  }
  stats.grad_norm = ClipGradients(grads, policy_->config.clip_norm);
  adam_.Step(policy_->params.values(), grads);
  if (!policy_->params.AllFinite()) {
    throw Error(ErrorCode::kNonFiniteLoss, "weights became non-finite at iteration " +
                                               std::to_string(policy_->iterations_done));
  }
  UpdateEma();
  stats.iteration = ++policy_->iterations_done;
  return stats;
}

void Trainer::UpdateEma() {
  // Warm-up keeps early averages from being dominated by the initialization.
  const double k = static_cast<double>(policy_->iterations_done);
  const double decay = std::min(policy_->config.ema_decay, (1.0 + k) / (10.0 + k));
  for (int p = 0; p < policy_->params.size(); ++p) {
    policy_->ema.value(p) = decay * policy_->ema.value(p) + (1.0 - decay) * policy_->params.value(p);
  }
}

DiffusionLoss Trainer::Evaluate(std::mt19937_64& rng, int draws_per_example) const {
  const DiffusionLossWeights weights = policy_->loss_weights();
  std::uniform_int_distribution<int> step(0, policy_->schedule.steps() - 1);
  DiffusionLoss mean;
  const double n = static_cast<double>(q_.size() * draws_per_example);
  for (size_t i = 0; i < q_.size(); ++i) {
    for (int k = 0; k < draws_per_example; ++k) {
      const int t = step(rng);
      const Eigen::MatrixXd eps = SampleNoise(static_cast<int>(q_[i].rows()),
                                              static_cast<int>(q_[i].cols()), rng);
      const DiffusionLoss l =
          diffusion_loss(policy_->params, policy_->schedule, q_[i], goals_[i], t, eps, weights);
      mean.q += l.q / n;
      mean.qd += l.qd / n;
      mean.total += l.total / n;
    }
  }
  return mean;
}

DiffusionPolicy train_policy(const std::vector<TrainingExample>& examples,
                             const TrainConfig& config,
                             const std::function<void(const TrainStats&)>& progress) {
  DiffusionPolicy policy = InitPolicy(config, examples);
  Trainer trainer(&policy, examples);
  std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ull);
  for (int i = 0; i < config.iterations; ++i) {
    const TrainStats s = trainer.Step(rng);
    if (progress) progress(s);
  }
  return policy;
}

Eigen::MatrixXd SampleNoise(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Eigen::MatrixXd ddim_sample_normalized(const DenoiserParams& params, const NoiseSchedule& schedule,
                                       const Eigen::Vector3d& goal, int n_steps,
                                       const Eigen::MatrixXd& noise) {
  const std::vector<int> ts = DdimTimesteps(schedule.steps(), n_steps);
  Eigen::MatrixXd qt = noise;
  for (size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const Eigen::MatrixXd x0 = denoise(params, qt, goal, t);
    if (i + 1 == ts.size()) return x0;
    const Eigen::MatrixXd eps = (qt - schedule.alpha(t) * x0) / schedule.sigma(t);
    const int next = ts[i + 1];
    qt = schedule.alpha(next) * x0 + schedule.sigma(next) * eps;
  }
  return qt;
}

Eigen::MatrixXd ddim_sample(const DiffusionPolicy& policy, const Eigen::Vector3d& goal,
                            int n_steps, std::mt19937_64& rng) {
  const DenoiserConfig& c = policy.ema.config();
  const Eigen::MatrixXd noise = SampleNoise(c.horizon, c.features, rng);
  return policy.normalizer.Denormalize(ddim_sample_normalized(
      policy.ema, policy.schedule, policy.normalizer.NormalizeGoal(goal), n_steps, noise));
}

namespace {

void WriteParams(Writer& w, const DenoiserParams& p) {
  w.u32(static_cast<std::uint32_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(p.name(i).size()));
    w.bytes(p.name(i).data(), p.name(i).size());
    w.u32(static_cast<std::uint32_t>(p.value(i).rows()));
    w.u32(static_cast<std::uint32_t>(p.value(i).cols()));
    w.matrix(p.value(i));
  }
}

DenoiserParams ReadParams(Reader& r, const DenoiserConfig& config) {
  DenoiserParams p;
  p.set_config(config);
  const std::uint32_t n = r.u32("block count");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = r.u32("block name length");
    std::string name = r.raw(len, "block name");
    const std::uint32_t rows = r.u32("block rows");
    const std::uint32_t cols = r.u32("block cols");
    p.Add(std::move(name), r.matrix(rows, cols, "block values"));
  }
  const DenoiserParams layout = DenoiserParams::Init(config, 0);
  if (layout.size() != p.size()) {
    throw Error(ErrorCode::kFormatError, "checkpoint has " + std::to_string(p.size()) +
                                             " parameter blocks, layout needs " +
                                             std::to_string(layout.size()));
  }
  for (int i = 0; i < p.size(); ++i) {
    if (layout.name(i) != p.name(i) || layout.value(i).rows() != p.value(i).rows() ||
        layout.value(i).cols() != p.value(i).cols()) {
      throw Error(ErrorCode::kFormatError, "parameter block '" + p.name(i) +
                                               "' does not match the configured layout");
    }
  }
  return p;
}

}  // namespace

void save_checkpoint(const DiffusionPolicy& policy, const std::string& path) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(policy.schedule.steps()));
  w.f64(policy.schedule.beta_start());
  w.f64(policy.schedule.beta_end());
  const DenoiserConfig& n = policy.config.net;
  for (int v : {n.features, n.horizon, n.d_model, n.blocks, n.heads, n.goal_tokens, n.ffn_mult}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  const TrainConfig& c = policy.config;
  w.f64(c.lr);
  w.f64(c.ema_decay);
  w.u32(static_cast<std::uint32_t>(c.batch));
  w.u32(static_cast<std::uint32_t>(c.iterations));
  w.f64(c.lambda_q);
  w.f64(c.lambda_qd);
  w.u32(static_cast<std::uint32_t>(c.stride));
  w.f64(c.clip_norm);
  w.u64(c.seed);
  w.u64(policy.iterations_done);
  w.u32(static_cast<std::uint32_t>(policy.normalizer.q_mean.size()));
  w.matrix(policy.normalizer.q_mean);
  w.matrix(policy.normalizer.q_std);
  w.matrix(policy.normalizer.goal_mean);
  w.matrix(policy.normalizer.goal_std);
  WriteParams(w, policy.params);
  WriteParams(w, policy.ema);
  const std::string bytes = w.take();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIoError, "write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot move checkpoint into '" + path + "'");
  std::ofstream card(path + ".card.txt", std::ios::trunc);
  if (!card) throw Error(ErrorCode::kIoError, "cannot write model card for '" + path + "'");
  card << ModelCard(policy);
}

DiffusionPolicy load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(bytes);
  const std::string magic = r.raw(4, "magic");
  if (magic != std::string(kCheckpointMagic, 4)) {
    throw Error(ErrorCode::kFormatError, "'" + path + "' is not a policy checkpoint");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported checkpoint version " + std::to_string(version));
  }
  DiffusionPolicy policy;
  const int steps = static_cast<int>(r.u32("steps"));
  const double b0 = r.f64("beta_start");
  const double b1 = r.f64("beta_end");
  policy.schedule = NoiseSchedule(steps, b0, b1);
  TrainConfig& c = policy.config;
  c.steps = steps;
  DenoiserConfig& n = c.net;
  for (int* v : {&n.features, &n.horizon, &n.d_model, &n.blocks, &n.heads, &n.goal_tokens,
                 &n.ffn_mult}) {
    *v = static_cast<int>(r.u32("network size"));
  }
  n.Validate();
  c.lr = r.f64("lr");
  c.ema_decay = r.f64("ema_decay");
  c.batch = static_cast<int>(r.u32("batch"));
  c.iterations = static_cast<int>(r.u32("iterations"));
  c.lambda_q = r.f64("lambda_q");
  c.lambda_qd = r.f64("lambda_qd");
  c.stride = static_cast<int>(r.u32("stride"));
  c.clip_norm = r.f64("clip_norm");
  c.seed = r.u64("seed");
  policy.iterations_done = r.u64("iterations_done");
  const std::uint32_t f = r.u32("feature count");
  if (static_cast<int>(f) != n.features) {
    throw Error(ErrorCode::kFormatError, "normalizer width differs from the network");
  }
  policy.normalizer.q_mean = r.matrix(1, f, "q_mean");
  policy.normalizer.q_std = r.matrix(1, f, "q_std");
  policy.normalizer.goal_mean = r.matrix(1, 3, "goal_mean");
  policy.normalizer.goal_std = r.matrix(1, 3, "goal_std");
  policy.params = ReadParams(r, n);
  policy.ema = ReadParams(r, n);
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kFormatError, std::to_string(r.remaining()) +
                                             " unexpected trailing bytes in checkpoint");
  }
  return policy;
}

std::string ModelCard(const DiffusionPolicy& policy) {
  const TrainConfig& c = policy.config;
  std::ostringstream os;
  os << "model: x0-predicting conditional diffusion policy\n"
     << "features: " << c.net.features << "\n"
     << "horizon_tokens: " << c.net.horizon << "\n"
     << "temporal_stride: " << c.stride << "\n"
     << "token_dt_s: " << policy.token_dt() << "\n"
     << "d_model: " << c.net.d_model << "\n"
     << "blocks: " << c.net.blocks << "\n"
     << "heads: " << c.net.heads << "\n"
     << "goal_tokens: " << c.net.goal_tokens << "\n"
     << "ffn_mult: " << c.net.ffn_mult << "\n"
     << "parameters: " << policy.params.n_scalars() << "\n"
     << "diffusion_steps: " << policy.schedule.steps() << "\n"
     << "beta_start: " << policy.schedule.beta_start() << "\n"
     << "beta_end: " << policy.schedule.beta_end() << "\n"
     << "lr: " << c.lr << "\n"
     << "ema_decay: " << c.ema_decay << "\n"
     << "batch: " << c.batch << "\n"
     << "lambda_q: " << c.lambda_q << "\n"
     << "lambda_qd: " << c.lambda_qd << "\n"
     << "seed: " << c.seed << "\n"
     << "iterations_done: " << policy.iterations_done << "\n";
  return os.str();
}

}  // namespace gvswhip
