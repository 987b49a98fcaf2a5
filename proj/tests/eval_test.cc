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

#include "gvswhip/eval.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gvswhip/dataset.h"
#include "gvswhip/error.h"

namespace gvswhip {
namespace {

void ExpectCode(const std::function<void()>& f, ErrorCode code) {
  try {
    f();
    ADD_FAILURE() << "no exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

struct Toy {
  RodModel model;
  std::vector<Trajectory> trajectories;
  std::vector<Eigen::Vector3d> goals;
};

const Toy& Data() {
  static const Toy* toy = [] {
    auto* t = new Toy;
    for (std::uint64_t i = 0; i < 3; ++i) {
      Trajectory traj = simulate(t->model, ControlForIndex(31, i));
      traj.goal = label_goal(traj);
      t->goals.push_back(traj.goal);
      t->trajectories.push_back(std::move(traj));
    }
    return t;
  }();
  return *toy;
}

TrainConfig TinyConfig() {
  TrainConfig cfg;
  cfg.net.d_model = 16;
  cfg.net.blocks = 1;
  cfg.net.heads = 2;
  cfg.net.goal_tokens = 2;
  cfg.net.ffn_mult = 2;
  cfg.lr = 3e-3;
  cfg.batch = 4;
  cfg.iterations = 60;
  cfg.ema_decay = 0.99;
  return cfg;
}

TEST(SuccessRatesTest, HandCounts) {
  EXPECT_EQ(success_rates({0.03}), (std::vector<double>{1, 1, 0, 0}));
  const std::vector<double> r = success_rates({0.005, 0.04, 0.5});
  ASSERT_EQ(r.size(), 4u);
  EXPECT_DOUBLE_EQ(r[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r[2], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r[3], 1.0 / 3.0);
  EXPECT_EQ(success_rates({0.05, 0.02}), (std::vector<double>{1, 1, 0.5, 0}));
  ExpectCode([] { success_rates({}); }, ErrorCode::kEmptyEval);
  ExpectCode([] { success_rates({-0.1}); }, ErrorCode::kInvalidArgument);
}

TEST(SuccessRatesTest, MonotoneInThreshold) {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> dist(20.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(1 + trial);
    for (double& v : d) v = dist(rng);
    const std::vector<double> r = success_rates(d);
    for (size_t i = 0; i < r.size(); ++i) {
      EXPECT_GE(r[i], 0.0);
      EXPECT_LE(r[i], 1.0);
      if (i > 0) EXPECT_LE(r[i], r[i - 1]);
    }
  }
}

EvalReport MixedReport() {
  std::vector<EvalCase> cases(3);
  cases[0] = {0, {0.1, -0.2, 0.3}, 0.004, 12, "none", 0.25, ""};
  cases[1] = {1, {1.0 / 3.0, 0.0, 1e-17}, 0.07, 40, "none", 0.5, ""};
  cases[2] = {2, {0.0, 0.0, 0.0}, std::nan(""), -1, "none", 0.0, "simulation diverged, t=0.3\nx"};
  return EvalReport::FromCases(cases);
}

TEST(EvalReportTest, AggregatesAndCountsFailuresAsMisses) {
  const EvalReport r = MixedReport();
  EXPECT_EQ(r.n_cases, 3);
  EXPECT_EQ(r.n_failed, 1);
  EXPECT_DOUBLE_EQ(r.mean_distance, (0.004 + 0.07) / 2);
  EXPECT_DOUBLE_EQ(r.rates[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.rates[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.rates[3], 1.0 / 3.0);
  const std::string text = r.ToText();
  EXPECT_NE(text.find("cases: 3"), std::string::npos);
  EXPECT_NE(text.find("success_at_0.05m: 0.333"), std::string::npos);
  ExpectCode([] { EvalReport::FromCases({}); }, ErrorCode::kEmptyEval);
}

TEST(EvalReportTest, CsvRoundTrip) {
  const EvalReport r = MixedReport();
  const EvalReport back = EvalReport::FromCsv(r.ToCsv());
  ASSERT_EQ(back.cases.size(), r.cases.size());
  for (size_t i = 0; i < r.cases.size(); ++i) {
    const EvalCase& a = r.cases[i];
    const EvalCase& b = back.cases[i];
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.goal, b.goal);
    EXPECT_TRUE(a.distance == b.distance || (std::isnan(a.distance) && std::isnan(b.distance)));
    EXPECT_EQ(a.strike_index, b.strike_index);
    EXPECT_EQ(a.mode, b.mode);
    EXPECT_EQ(a.seconds, b.seconds);
  }
  EXPECT_EQ(back.cases[2].error, "simulation diverged; t=0.3 x");
  EXPECT_EQ(back.rates, r.rates);
  EXPECT_EQ(back.ToCsv(), EvalReport::FromCsv(back.ToCsv()).ToCsv());

  ExpectCode([] { EvalReport::FromCsv("index,distance\n0,1\n"); }, ErrorCode::kFormatError);
  ExpectCode([] { EvalReport::FromCsv("# gvswhip eval report v9\nindex\n"); },
             ErrorCode::kFormatError);
  std::string bad = r.ToCsv();
  bad.replace(bad.find("0.004"), 5, "abc");
  ExpectCode([&] { EvalReport::FromCsv(bad); }, ErrorCode::kFormatError);
}

TEST(EvaluateTest, OracleReplayHitsGoals) {
  const Toy& toy = Data();
  const CaseSampler oracle = [&](int index, const Eigen::Vector3d&, double* seconds) {
    *seconds = 0.0;
    return StrideSequence(toy.trajectories[index].Q, 10);
  };
  const EvalReport one = evaluate_cases(toy.model, toy.goals, "oracle", oracle, 1);
  EXPECT_EQ(one.n_failed, 0);
  EXPECT_LT(one.mean_distance, 0.01);
  const EvalReport two = evaluate_cases(toy.model, toy.goals, "oracle", oracle, 2);
  EXPECT_EQ(one.ToCsv(), two.ToCsv());
  ExpectCode([&] { evaluate_cases(toy.model, {}, "oracle", oracle); }, ErrorCode::kEmptyEval);
}

TEST(EvaluateTest, CaseErrorsAreRecorded) {
  const Toy& toy = Data();
  const CaseSampler sampler = [&](int index, const Eigen::Vector3d&, double*) -> Eigen::MatrixXd {
    if (index == 1) throw Error(ErrorCode::kShapeMismatch, "bad sample");
    return Eigen::MatrixXd::Zero(51, 20);
  };
  const EvalReport r = evaluate_cases(toy.model, toy.goals, "stub", sampler);
  EXPECT_EQ(r.n_failed, 1);
  EXPECT_NE(r.cases[1].error.find("bad sample"), std::string::npos);
  EXPECT_TRUE(std::isnan(r.cases[1].distance));
  EXPECT_TRUE(std::isfinite(r.mean_distance));
}

TEST(EvaluateTest, RandomPolicyNearRestingBaselineAndDeterministic) {
  const Toy& toy = Data();
  TrainConfig cfg = TinyConfig();
  const DiffusionPolicy policy = InitPolicy(cfg, MakeExamples(toy.trajectories, 10));
  AdaptConfig none;
  none.mode = AdaptMode::kNone;
  const EvalReport a = evaluate_policy(toy.model, policy, toy.goals, none, 9);
  const EvalReport b = evaluate_policy(toy.model, policy, toy.goals, none, 9);
  ASSERT_EQ(a.n_failed, 0);
  for (size_t i = 0; i < a.cases.size(); ++i) {
    EXPECT_EQ(a.cases[i].distance, b.cases[i].distance);
    EXPECT_EQ(a.cases[i].strike_index, b.cases[i].strike_index);
  }
  const Trajectory rest = simulate(toy.model, ControlInput{});
  double baseline = 0.0;
  for (const auto& g : toy.goals) baseline += ScoreTrajectory(rest, g).distance / toy.goals.size();
  EXPECT_GT(a.mean_distance, 0.2 * baseline);
  EXPECT_LT(a.mean_distance, 5.0 * baseline);
  EXPECT_EQ(a.cases[0].mode, "none");
  AdaptConfig nokbc;
  nokbc.use_kbc = false;
  nokbc.inner_steps = 0;
  EXPECT_EQ(evaluate_policy(toy.model, policy, {toy.goals[0]}, nokbc, 9).cases[0].mode,
            "proj_finetune+no_kbc");
}

TEST(StrategyTest, Names) {
  for (auto s : {LearningStrategy::kIL, LearningStrategy::kTO, LearningStrategy::kILTO}) {
    EXPECT_EQ(ParseLearningStrategy(LearningStrategyName(s)), s);
  }
  ExpectCode([] { ParseLearningStrategy("RL"); }, ErrorCode::kInvalidArgument);
  TrajOptConfig bad;
  bad.use_pos = bad.use_kbc = false;
  ExpectCode([&] { bad.Validate(); }, ErrorCode::kInvalidArgument);
}

TEST(StrategyTest, TrajectoryOptimizationLowersPhysicalLoss) {
  const Toy& toy = Data();
  DiffusionPolicy policy = InitPolicy(TinyConfig(), MakeExamples(toy.trajectories, 10));
  TrajOptConfig to;
  to.iterations = 40;
  to.lr = 3e-3;
  to.batch = 2;
  to.ddim_steps = 4;
  std::vector<double> losses;
  trajectory_optimize(toy.model, &policy, toy.goals, to,
                      [&](const TrajOptStats& s) { losses.push_back(s.loss); });
  ASSERT_EQ(losses.size(), 40u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 5; ++i) {
    first += losses[i];
    last += losses[35 + i];
  }
  EXPECT_LT(last, 0.5 * first);
  for (int i = 0; i < policy.ema.size(); ++i) EXPECT_EQ(policy.ema.value(i), policy.params.value(i));
}

TEST(StrategyTest, FinetuneDispatch) {
  const Toy& toy = Data();
  const std::vector<TrainingExample> examples = MakeExamples(toy.trajectories, 10);
  StrategyConfig cfg;
  cfg.il = TinyConfig();
  cfg.il.iterations = 5;
  cfg.to.iterations = 3;
  cfg.to.batch = 1;
  cfg.to.ddim_steps = 2;
  cfg.strategy = LearningStrategy::kIL;
  const DiffusionPolicy il = finetune_to(toy.model, examples, cfg);
  EXPECT_EQ(il.iterations_done, 5u);
  cfg.strategy = LearningStrategy::kTO;
  EXPECT_EQ(finetune_to(toy.model, examples, cfg).iterations_done, 3u);
  cfg.strategy = LearningStrategy::kILTO;
  const DiffusionPolicy ilto = finetune_to(toy.model, examples, cfg);
  EXPECT_EQ(ilto.iterations_done, 8u);
  EXPECT_NE(ilto.ema.value(0), il.ema.value(0));
}

TEST(PlotTest, SvgAndCsv) {
  GuidedSample g;
  for (int i = 0; i < 4; ++i) {
    GuidanceStep s;
    s.step = i;
    s.t = 400 - 100 * i;
    s.guided = i > 1;
    s.loss_pos = 0.1 / (i + 1);
    g.steps.push_back(s);
  }
  const CsvTable table = ParseCsv(GuidanceCsv(g));
  EXPECT_EQ(table.rows.size(), 4u);
  ASSERT_GE(table.column("loss_pos"), 0);
  EXPECT_EQ(table.column("missing"), -1);
  EXPECT_DOUBLE_EQ(std::stod(table.rows[3][table.column("loss_pos")]), 0.025);
  ExpectCode([] { ParseCsv("a,b\n1\n"); }, ErrorCode::kFormatError);
  ExpectCode([] { ParseCsv("# only a comment\n"); }, ErrorCode::kFormatError);

  const std::string line =
      LineChartSvg("loss <per> step", "step", "loss", {{"pos", {0, 1, 2}, {1.0, 0.5, 0.0}}}, true);
  EXPECT_NE(line.find("<polyline"), std::string::npos);
  EXPECT_NE(line.find("loss &lt;per&gt; step"), std::string::npos);
  EXPECT_EQ(line.rfind("</svg>\n"), line.size() - 7);
  EXPECT_NE(LineChartSvg("empty", "x", "y", {}).find("</svg>"), std::string::npos);
  const std::string hist = HistogramSvg("d", "m", {{"a", {}, {0.1, 0.2, 0.2}}, {"b", {}, {0.3}}}, 4);
  EXPECT_NE(hist.find("<rect x="), std::string::npos);
  ExpectCode([] { HistogramSvg("d", "m", {}, 0); }, ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace gvswhip
