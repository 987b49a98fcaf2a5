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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "gvswhip/error.h"

namespace gvswhip {
namespace {

DenoiserConfig TinyNet(int blocks = 1) {
  DenoiserConfig c;
  c.features = 5;
  c.horizon = 7;
  c.d_model = 8;
  c.blocks = blocks;
  c.heads = 2;
  c.goal_tokens = 2;
  c.ffn_mult = 2;
  return c;
}

Eigen::MatrixXd Random(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  return scale * SampleNoise(rows, cols, rng);
}

// Smooth toy sequences whose shape is a deterministic function of the goal.
std::vector<TrainingExample> ToyExamples(int n, int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<TrainingExample> out;
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector3d goal(u(rng), u(rng), u(rng));
    Eigen::MatrixXd q(rows, cols);
    for (int i = 0; i < rows; ++i) {
      const double s = static_cast<double>(i) / (rows - 1);
      for (int j = 0; j < cols; ++j) {
        q(i, j) = s * s * (goal(j % 3) * std::sin(2.0 * s + j) + 0.3 * goal((j + 1) % 3) * s);
      }
    }
    out.push_back({q, goal});
  }
  return out;
}

TEST(NoiseScheduleTest, UnitIdentityAndMonotone) {
  const NoiseSchedule s;
  ASSERT_EQ(s.steps(), 512);
  EXPECT_DOUBLE_EQ(s.betas()(0), 1e-4);
  EXPECT_DOUBLE_EQ(s.betas()(511), 2e-2);
  for (int t = 0; t < s.steps(); ++t) {
    EXPECT_EQ(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0) << t;
    EXPECT_NEAR(s.alpha(t) * s.alpha(t), s.alpha_bars()(t), 1e-15);
    if (t > 0) {
      EXPECT_LT(s.alpha(t), s.alpha(t - 1));
      EXPECT_LT(s.alpha_bars()(t), s.alpha_bars()(t - 1));
    }
  }
  EXPECT_THROW(s.alpha(512), Error);
  EXPECT_THROW(NoiseSchedule(0), Error);
}

TEST(NoiseScheduleTest, QSample) {
  const NoiseSchedule s;
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd q0 = Random(6, 4, rng);
  EXPECT_EQ(q_sample(s, q0, 100, Eigen::MatrixXd::Zero(6, 4)), s.alpha(100) * q0);
  const Eigen::MatrixXd eps = Random(6, 4, rng);
  EXPECT_LE((q_sample(s, q0, 0, eps) - q0).norm(),
            s.sigma(0) * eps.norm() + (1.0 - s.alpha(0)) * q0.norm() + 1e-15);
  EXPECT_THROW(q_sample(s, q0, 0, Eigen::MatrixXd::Zero(5, 4)), Error);

  // Variance of the noise part at a fixed step.
  const int t = 300;
  double sum = 0.0, sq = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const Eigen::MatrixXd r = q_sample(s, q0, t, Random(6, 4, rng)) - s.alpha(t) * q0;
    sum += r.sum();
    sq += r.squaredNorm();
  }
  const double n = draws * 24.0;
  const double var = sq / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var / (s.sigma(t) * s.sigma(t)), 1.0, 0.03);
}

TEST(NoiseScheduleTest, DdimTimesteps) {
  EXPECT_EQ(DdimTimesteps(512, 1), std::vector<int>{511});
  const std::vector<int> ts = DdimTimesteps(512, 10);
  ASSERT_EQ(ts.size(), 10u);
  EXPECT_EQ(ts.front(), 511);
  EXPECT_EQ(ts.back(), 0);
  for (size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
  EXPECT_EQ(DdimTimesteps(512, 512).size(), 512u);
  EXPECT_THROW(DdimTimesteps(512, 513), Error);
  EXPECT_THROW(DdimTimesteps(512, 0), Error);
}

// Central differences of a scalar function of one matrix.
template <typename F>
Eigen::MatrixXd NumericGradient(Eigen::MatrixXd x, F f, double h = 1e-6) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    x.data()[i] = v + h;
    const double fp = f(x);
    x.data()[i] = v - h;
    const double fm = f(x);
    x.data()[i] = v;
    g.data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

TEST(TapeTest, OpsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd a0 = Random(4, 6, rng);
  const Eigen::MatrixXd w0 = Random(6, 6, rng);
  const Eigen::MatrixXd gain0 = Random(1, 6, rng) + Eigen::MatrixXd::Ones(1, 6);
  const Eigen::MatrixXd bias0 = Random(1, 6, rng);
  const Eigen::MatrixXd mem0 = Random(3, 6, rng);
  const Eigen::MatrixXd seed = Random(4, 6, rng);

  auto build = [&](Tape& t, const Eigen::MatrixXd& a, const Eigen::MatrixXd& w, const Eigen::MatrixXd& mem,
                   bool rg) {
    const Tape::Var va = t.Leaf(a, rg);
    const Tape::Var vw = t.Leaf(w, rg);
    const Tape::Var vm = t.Leaf(mem, rg);
    const Tape::Var g = t.Leaf(gain0);
    const Tape::Var b = t.Leaf(bias0, rg);
    Tape::Var h = t.LayerNorm(t.MatMul(va, vw), g, b);
    h = t.Add(h, t.Attention(t.Gelu(h), h, t.Silu(h), 2, true));
    h = t.Add(h, t.Attention(h, vm, t.Reshape(t.Reshape(vm, 9, 2), 3, 6), 3, false));
    return t.AddRow(h, b);
  };
  auto scalar = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& w, const Eigen::MatrixXd& mem) {
    Tape t;
    return t.value(build(t, a, w, mem, false)).cwiseProduct(seed).sum();
  };

  Tape t;
  const Tape::Var out = build(t, a0, w0, mem0, true);
  t.Backward(out, seed);
  const Eigen::MatrixXd ga = NumericGradient(a0, [&](const Eigen::MatrixXd& x) { return scalar(x, w0, mem0); });
  const Eigen::MatrixXd gw = NumericGradient(w0, [&](const Eigen::MatrixXd& x) { return scalar(a0, x, mem0); });
  const Eigen::MatrixXd gm = NumericGradient(mem0, [&](const Eigen::MatrixXd& x) { return scalar(a0, w0, x); });
  EXPECT_LT((t.grad(0) - ga).norm(), 1e-7 * (1.0 + ga.norm()));
  EXPECT_LT((t.grad(1) - gw).norm(), 1e-7 * (1.0 + gw.norm()));
  EXPECT_LT((t.grad(2) - gm).norm(), 1e-7 * (1.0 + gm.norm()));
  EXPECT_EQ(t.grad(3).size(), 0);  // constant leaf
}

TEST(TapeTest, ShapeErrors) {
  Tape t;
  const Tape::Var a = t.Leaf(Eigen::MatrixXd::Ones(2, 3));
  const Tape::Var b = t.Leaf(Eigen::MatrixXd::Ones(2, 3));
  EXPECT_THROW(t.MatMul(a, b), Error);
  EXPECT_THROW(t.Attention(a, t.Leaf(Eigen::MatrixXd::Ones(4, 3)), t.Leaf(Eigen::MatrixXd::Ones(4, 3)), 3, true),
               Error);
  EXPECT_THROW(t.Reshape(a, 4, 2), Error);
}

TEST(DenoiserTest, LayoutAndProjectionBlock) {
  const DenoiserParams p = DenoiserParams::Init(TinyNet(2), 3);
  const std::vector<int> proj = p.projection_indices();
  ASSERT_EQ(proj.size(), 2u);
  EXPECT_EQ(p.name(proj[0]), "out.weight");
  EXPECT_EQ(p.value(proj[0]).rows(), 8);
  EXPECT_EQ(p.value(proj[0]).cols(), 5);
  EXPECT_EQ(p.value(proj[1]).cols(), 5);
  EXPECT_TRUE(p.AllFinite());
  EXPECT_THROW(p.index("nope"), Error);

  DenoiserConfig bad = TinyNet();
  bad.heads = 3;
  EXPECT_THROW(DenoiserParams::Init(bad, 0), Error);
}

TEST(DenoiserTest, CausalMask) {
  std::mt19937_64 rng(4);
  for (int blocks : {0, 1, 2, 3}) {
    const DenoiserParams p = DenoiserParams::Init(TinyNet(blocks), 10 + blocks);
    const Eigen::MatrixXd qt = Random(7, 5, rng);
    const Eigen::Vector3d goal(0.2, -0.1, 0.4);
    const Eigen::MatrixXd base = denoise(p, qt, goal, 37);
    for (int j = 0; j < 7; ++j) {
      Eigen::MatrixXd q2 = qt;
      q2.row(j) += Random(1, 5, rng);
      const Eigen::MatrixXd out = denoise(p, q2, goal, 37);
      for (int i = 0; i < 7; ++i) {
        const double diff = (out.row(i) - base.row(i)).norm();
        if (i < j) {
          EXPECT_EQ(diff, 0.0) << "blocks " << blocks << " j " << j << " i " << i;
        } else if (blocks > 0 || i == j) {
          EXPECT_GT(diff, 0.0) << "blocks " << blocks << " j " << j << " i " << i;
        }
      }
    }
  }
}

TEST(DenoiserTest, GoalAndTimeSensitivity) {
  std::mt19937_64 rng(5);
  const DenoiserParams p = DenoiserParams::Init(TinyNet(2), 6);
  const Eigen::MatrixXd qt = Random(7, 5, rng);
  const Eigen::MatrixXd a = denoise(p, qt, Eigen::Vector3d(0.1, 0.2, 0.3), 10);
  const Eigen::MatrixXd b = denoise(p, qt, Eigen::Vector3d(-0.3, 0.2, 0.3), 10);
  const Eigen::MatrixXd c = denoise(p, qt, Eigen::Vector3d(0.1, 0.2, 0.3), 400);
  EXPECT_GT((a - b).norm(), 1e-6);
  EXPECT_GT((a - c).norm(), 1e-6);
}

TEST(DenoiserTest, BatchMembersIndependent) {
  std::mt19937_64 rng(6);
  const DenoiserParams p = DenoiserParams::Init(TinyNet(2), 7);
  std::vector<Eigen::MatrixXd> batch;
  for (int k = 0; k < 4; ++k) batch.push_back(Random(7, 5, rng));
  const Eigen::Vector3d goal(0.5, 0.0, -0.2);
  const Eigen::MatrixXd alone = denoise(p, batch[2], goal, 99);
  std::vector<Eigen::MatrixXd> outs;
  for (const auto& q : batch) outs.push_back(denoise(p, q, goal, 99));
  EXPECT_LT((outs[2] - alone).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(outs[2], alone);
}

TEST(DenoiserTest, ShorterSequencesAndShapeErrors) {
  const DenoiserParams p = DenoiserParams::Init(TinyNet(1), 8);
  EXPECT_EQ(denoise(p, Eigen::MatrixXd::Zero(3, 5), Eigen::Vector3d::Zero(), 0).rows(), 3);
  EXPECT_THROW(denoise(p, Eigen::MatrixXd::Zero(8, 5), Eigen::Vector3d::Zero(), 0), Error);
  EXPECT_THROW(denoise(p, Eigen::MatrixXd::Zero(7, 4), Eigen::Vector3d::Zero(), 0), Error);
}

TEST(DiffusionLossTest, PerfectPredictionAndPlainMse) {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd q = Random(7, 5, rng);
  EXPECT_EQ(x0_loss(q, q, {}).total, 0.0);
  const Eigen::MatrixXd p = Random(7, 5, rng);
  DiffusionLossWeights plain;
  plain.lambda_qd = 0.0;
  const DiffusionLoss l = x0_loss(p, q, plain);
  EXPECT_DOUBLE_EQ(l.total, (p - q).squaredNorm() / 35.0);
  EXPECT_EQ(l.qd, 0.0);
}

TEST(DiffusionLossTest, VelocityTermClosedForm) {
  // Linear-in-time error has constant velocity error.
  Eigen::MatrixXd err(5, 1);
  err << 0.0, 1.0, 2.0, 3.0, 4.0;
  DiffusionLossWeights w;
  w.lambda_q = 0.0;
  w.lambda_qd = 1.0;
  w.dt = 0.5;
  EXPECT_DOUBLE_EQ(x0_loss(err, Eigen::MatrixXd::Zero(5, 1), w).qd, 4.0);
}

TEST(DiffusionLossTest, PredictionGradient) {
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd q = Random(7, 5, rng);
  const Eigen::MatrixXd p = Random(7, 5, rng);
  DiffusionLossWeights w;
  w.lambda_qd = 0.3;
  w.dt = 0.1;
  Eigen::MatrixXd g;
  x0_loss(p, q, w, &g);
  const Eigen::MatrixXd fd =
      NumericGradient(p, [&](const Eigen::MatrixXd& x) { return x0_loss(x, q, w).total; });
  EXPECT_LT((g - fd).norm() / fd.norm(), 1e-7);
}

TEST(DiffusionLossTest, ParameterGradientTinyNet) {
  std::mt19937_64 rng(11);
  const NoiseSchedule schedule;
  DenoiserParams p = DenoiserParams::Init(TinyNet(1), 12);
  const Eigen::MatrixXd q0 = Random(7, 5, rng);
  const Eigen::MatrixXd eps = Random(7, 5, rng);
  const Eigen::Vector3d goal(0.3, -0.7, 0.1);
  DiffusionLossWeights w;
  w.lambda_qd = 1e-3;
  const int t = 200;
  ParamGrads grads;
  diffusion_loss(p, schedule, q0, goal, t, eps, w, &grads);

  auto loss_with = [&](int block, const Eigen::MatrixXd& value) {
    DenoiserParams q = p;
    q.value(block) = value;
    return diffusion_loss(q, schedule, q0, goal, t, eps, w).total;
  };
  // Final projection block: every entry.
  for (int block : p.projection_indices()) {
    const Eigen::MatrixXd fd = NumericGradient(
        p.value(block), [&](const Eigen::MatrixXd& x) { return loss_with(block, x); }, 1e-5);
    const double rel = (grads[block] - fd).norm() / fd.norm();
    EXPECT_LT(rel, 1e-4) << p.name(block);
  }
  // Every other block, checked along a random direction.
  for (int block = 0; block < p.size(); ++block) {
    const Eigen::MatrixXd dir = Random(static_cast<int>(p.value(block).rows()),
                                       static_cast<int>(p.value(block).cols()), rng);
    const double h = 1e-5;
    const double fd = (loss_with(block, p.value(block) + h * dir) -
                       loss_with(block, p.value(block) - h * dir)) / (2.0 * h);
    const double an = grads[block].cwiseProduct(dir).sum();
    EXPECT_LT(std::abs(an - fd), 1e-4 * std::max(std::abs(fd), 1e-6)) << p.name(block);
  }
}

TEST(DiffusionLossTest, InputGradient) {
  std::mt19937_64 rng(13);
  const DenoiserParams p = DenoiserParams::Init(TinyNet(2), 14);
  const Eigen::MatrixXd qt = Random(7, 5, rng);
  const Eigen::MatrixXd seed = Random(7, 5, rng);
  const Eigen::Vector3d goal(0.0, 0.4, -0.2);
  DenoiserPass pass(p, qt, goal, 55, false, true);
  Eigen::MatrixXd g;
  pass.Backward(seed, nullptr, &g);
  const Eigen::MatrixXd fd = NumericGradient(
      qt, [&](const Eigen::MatrixXd& x) { return denoise(p, x, goal, 55).cwiseProduct(seed).sum(); });
  EXPECT_LT((g - fd).norm() / fd.norm(), 1e-6);
}

TEST(SequenceTest, StrideAndUpsample) {
  Eigen::MatrixXd q(501, 2);
  for (int i = 0; i < 501; ++i) q.row(i) << 0.001 * i, -3.0 + 0.5 * i;
  const Eigen::MatrixXd s = StrideSequence(q, 10);
  ASSERT_EQ(s.rows(), 51);
  EXPECT_EQ(s.row(50), q.row(500));
  const Eigen::MatrixXd u = UpsampleSequence(s, 10, 501);
  EXPECT_LT((u - q).cwiseAbs().maxCoeff(), 1e-12);
  for (int i = 0; i < 51; ++i) EXPECT_EQ(u.row(10 * i), s.row(i));
}

TEST(NormalizerTest, RoundTrip) {
  const auto ex = ToyExamples(5, 7, 5, 15);
  std::vector<Eigen::MatrixXd> seqs;
  std::vector<Eigen::Vector3d> goals;
  for (const auto& e : ex) {
    seqs.push_back(e.q);
    goals.push_back(e.goal);
  }
  const Normalizer n = Normalizer::Fit(seqs, goals);
  EXPECT_LT((n.Denormalize(n.Normalize(seqs[2])) - seqs[2]).norm(), 1e-12);
  // Constant columns fall back to a floor instead of dividing by zero.
  const Normalizer z = Normalizer::Fit({Eigen::MatrixXd::Zero(4, 3)}, {Eigen::Vector3d::Zero()});
  EXPECT_TRUE(z.Normalize(Eigen::MatrixXd::Ones(4, 3)).allFinite());
}

TEST(TrainingTest, ToySetLossFalls) {
  const auto examples = ToyExamples(20, 11, 6, 16);
  TrainConfig cfg;
  cfg.net = TinyNet(1);
  cfg.net.d_model = 16;
  cfg.lr = 3e-3;
  cfg.batch = 4;
  cfg.iterations = 2000;
  cfg.seed = 17;
  DiffusionPolicy policy = InitPolicy(cfg, examples);
  Trainer trainer(&policy, examples);
  std::mt19937_64 eval_a(18), eval_b(18), rng(19);
  const double initial = trainer.Evaluate(eval_a, 4).total;
  for (int i = 0; i < cfg.iterations; ++i) trainer.Step(rng);
  const double final = trainer.Evaluate(eval_b, 4).total;
  EXPECT_LT(final, 0.1 * initial) << initial << " -> " << final;
  EXPECT_EQ(policy.iterations_done, 2000u);
}

TEST(TrainingTest, EmaConvergesWhenFrozen) {
  const auto examples = ToyExamples(3, 7, 5, 20);
  TrainConfig cfg;
  cfg.net = TinyNet(1);
  cfg.ema_decay = 0.9;
  cfg.seed = 21;
  DiffusionPolicy policy = InitPolicy(cfg, examples);
  Trainer trainer(&policy, examples);
  std::mt19937_64 rng(22);
  for (int i = 0; i < 20; ++i) trainer.Step(rng);
  auto gap = [&] {
    double g = 0.0;
    for (int p = 0; p < policy.params.size(); ++p) g += (policy.ema.value(p) - policy.params.value(p)).squaredNorm();
    return std::sqrt(g);
  };
  const double before = gap();
  ASSERT_GT(before, 0.0);
  for (int i = 0; i < 300; ++i) trainer.UpdateEma();
  EXPECT_LT(gap(), 1e-10 * std::max(before, 1.0));
}

TEST(TrainingTest, DeterministicGivenSeed) {
  const auto examples = ToyExamples(4, 7, 5, 23);
  TrainConfig cfg;
  cfg.net = TinyNet(1);
  cfg.iterations = 5;
  cfg.batch = 2;
  cfg.seed = 24;
  const DiffusionPolicy a = train_policy(examples, cfg);
  const DiffusionPolicy b = train_policy(examples, cfg);
  for (int p = 0; p < a.params.size(); ++p) EXPECT_EQ(a.params.value(p), b.params.value(p));
}

TEST(SamplingTest, SingleStepAndDeterminism) {
  const auto examples = ToyExamples(3, 7, 5, 25);
  TrainConfig cfg;
  cfg.net = TinyNet(2);
  cfg.seed = 26;
  const DiffusionPolicy policy = InitPolicy(cfg, examples);
  std::mt19937_64 rng(27);
  const Eigen::MatrixXd noise = SampleNoise(7, 5, rng);
  const Eigen::Vector3d goal(0.1, 0.1, 0.1);
  EXPECT_EQ(ddim_sample_normalized(policy.ema, policy.schedule, goal, 1, noise),
            denoise(policy.ema, noise, goal, 511));
  std::mt19937_64 r1(28), r2(28);
  EXPECT_EQ(ddim_sample(policy, goal, 10, r1), ddim_sample(policy, goal, 10, r2));
  EXPECT_THROW(ddim_sample(policy, goal, 513, r1), Error);
}

TEST(SamplingTest, OverfitOneSequenceIsRecovered) {
  const auto all = ToyExamples(1, 51, 20, 29);
  TrainConfig cfg;
  cfg.net.d_model = 32;
  cfg.net.blocks = 2;
  cfg.net.heads = 2;
  cfg.net.goal_tokens = 2;
  cfg.net.ffn_mult = 2;
  cfg.lr = 2e-3;
  cfg.batch = 4;
  cfg.iterations = 600;
  cfg.ema_decay = 0.99;
  cfg.seed = 30;
  const DiffusionPolicy policy = train_policy(all, cfg);
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd q = ddim_sample(policy, all[0].goal, 20, rng);
  const double rel = (q - all[0].q).norm() / all[0].q.norm();
  EXPECT_LT(rel, 0.05);
}

TEST(CheckpointTest, RoundTripAndCard) {
  const auto examples = ToyExamples(3, 7, 5, 32);
  TrainConfig cfg;
  cfg.net = TinyNet(2);
  cfg.iterations = 3;
  cfg.batch = 2;
  cfg.seed = 33;
  const DiffusionPolicy policy = train_policy(examples, cfg);
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "gvswhip_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "policy.gvsp").string();
  save_checkpoint(policy, path);
  const DiffusionPolicy back = load_checkpoint(path);
  ASSERT_EQ(back.params.size(), policy.params.size());
  for (int p = 0; p < policy.params.size(); ++p) {
    EXPECT_EQ(back.params.value(p), policy.params.value(p));
    EXPECT_EQ(back.ema.value(p), policy.ema.value(p));
    EXPECT_EQ(back.params.name(p), policy.params.name(p));
  }
  EXPECT_EQ(back.normalizer.q_std, policy.normalizer.q_std);
  EXPECT_EQ(back.iterations_done, 3u);
  EXPECT_EQ(ModelCard(back), ModelCard(policy));
  std::ifstream card(path + ".card.txt");
  std::string text((std::istreambuf_iterator<char>(card)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("temporal_stride: 10"), std::string::npos);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormatError);
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_checkpoint(path), Error);
}

}  // namespace
}  // namespace gvswhip
