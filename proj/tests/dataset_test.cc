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

#include "gvswhip/dataset.h"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gvswhip/error.h"
#include "gvswhip/grad_prior.h"

namespace gvswhip {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("gvswhip_dataset_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string str() const { return path_.string(); }
  fs::path path() const { return path_; }

 private:
  fs::path path_;
};

bool BitEqual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

Trajectory RandomTrajectory(std::mt19937_64& rng, int length = 501, int dof = 20, int np = 21) {
  std::normal_distribution<double> n;
  auto fill = [&](Eigen::MatrixXd& m, int r, int c) {
    m.resize(r, c);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  };
  Trajectory t;
  t.times.resize(length);
  for (int i = 0; i < length; ++i) t.times[i] = n(rng);
  fill(t.Q, length, dof);
  fill(t.Qd, length, dof);
  fill(t.point_positions, length, 3 * np);
  fill(t.point_velocities, length, 3 * np);
  t.control = sample_control(rng);
  t.goal = Eigen::Vector3d(n(rng), n(rng), n(rng));
  t.valid = n(rng) > 0.0;
  return t;
}

TEST(DatasetTest, SampleControlBoundsAndMeans) {
  std::mt19937_64 rng(1);
  double sum0 = 0.0, sum1 = 0.0;
  double min0 = 10, max0 = -10, min1 = 10, max1 = -10;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const ControlInput c = sample_control(rng);
    for (int k = 0; k < 4; ++k) {
      sum0 += c.theta(0, k);
      sum1 += c.theta(1, k);
      min0 = std::min(min0, c.theta(0, k));
      max0 = std::max(max0, c.theta(0, k));
      min1 = std::min(min1, c.theta(1, k));
      max1 = std::max(max1, c.theta(1, k));
    }
  }
  EXPECT_GE(min0, -std::numbers::pi);
  EXPECT_LE(max0, std::numbers::pi);
  EXPECT_GE(min1, -std::numbers::pi / 2);
  EXPECT_LE(max1, std::numbers::pi / 4);
  EXPECT_NEAR(sum0 / (4.0 * n), 0.0, 0.02);
  EXPECT_NEAR(sum1 / (4.0 * n), -std::numbers::pi / 8, 0.02);
}

TEST(DatasetTest, SampleControlDeterministic) {
  std::mt19937_64 a(42), b(42);
  EXPECT_EQ(sample_control(a).theta, sample_control(b).theta);
  EXPECT_EQ(ControlForIndex(7, 3).theta, ControlForIndex(7, 3).theta);
  EXPECT_NE(ControlForIndex(7, 3).theta, ControlForIndex(7, 4).theta);
  EXPECT_NE(ControlForIndex(7, 3).theta, ControlForIndex(8, 3).theta);
}

TEST(DatasetTest, StationaryRopeLabelsFirstRow) {
  RodModel model;
  model.gravity.setZero();
  const Trajectory traj = simulate(model, ControlInput{});
  ASSERT_TRUE(traj.valid);
  EXPECT_EQ(max_speed_index(traj), 0);
  EXPECT_EQ(label_goal(traj), traj.point(0, model.n_points() - 1));
}

TEST(DatasetTest, SpeedSpikeLabelsItsRow) {
  Trajectory t;
  t.valid = true;
  t.times = Eigen::VectorXd::LinSpaced(50, 0.0, 0.049);
  t.point_positions = Eigen::MatrixXd::Random(50, 9);
  t.point_velocities = Eigen::MatrixXd::Zero(50, 9);
  t.point_velocities(17, 7) = 4.0;
  t.point_velocities(33, 7) = 4.0;  // equal speed later: earliest wins
  EXPECT_EQ(max_speed_index(t), 17);
  EXPECT_EQ(label_goal(t), t.point(17, 2));
  t.valid = false;
  try {
    label_goal(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidTrajectory);
  }
}

TEST(DatasetTest, WhipGoalOnTipTrace) {
  const RodModel model;
  const Trajectory traj = simulate(model, ControlForIndex(3, 0));
  ASSERT_TRUE(traj.valid);
  const Eigen::Vector3d goal = label_goal(traj);
  double nearest = 1e9;
  for (int r = 0; r < traj.length(); ++r) {
    nearest = std::min(nearest, (traj.point(r, model.n_points() - 1) - goal).norm());
  }
  EXPECT_EQ(nearest, 0.0);
  EXPECT_LT(goal.norm(), WorkspaceRadius(model));
}

TEST(DatasetTest, RecordRoundTripBitExact) {
  std::mt19937_64 rng(2);
  TempDir dir;
  for (int i = 0; i < 100; ++i) {
    const Trajectory t = RandomTrajectory(rng);
    const std::string path = (dir.path() / ("r" + std::to_string(i) + ".gvsd")).string();
    write_record(t, path);
    const Trajectory u = read_record(path);
    ASSERT_TRUE(BitEqual(t.times, u.times));
    ASSERT_TRUE(BitEqual(t.Q, u.Q));
    ASSERT_TRUE(BitEqual(t.Qd, u.Qd));
    ASSERT_TRUE(BitEqual(t.point_positions, u.point_positions));
    ASSERT_TRUE(BitEqual(t.point_velocities, u.point_velocities));
    ASSERT_TRUE(BitEqual(t.control.theta, u.control.theta));
    ASSERT_TRUE(BitEqual(t.goal, u.goal));
    ASSERT_EQ(t.valid, u.valid);
    ASSERT_EQ(EncodeRecord(u), EncodeRecord(t));
  }
}

TEST(DatasetTest, RecordSizeMatchesLayout) {
  std::mt19937_64 rng(3);
  const Trajectory t = RandomTrajectory(rng);
  const std::string bytes = EncodeRecord(t);
  EXPECT_EQ(bytes.size(), 20u + 8u * (501 + 8 + 2 * 501 * 20 + 2 * 501 * 63 + 3) + 1u);
  EXPECT_EQ(bytes.substr(0, 4), "GVSD");
  // Little-endian u32 D right after magic and version.
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 20);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 0);
}

TEST(DatasetTest, TruncatedRecordIsFormatError) {
  std::mt19937_64 rng(4);
  const std::string bytes = EncodeRecord(RandomTrajectory(rng));
  for (size_t cut : {size_t{0}, size_t{3}, size_t{10}, size_t{500}, bytes.size() - 1}) {
    try {
      DecodeRecord(bytes.substr(0, cut));
      FAIL() << "cut " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kFormatError);
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(DecodeRecord(bytes + "x"), Error);
}

TEST(DatasetTest, BadMagicNamesBoth) {
  std::mt19937_64 rng(5);
  std::string bytes = EncodeRecord(RandomTrajectory(rng));
  bytes[0] = 'X';
  try {
    DecodeRecord(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormatError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'GVSD'"), std::string::npos);
    EXPECT_NE(msg.find("'XVSD'"), std::string::npos);
  }
}

TEST(DatasetTest, MissingFileIsIoError) {
  try {
    read_record("/nonexistent/dir/record.gvsd");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(DatasetTest, SplitIsAboutTenPercent) {
  int test = 0;
  for (std::uint64_t i = 0; i < 20000; ++i) test += IsTestIndex(i) ? 1 : 0;
  EXPECT_NEAR(test / 20000.0, 0.1, 0.01);
}

TEST(DatasetTest, EmptyGeneration) {
  TempDir dir;
  const DatasetManifest m = generate(RodModel{}, 0, 1, dir.str());
  EXPECT_EQ(m.n_requested, 0u);
  EXPECT_EQ(m.n_valid, 0u);
  EXPECT_TRUE(m.entries.empty());
  EXPECT_TRUE(fs::exists(dir.path() / "manifest.json"));
}

TEST(DatasetTest, GenerationDeterministicAndResumable) {
  const RodModel model;
  TempDir a, b;
  const DatasetManifest ma = generate(model, 10, 2024, a.str());
  GenerateOptions two;
  two.threads = 2;
  const DatasetManifest mb = generate(model, 10, 2024, b.str(), two);
  EXPECT_EQ(ma.Hash(), mb.Hash());
  EXPECT_EQ(ma.ToJson(), LoadManifest(a.str()).ToJson());
  EXPECT_EQ(ma.n_valid, 10u);

  const auto start = std::chrono::steady_clock::now();
  const DatasetManifest again = generate(model, 10, 2024, a.str());
  const double resumed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(again.Hash(), ma.Hash());
  EXPECT_LT(resumed, 1.0);

  // Goals lie in the workspace and spread in all three coordinates.
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e9), hi = -lo;
  for (const auto& e : ma.entries) {
    EXPECT_LT(e.goal.norm(), WorkspaceRadius(model));
    lo = lo.cwiseMin(e.goal);
    hi = hi.cwiseMax(e.goal);
  }
  EXPECT_GT((hi - lo).minCoeff(), 0.05);

  const auto all = LoadTrajectories(a.str(), ma, Split::kAll);
  ASSERT_EQ(all.size(), 10u);
  EXPECT_EQ(all[3].control.theta, ControlForIndex(2024, 3).theta);
  EXPECT_EQ(all[3].goal, label_goal(all[3]));
}

TEST(DatasetTest, CorruptRecordIsRegenerated) {
  const RodModel model;
  TempDir dir;
  const DatasetManifest first = generate(model, 2, 9, dir.str());
  {
    std::ofstream out(dir.path() / first.entries[1].path, std::ios::binary | std::ios::trunc);
    out << "junk";
  }
  const DatasetManifest second = generate(model, 2, 9, dir.str());
  EXPECT_EQ(first.Hash(), second.Hash());
}

TEST(DatasetTest, ManifestRejectsGarbage) {
  EXPECT_THROW(ManifestFromJson("{not json"), Error);
  EXPECT_THROW(ManifestFromJson("{}"), Error);
}

}  // namespace
}  // namespace gvswhip
