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

#ifndef GVSWHIP_DATASET_H_
#define GVSWHIP_DATASET_H_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gvswhip/dynamics.h"
#include "gvswhip/reference_trajectory.h"
#include "gvswhip/rod_model.h"

namespace gvswhip {

inline constexpr std::uint32_t kRecordVersion = 1;
inline constexpr char kRecordMagic[4] = {'G', 'V', 'S', 'D'};

// Waypoints drawn element-wise uniformly inside the joint bounds.
ControlInput sample_control(std::mt19937_64& rng);

// Row of maximum tip speed; earliest on ties.
int max_speed_index(const Trajectory& traj);

// Tip position at max_speed_index. Throws kInvalidTrajectory when the
// trajectory is flagged invalid.
Eigen::Vector3d label_goal(const Trajectory& traj);

// Record layout, little-endian:
//   "GVSD" u32 version, u32 D, u32 L, u32 n_points
//   f64 times[L], theta[8] (row-major 2x4), Q[L*D], Qd[L*D],
//   positions[L*n_points*3], velocities[L*n_points*3], goal[3]
//   u8 valid
// Matrices are stored row-major.
std::string EncodeRecord(const Trajectory& traj);
Trajectory DecodeRecord(const std::string& bytes);  // throws kFormatError
void write_record(const Trajectory& traj, const std::string& path);
Trajectory read_record(const std::string& path);

struct ManifestEntry {
  std::uint64_t index = 0;
  std::string path;  // relative to the dataset directory; empty when filtered
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();
  bool valid = false;
  bool test_split = false;
  std::uint64_t record_hash = 0;
};

struct DatasetManifest {
  std::uint64_t n_requested = 0;
  std::uint64_t n_valid = 0;
  std::uint64_t seed = 0;
  std::uint64_t model_hash = 0;
  std::uint32_t format_version = kRecordVersion;
  std::vector<ManifestEntry> entries;

  double filter_rate() const {
    return n_requested == 0 ? 0.0 : 1.0 - static_cast<double>(n_valid) / n_requested;
  }
  std::string ToJson() const;
  // Digest of the canonical JSON form.
  std::uint64_t Hash() const;
};

DatasetManifest ManifestFromJson(const std::string& text);
DatasetManifest LoadManifest(const std::string& dir);
void SaveManifest(const DatasetManifest& manifest, const std::string& dir);

// 90/10 train/test assignment from a hash of the record index.
bool IsTestIndex(std::uint64_t index);

// Control for record `index` of a dataset generated from `seed`.
ControlInput ControlForIndex(std::uint64_t seed, std::uint64_t index);

struct GenerateOptions {
  int threads = 1;
  std::function<void(std::uint64_t done, std::uint64_t total)> progress;
};

// Simulates n controls, writes one record per valid trajectory and the
// manifest (manifest.json) under out_dir. Records already on disk with the
// expected control are reused.
DatasetManifest generate(const RodModel& model, std::uint64_t n, std::uint64_t seed,
                         const std::string& out_dir, const GenerateOptions& options = {});

enum class Split { kTrain, kTest, kAll };

std::vector<Trajectory> LoadTrajectories(const std::string& dir, const DatasetManifest& manifest,
                                         Split split);

}  // namespace gvswhip

#endif  // GVSWHIP_DATASET_H_
