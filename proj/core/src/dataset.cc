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

#include <atomic>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gvswhip/error.h"
#include "gvswhip/hash.h"
#include "byte_io.h"

namespace gvswhip {

namespace fs = std::filesystem;
using nlohmann::json;

ControlInput sample_control(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> az(ControlInput::kAzimuthMin, ControlInput::kAzimuthMax);
  std::uniform_real_distribution<double> el(ControlInput::kElevationMin,
                                            ControlInput::kElevationMax);
  ControlInput c;
  for (int k = 0; k < 4; ++k) c.theta(0, k) = az(rng);
  for (int k = 0; k < 4; ++k) c.theta(1, k) = el(rng);
  return c;
}

int max_speed_index(const Trajectory& traj) {
  const int tip = traj.n_points() - 1;
  int best = 0;
  double best_speed = -1.0;
  for (int r = 0; r < traj.length(); ++r) {
    const double v = traj.point_velocity(r, tip).norm();
    if (v > best_speed) {
      best_speed = v;
      best = r;
    }
  }
  return best;
}

Eigen::Vector3d label_goal(const Trajectory& traj) {
  if (!traj.valid) throw Error(ErrorCode::kInvalidTrajectory, "cannot label an invalid trajectory");
  if (traj.length() == 0 || traj.n_points() == 0) {
    throw Error(ErrorCode::kInvalidTrajectory, "trajectory has no recorded points");
  }
  return traj.point(max_speed_index(traj), traj.n_points() - 1);
}

namespace {

std::string Printable(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (c >= 32 && c < 127) {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02x", c);
      out += buf;
    }
  }
  return out;
}

}  // namespace

std::string EncodeRecord(const Trajectory& traj) {
  const int length = traj.length();
  const int np = traj.n_points();
  if (traj.Q.rows() != length || traj.Qd.rows() != length || traj.Qd.cols() != traj.Q.cols() ||
      traj.point_positions.rows() != length || traj.point_velocities.rows() != length ||
      traj.point_velocities.cols() != traj.point_positions.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "trajectory arrays disagree on shape");
  }
  Writer w;
  w.bytes(kRecordMagic, 4);
  w.u32(kRecordVersion);
  w.u32(static_cast<std::uint32_t>(traj.Q.cols()));
  w.u32(static_cast<std::uint32_t>(length));
  w.u32(static_cast<std::uint32_t>(np));
  w.matrix(traj.times.transpose());
  w.matrix(traj.control.theta);
  w.matrix(traj.Q);
  w.matrix(traj.Qd);
  w.matrix(traj.point_positions);
  w.matrix(traj.point_velocities);
  w.matrix(traj.goal.transpose());
  const char valid = traj.valid ? 1 : 0;
  w.bytes(&valid, 1);
  return w.take();
}

Trajectory DecodeRecord(const std::string& bytes) {
  Reader r(bytes);
  const std::string magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kRecordMagic, 4) != 0) {
    throw Error(ErrorCode::kFormatError,
                "bad magic at byte offset 0: expected 'GVSD', found '" + Printable(magic) + "'");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kRecordVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported record version " + std::to_string(version) +
                                             " at byte offset 4 (expected " +
                                             std::to_string(kRecordVersion) + ")");
  }
  const std::uint32_t dof = r.u32("D");
  const std::uint32_t length = r.u32("L");
  const std::uint32_t np = r.u32("n_points");
  constexpr std::uint32_t kLimit = 1u << 20;
  if (dof == 0 || dof > 4096 || length > kLimit || np > 4096) {
    throw Error(ErrorCode::kFormatError, "implausible header D=" + std::to_string(dof) +
                                             " L=" + std::to_string(length) +
                                             " n_points=" + std::to_string(np));
  }
  const std::uint64_t expected =
      20 + 8ull * (length + 8 + 2ull * length * dof + 6ull * length * np + 3) + 1;
  // Short files are reported by the first field that runs out.
  if (bytes.size() > expected) {
    throw Error(ErrorCode::kFormatError, "record has " + std::to_string(bytes.size()) +
                                             " bytes, header implies " +
                                             std::to_string(expected));
  }
  Trajectory t;
  t.times = r.matrix(1, length, "times").transpose();
  t.control.theta = r.matrix(2, 4, "theta");
  t.Q = r.matrix(length, dof, "Q");
  t.Qd = r.matrix(length, dof, "Qd");
  t.point_positions = r.matrix(length, 3 * np, "positions");
  t.point_velocities = r.matrix(length, 3 * np, "velocities");
  t.goal = r.matrix(1, 3, "goal").transpose();
  const std::uint8_t valid = r.u8("valid");
  if (valid > 1) {
    throw Error(ErrorCode::kFormatError, "valid flag at byte offset " +
                                             std::to_string(r.pos() - 1) + " is " +
                                             std::to_string(valid));
  }
  t.valid = valid == 1;
  return t;
}

namespace {

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileAtomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace

void write_record(const Trajectory& traj, const std::string& path) {
  WriteFileAtomic(path, EncodeRecord(traj));
}

Trajectory read_record(const std::string& path) {
  try {
    return DecodeRecord(ReadFile(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFormatError) throw;
    throw Error(ErrorCode::kFormatError, path + ": " + e.what());
  }
}

std::string DatasetManifest::ToJson() const {
  json j;
  j["format_version"] = format_version;
  j["n_requested"] = n_requested;
  j["n_valid"] = n_valid;
  j["seed"] = seed;
  j["model_hash"] = HexDigest(model_hash);
  j["filter_rate"] = filter_rate();
  json items = json::array();
  for (const auto& e : entries) {
    items.push_back({{"index", e.index},
                     {"path", e.path},
                     {"goal", {e.goal.x(), e.goal.y(), e.goal.z()}},
                     {"valid", e.valid},
                     {"split", e.test_split ? "test" : "train"},
                     {"record_hash", HexDigest(e.record_hash)}});
  }
  j["records"] = std::move(items);
  return j.dump(2);
}

std::uint64_t DatasetManifest::Hash() const { return Fnv1a(ToJson()); }

DatasetManifest ManifestFromJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.n_requested = j.at("n_requested").get<std::uint64_t>();
    m.n_valid = j.at("n_valid").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.model_hash = std::stoull(j.at("model_hash").get<std::string>(), nullptr, 16);
    for (const auto& item : j.at("records")) {
      ManifestEntry e;
      e.index = item.at("index").get<std::uint64_t>();
      e.path = item.at("path").get<std::string>();
      const auto g = item.at("goal").get<std::vector<double>>();
      if (g.size() != 3) throw Error(ErrorCode::kFormatError, "goal must have 3 entries");
      e.goal = Eigen::Vector3d(g[0], g[1], g[2]);
      e.valid = item.at("valid").get<bool>();
      e.test_split = item.at("split").get<std::string>() == "test";
      e.record_hash = std::stoull(item.at("record_hash").get<std::string>(), nullptr, 16);
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("manifest: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::kFormatError, std::string("manifest: ") + e.what());
  }
}

DatasetManifest LoadManifest(const std::string& dir) {
  return ManifestFromJson(ReadFile((fs::path(dir) / "manifest.json").string()));
}

void SaveManifest(const DatasetManifest& manifest, const std::string& dir) {
  WriteFileAtomic((fs::path(dir) / "manifest.json").string(), manifest.ToJson() + "\n");
}

bool IsTestIndex(std::uint64_t index) {
  std::string key(8, '\0');
  for (int i = 0; i < 8; ++i) key[i] = static_cast<char>((index >> (8 * i)) & 0xff);
  return Fnv1a(key) % 10 == 0;
}

ControlInput ControlForIndex(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  return sample_control(rng);
}

namespace {

std::string RecordName(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%06llu.gvsd", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

DatasetManifest generate(const RodModel& model, std::uint64_t n, std::uint64_t seed,
                         const std::string& out_dir, const GenerateOptions& options) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw Error(ErrorCode::kIoError, "cannot create dataset directory " + out_dir);
  }
  model.Validate();

  DatasetManifest manifest;
  manifest.n_requested = n;
  manifest.seed = seed;
  manifest.model_hash = model.Hash();
  manifest.entries.resize(n);

  std::atomic<std::uint64_t> next{0}, done{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        ManifestEntry entry;
        entry.index = i;
        entry.test_split = IsTestIndex(i);
        const ControlInput control = ControlForIndex(seed, i);
        const std::string name = RecordName(i);
        const std::string path = (fs::path(out_dir) / name).string();
        std::string bytes;
        bool reused = false;
        if (fs::exists(path)) {
          try {
            bytes = ReadFile(path);
            const Trajectory existing = DecodeRecord(bytes);
            reused = existing.valid && existing.control.theta == control.theta;
            if (reused) entry.goal = existing.goal;
          } catch (const Error&) {
            reused = false;
          }
        }
        if (!reused) {
          Trajectory traj = simulate(model, control);
          if (traj.valid) {
            traj.goal = label_goal(traj);
            bytes = EncodeRecord(traj);
            WriteFileAtomic(path, bytes);
            entry.goal = traj.goal;
          }
          entry.valid = traj.valid;
        } else {
          entry.valid = true;
        }
        if (entry.valid) {
          entry.path = name;
          entry.record_hash = Fnv1a(bytes);
        }
        manifest.entries[i] = std::move(entry);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
      const std::uint64_t d = done.fetch_add(1) + 1;
      if (options.progress) {
        std::lock_guard<std::mutex> lock(mu);
        options.progress(d, n);
      }
    }
  };
  const int threads = std::max(1, options.threads);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (const auto& e : manifest.entries) manifest.n_valid += e.valid ? 1 : 0;
  SaveManifest(manifest, out_dir);
  return manifest;
}

std::vector<Trajectory> LoadTrajectories(const std::string& dir, const DatasetManifest& manifest,
                                         Split split) {
  std::vector<Trajectory> out;
  for (const auto& e : manifest.entries) {
    if (!e.valid) continue;
    if (split == Split::kTrain && e.test_split) continue;
    if (split == Split::kTest && !e.test_split) continue;
    out.push_back(read_record((fs::path(dir) / e.path).string()));
  }
  return out;
}

}  // namespace gvswhip
