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

#ifndef GVSWHIP_SRC_BYTE_IO_H_
#define GVSWHIP_SRC_BYTE_IO_H_

#include <bit>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "gvswhip/error.h"

namespace gvswhip {

// Little-endian primitives shared by the record and checkpoint formats.
class Writer {
 public:
  void bytes(const char* p, size_t n) { out_.append(p, n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  template <typename M>
  void matrix(const M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  void need(size_t n, const char* field) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::kFormatError,
                  "truncated input at byte offset " + std::to_string(pos_) + ": " + field +
                      " needs " + std::to_string(n) + " bytes, " +
                      std::to_string(data_.size() - pos_) + " remain");
    }
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    return next64();
  }
  double f64(const char* field) {
    need(8, field);
    return std::bit_cast<double>(next64());
  }
  // Caller has already checked the length.
  double f64() { return std::bit_cast<double>(next64()); }
  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, const char* field) {
    need(static_cast<size_t>(rows * cols) * 8, field);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    }
    return m;
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::string raw(size_t n, const char* field) {
    need(n, field);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t next64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  const std::string& data_;
  size_t pos_ = 0;
};

}  // namespace gvswhip

#endif  // GVSWHIP_SRC_BYTE_IO_H_
