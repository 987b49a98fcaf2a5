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

#ifndef GVSWHIP_SE3_H_
#define GVSWHIP_SE3_H_

#include <Eigen/Core>

namespace gvswhip {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Matrix4 = Eigen::Matrix4d;

// Element of se(3), stored angular part first: (omega, v).
class Twist {
 public:
  Twist() : data_(Vector6::Zero()) {}
  explicit Twist(const Vector6& data) : data_(data) {}
  Twist(const Eigen::Vector3d& omega, const Eigen::Vector3d& v) {
    data_ << omega, v;
  }

  static Twist Zero() { return Twist(); }

  Eigen::Vector3d omega() const { return data_.head<3>(); }
  Eigen::Vector3d v() const { return data_.tail<3>(); }
  const Vector6& vec() const { return data_; }
  Vector6& vec() { return data_; }

  double operator[](int i) const { return data_[i]; }

  Twist operator+(const Twist& o) const { return Twist(data_ + o.data_); }
  Twist operator-(const Twist& o) const { return Twist(data_ - o.data_); }
  Twist operator-() const { return Twist(-data_); }
  Twist operator*(double s) const { return Twist(data_ * s); }

 private:
  Vector6 data_;
};

inline Twist operator*(double s, const Twist& x) { return x * s; }

// Rigid transform. Composition is g1 * g2 (apply g2 first, then g1).
class Pose {
 public:
  Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose Identity() { return Pose(); }
  static Pose FromMatrix(const Matrix4& m);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Pose operator*(const Pose& o) const {
    return Pose(rotation_ * o.rotation_, rotation_ * o.translation_ + translation_);
  }
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }
  Pose inverse() const {
    Eigen::Matrix3d rt = rotation_.transpose();
    return Pose(rt, -rt * translation_);
  }

  Matrix4 matrix() const;

  // Ad_g, mapping body twists of the child frame into this frame.
  Matrix6 adjoint() const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

// Twists with rotation angle below this use truncated Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

Eigen::Matrix3d skew(const Eigen::Vector3d& w);
Eigen::Vector3d vee3(const Eigen::Matrix3d& m);

Matrix4 hat(const Twist& x);
Twist vee(const Matrix4& m);

Pose exp_se3(const Twist& x);

// Throws Error(kAngleNearPi) when the rotation angle is within 1e-9 (in trace)
// of pi.
Twist log_se3(const Pose& g);

// Little adjoint ad(x) so that [a, b] = ad(a) * b.
Matrix6 ad(const Twist& x);
Twist lie_bracket(const Twist& a, const Twist& b);

// exp(x + dx) ~ exp(J_l(x) dx) exp(x) ~ exp(x) exp(J_r(x) dx).
Matrix6 left_jacobian(const Twist& x);
Matrix6 right_jacobian(const Twist& x);
Matrix6 left_jacobian_inverse(const Twist& x);
Matrix6 right_jacobian_inverse(const Twist& x);

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w);
Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& w);

}  // namespace gvswhip

#endif  // GVSWHIP_SE3_H_
