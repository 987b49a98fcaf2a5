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

#include "gvswhip/se3.h"

#include <cmath>
#include <numbers>
#include <string>

#include "gvswhip/error.h"

namespace gvswhip {
namespace {

// The SE(3) Jacobian coefficients carry up to 1/theta^5 denominators; their
// closed forms lose about 1/theta^2 digits, so they switch to series far
// earlier than the exponential does.
constexpr double kSeriesAngle = 1e-2;

struct So3Coefficients {
  double a;  // sin(t)/t
  double b;  // (1 - cos t)/t^2
  double c;  // (t - sin t)/t^3
};

So3Coefficients ExpCoefficients(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) {
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0};
  }
  const double half_sin = std::sin(0.5 * theta);
  return {std::sin(theta) / theta, 2.0 * half_sin * half_sin / t2,
          (theta - std::sin(theta)) / (t2 * theta)};
}

// 1/t^2 - cot(t/2)/(2t), the quadratic coefficient of the inverse SO(3)
// Jacobian.
double InverseCoefficient(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  return 1.0 / t2 - 1.0 / (2.0 * theta * std::tan(0.5 * theta));
}

void CheckChart(double theta, const char* what) {
  if (theta >= std::numbers::pi - 1e-9) {
    throw Error(ErrorCode::kAngleNearPi,
                std::string(what) + ": rotation angle " + std::to_string(theta) +
                    " is at or beyond pi");
  }
}

// Off-diagonal block of the SE(3) left Jacobian for twist (w, v).
Eigen::Matrix3d LeftJacobianQ(const Eigen::Vector3d& w, const Eigen::Vector3d& v) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  double c1, c2, c3;
  if (theta < kSeriesAngle) {
    const double t4 = t2 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Eigen::Matrix3d W = skew(w);
  const Eigen::Matrix3d V = skew(v);
  const Eigen::Matrix3d WV = W * V;
  const Eigen::Matrix3d VW = V * W;
  const Eigen::Matrix3d WVW = WV * W;
  return 0.5 * V + c1 * (WV + VW + WVW) + c2 * (W * WV + VW * W - 3.0 * WVW) +
         c3 * (WVW * W + W * WVW);
}

}  // namespace

Pose Pose::FromMatrix(const Matrix4& m) {
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Matrix4 Pose::matrix() const {
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Matrix6 Pose::adjoint() const {
  Matrix6 a = Matrix6::Zero();
  a.topLeftCorner<3, 3>() = rotation_;
  a.bottomRightCorner<3, 3>() = rotation_;
  a.bottomLeftCorner<3, 3>() = skew(translation_) * rotation_;
  return a;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Vector3d vee3(const Eigen::Matrix3d& m) {
  return Eigen::Vector3d(m(2, 1), m(0, 2), m(1, 0));
}

Matrix4 hat(const Twist& x) {
  Matrix4 m = Matrix4::Zero();
  m.topLeftCorner<3, 3>() = skew(x.omega());
  m.topRightCorner<3, 1>() = x.v();
  return m;
}

Twist vee(const Matrix4& m) {
  return Twist(vee3(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>());
}

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w) {
  const So3Coefficients k = ExpCoefficients(w.norm());
  const Eigen::Matrix3d W = skew(w);
  return Eigen::Matrix3d::Identity() + k.b * W + k.c * W * W;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  CheckChart(theta, "so3_left_jacobian_inverse");
  const Eigen::Matrix3d W = skew(w);
  return Eigen::Matrix3d::Identity() - 0.5 * W + InverseCoefficient(theta) * W * W;
}

Pose exp_se3(const Twist& x) {
  const Eigen::Vector3d w = x.omega();
  const So3Coefficients k = ExpCoefficients(w.norm());
  const Eigen::Matrix3d W = skew(w);
  const Eigen::Matrix3d W2 = W * W;
  const Eigen::Matrix3d R = Eigen::Matrix3d::Identity() + k.a * W + k.b * W2;
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() + k.b * W + k.c * W2;
  return Pose(R, V * x.v());
}

Twist log_se3(const Pose& g) {
  const Eigen::Matrix3d& R = g.rotation();
  const double tr = R.trace();
  if (!(tr > -1.0 + 1e-9)) {
    throw Error(ErrorCode::kAngleNearPi,
                "log_se3: trace " + std::to_string(tr) + " puts the rotation angle at pi");
  }
  // sin(theta) * axis and cos(theta) give a well-conditioned angle.
  const Eigen::Vector3d s = 0.5 * vee3(R - R.transpose());
  const double sin_theta = s.norm();
  const double cos_theta = 0.5 * (tr - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  Eigen::Vector3d w;
  if (theta < kSmallAngle) {
    w = (1.0 + theta * theta / 6.0) * s;
  } else {
    w = (theta / sin_theta) * s;
  }
  const Eigen::Matrix3d W = skew(w);
  const Eigen::Matrix3d Vinv =
      Eigen::Matrix3d::Identity() - 0.5 * W + InverseCoefficient(theta) * W * W;
  return Twist(w, Vinv * g.translation());
}

Matrix6 ad(const Twist& x) {
  Matrix6 a = Matrix6::Zero();
  const Eigen::Matrix3d W = skew(x.omega());
  a.topLeftCorner<3, 3>() = W;
  a.bottomRightCorner<3, 3>() = W;
  a.bottomLeftCorner<3, 3>() = skew(x.v());
  return a;
}

Twist lie_bracket(const Twist& a, const Twist& b) { return Twist(ad(a) * b.vec()); }

Matrix6 left_jacobian(const Twist& x) {
  const Eigen::Matrix3d J = so3_left_jacobian(x.omega());
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomRightCorner<3, 3>() = J;
  out.bottomLeftCorner<3, 3>() = LeftJacobianQ(x.omega(), x.v());
  return out;
}

Matrix6 right_jacobian(const Twist& x) { return left_jacobian(-x); }

Matrix6 left_jacobian_inverse(const Twist& x) {
  const Eigen::Matrix3d Jinv = so3_left_jacobian_inverse(x.omega());
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = Jinv;
  out.bottomRightCorner<3, 3>() = Jinv;
  out.bottomLeftCorner<3, 3>() = -Jinv * LeftJacobianQ(x.omega(), x.v()) * Jinv;
  return out;
}

Matrix6 right_jacobian_inverse(const Twist& x) { return left_jacobian_inverse(-x); }

}  // namespace gvswhip
