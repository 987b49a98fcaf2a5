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

#include "gvswhip/reference_trajectory.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "gvswhip/error.h"

namespace gvswhip {
namespace {

constexpr int kN = WaypointSpline::kSegments;
constexpr int kUnknowns = 6 * kN;

// d^d/du^d of u^j evaluated at u.
double MonomialDerivative(int j, int d, double u) {
  if (d > j) return 0.0;
  double f = 1.0;
  for (int i = 0; i < d; ++i) f *= (j - i);
  return f * std::pow(u, j - d);
}

// Rows: end values (2 per segment), C1..C4 at the four interior knots, then
// rate/accel at t = 0 and accel/jerk at T.
const Eigen::PartialPivLU<Eigen::MatrixXd>& SplineSystem() {
  static const Eigen::PartialPivLU<Eigen::MatrixXd> lu = [] {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(kUnknowns, kUnknowns);
    int row = 0;
    for (int k = 0; k < kN; ++k) {
      for (int j = 0; j < 6; ++j) {
        a(row, 6 * k + j) = MonomialDerivative(j, 0, 0.0);
        a(row + 1, 6 * k + j) = MonomialDerivative(j, 0, 1.0);
      }
      row += 2;
    }
    for (int k = 0; k + 1 < kN; ++k) {
      for (int d = 1; d <= 4; ++d, ++row) {
        for (int j = 0; j < 6; ++j) {
          a(row, 6 * k + j) = MonomialDerivative(j, d, 1.0);
          a(row, 6 * (k + 1) + j) = -MonomialDerivative(j, d, 0.0);
        }
      }
    }
    for (int d : {1, 2}) {
      for (int j = 0; j < 6; ++j) a(row, j) = MonomialDerivative(j, d, 0.0);
      ++row;
    }
    for (int d : {2, 3}) {
      for (int j = 0; j < 6; ++j) a(row, 6 * (kN - 1) + j) = MonomialDerivative(j, d, 1.0);
      ++row;
    }
    return Eigen::PartialPivLU<Eigen::MatrixXd>(a);
  }();
  return lu;
}

}  // namespace

void ControlInput::Validate() const {
  for (int k = 0; k < 4; ++k) {
    const double a = theta(0, k);
    const double e = theta(1, k);
    if (!std::isfinite(a) || a < kAzimuthMin || a > kAzimuthMax) {
      throw Error(ErrorCode::kInvalidArgument,
                  "azimuth waypoint " + std::to_string(k) + " = " + std::to_string(a) +
                      " outside [-pi, pi]");
    }
    if (!std::isfinite(e) || e < kElevationMin || e > kElevationMax) {
      throw Error(ErrorCode::kInvalidArgument,
                  "elevation waypoint " + std::to_string(k) + " = " + std::to_string(e) +
                      " outside [-pi/2, pi/4]");
    }
  }
}

WaypointSpline::WaypointSpline(const Eigen::Vector4d& waypoints) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kUnknowns);
  const double values[kN + 1] = {0.0, waypoints[0], waypoints[1], waypoints[2], waypoints[3],
                                 waypoints[3]};
  for (int k = 0; k < kN; ++k) {
    rhs[2 * k] = values[k];
    rhs[2 * k + 1] = values[k + 1];
  }
  const Eigen::VectorXd c = SplineSystem().solve(rhs);
  for (int k = 0; k < kN; ++k) coeffs_[k] = c.segment<6>(6 * k);
  // The clamped start pins these exactly; drop solver round-off.
  coeffs_[0].head<3>().setZero();
}

double WaypointSpline::value(double t, int derivative) const {
  if (!(t >= -1e-12 && t <= kHorizon + 1e-12)) {
    throw Error(ErrorCode::kOutOfDomain,
                "reference time " + std::to_string(t) + " outside [0, 0.5]");
  }
  const double x = std::clamp(t, 0.0, kHorizon) / kKnotSpacing;
  const int k = std::min(kN - 1, static_cast<int>(x));
  const double u = x - k;
  double acc = 0.0;
  for (int j = 5; j >= derivative; --j) {
    acc = acc * u + coeffs_[k][j] * MonomialDerivative(j, derivative, 1.0);
  }
  return acc / std::pow(kKnotSpacing, derivative);
}

const WaypointSpline& WaypointSpline::Basis(int k) {
  static const std::array<WaypointSpline, 4> basis = [] {
    std::array<WaypointSpline, 4> b;
    for (int i = 0; i < 4; ++i) b[i] = WaypointSpline(Eigen::Vector4d::Unit(i));
    return b;
  }();
  return basis[k];
}

JointReference reference_trajectory(const ControlInput& control, double t) {
  JointReference ref;
  for (int j = 0; j < 2; ++j) {
    const WaypointSpline spline(control.theta.row(j).transpose());
    ref.angle[j] = spline.value(t, 0);
    ref.rate[j] = spline.value(t, 1);
    ref.accel[j] = spline.value(t, 2);
  }
  return ref;
}

ControlInput FitWaypoints(const Eigen::VectorXd& times, const Eigen::MatrixXd& angles) {
  if (times.size() != angles.rows() || angles.cols() != 2 || times.size() < 4) {
    throw Error(ErrorCode::kShapeMismatch, "waypoint fit needs >= 4 samples of 2 joint angles");
  }
  Eigen::MatrixXd basis(times.size(), 4);
  for (int i = 0; i < times.size(); ++i) {
    for (int k = 0; k < 4; ++k) basis(i, k) = WaypointSpline::Basis(k).value(times[i]);
  }
  const Eigen::Matrix4d gram = basis.transpose() * basis;
  const Eigen::LDLT<Eigen::Matrix4d> ldlt(gram);
  ControlInput out;
  for (int j = 0; j < 2; ++j) {
    const Eigen::Vector4d w = ldlt.solve(basis.transpose() * angles.col(j));
    out.theta.row(j) = w.transpose();
  }
  for (int k = 0; k < 4; ++k) {
    out.theta(0, k) = std::clamp(out.theta(0, k), ControlInput::kAzimuthMin, ControlInput::kAzimuthMax);
    out.theta(1, k) =
        std::clamp(out.theta(1, k), ControlInput::kElevationMin, ControlInput::kElevationMax);
  }
  return out;
}

}  // namespace gvswhip
