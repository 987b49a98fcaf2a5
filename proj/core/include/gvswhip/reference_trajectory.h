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

#ifndef GVSWHIP_REFERENCE_TRAJECTORY_H_
#define GVSWHIP_REFERENCE_TRAJECTORY_H_

#include <array>

#include <Eigen/Core>

namespace gvswhip {

inline constexpr double kHorizon = 0.5;     // s
inline constexpr double kTimeStep = 1e-3;   // s
inline constexpr int kTrajectoryLength = 501;

// Joint-angle waypoints. Row 0 drives the azimuth joint, row 1 the
// elevation joint; column k is the target at t = 0.1 (k + 1) s.
struct ControlInput {
  Eigen::Matrix<double, 2, 4> theta = Eigen::Matrix<double, 2, 4>::Zero();

  static constexpr double kAzimuthMin = -3.14159265358979323846;
  static constexpr double kAzimuthMax = 3.14159265358979323846;
  static constexpr double kElevationMin = -3.14159265358979323846 / 2.0;
  static constexpr double kElevationMax = 3.14159265358979323846 / 4.0;

  // Throws kInvalidArgument naming the violated bound.
  void Validate() const;
};

struct JointReference {
  Eigen::Vector2d angle;
  Eigen::Vector2d rate;
  Eigen::Vector2d accel;
};

// C4 quintic spline through (0, 0), the four waypoints at 0.1..0.4 s and a
// hold of the last waypoint at T = 0.5 s. Angle, rate and acceleration are
// zero at t = 0; acceleration and jerk vanish at T.
class WaypointSpline {
 public:
  static constexpr int kSegments = 5;
  static constexpr double kKnotSpacing = 0.1;

  WaypointSpline() = default;
  explicit WaypointSpline(const Eigen::Vector4d& waypoints);

  // Throws kOutOfDomain outside [0, T].
  double value(double t, int derivative = 0) const;

  // Spline of a unit waypoint k; the spline is linear in the waypoints.
  static const WaypointSpline& Basis(int k);

 private:
  std::array<Eigen::Matrix<double, 6, 1>, kSegments> coeffs_{};  // normalized local coordinate
};

JointReference reference_trajectory(const ControlInput& control, double t);

// Least-squares waypoints reproducing joint-angle samples `angles` (n x 2)
// taken at `times`. Results are clamped to the control bounds.
ControlInput FitWaypoints(const Eigen::VectorXd& times, const Eigen::MatrixXd& angles);

}  // namespace gvswhip

#endif  // GVSWHIP_REFERENCE_TRAJECTORY_H_
