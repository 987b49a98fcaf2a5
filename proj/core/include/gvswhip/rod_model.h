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

#ifndef GVSWHIP_ROD_MODEL_H_
#define GVSWHIP_ROD_MODEL_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gvswhip/se3.h"

namespace gvswhip {

using Matrix6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;

// Strain field basis over normalized arclength s in [0, 1]. Each enabled
// channel (a row of the strain twist) is spanned by shifted Legendre
// polynomials P_0 .. P_degree; all other channels stay at the reference
// strain.
class StrainBasis {
 public:
  StrainBasis() = default;
  StrainBasis(int degree, std::vector<int> channels, const Twist& reference_strain);

  int degree() const { return degree_; }
  const std::vector<int>& channels() const { return channels_; }
  int n_dof() const { return static_cast<int>(channels_.size()) * (degree_ + 1); }
  const Twist& reference_strain() const { return reference_strain_; }

  // Phi(s), 6 x n_dof. Throws kOutOfDomain outside [0, 1].
  Matrix6X evaluate(double s) const;

 private:
  int degree_ = 8;
  std::vector<int> channels_ = {1, 2};
  Twist reference_strain_ = Twist(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX());
};

// Shifted Legendre polynomials P_k(2s - 1), k = 0..degree.
Eigen::VectorXd ShiftedLegendre(int degree, double s);

struct RigidJoint {
  Eigen::Vector3d axis;  // revolute axis in the joint's own frame
  Pose offset;           // fixed transform applied before the joint rotation

  Vector6 screw() const {
    Vector6 s;
    s << axis, Eigen::Vector3d::Zero();
    return s;
  }
};

// Two revolute joints (azimuth about world z, then elevation about the
// rotated y) carrying a tapered rope whose root sits at the second joint
// frame and whose reference axis is the local x axis.
struct RodModel {
  std::array<RigidJoint, 2> joints = {
      RigidJoint{Eigen::Vector3d::UnitZ(), Pose::Identity()},
      RigidJoint{Eigen::Vector3d::UnitY(), Pose::Identity()}};
  double rod_length = 0.5;       // m
  double radius_base = 0.012;    // m
  double radius_tip = 0.006;     // m
  double youngs_modulus = 1e6;   // Pa
  double shear_modulus = 1e6 / 3.0;
  double density = 1000.0;       // kg/m^3
  double damping_coeff = 1e3;    // Pa*s, Kelvin-Voigt viscosity on strain rates
  double mass_damping = 0.0;     // 1/s, mass-proportional damping on soft DoF
  Eigen::Vector3d gravity = Eigen::Vector3d(0.0, 0.0, -9.81);
  int n_intervals = 20;
  int quadrature_points = 4;  // Gauss-Legendre points per interval for M, K, D
  StrainBasis basis;

  static constexpr int kRigidDof = 2;

  int n_soft() const { return basis.n_dof(); }
  int dof() const { return kRigidDof + n_soft(); }
  int n_points() const { return n_intervals + 1; }

  double radius(double s) const { return radius_base + (radius_tip - radius_base) * s; }
  double area(double s) const;
  double second_moment(double s) const;  // I_yy = I_zz

  // Per-unit-length inertia diag(rho*Jp, rho*I, rho*I, rho*A, rho*A, rho*A).
  Vector6 section_inertia(double s) const;
  // diag(G*Jp, E*I, E*I, E*A, G*A, G*A).
  Vector6 section_stiffness(double s) const;
  Vector6 section_damping(double s) const;

  // Throws kInvalidArgument on a model that violates its invariants.
  void Validate() const;

  // Stable 64-bit digest of the serialized model.
  std::uint64_t Hash() const;
};

std::string ToJson(const RodModel& model);
RodModel RodModelFromJson(const std::string& text);
RodModel LoadRodModel(const std::string& path);
void SaveRodModel(const RodModel& model, const std::string& path);

}  // namespace gvswhip

#endif  // GVSWHIP_ROD_MODEL_H_
