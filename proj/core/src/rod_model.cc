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

#include "gvswhip/rod_model.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gvswhip/error.h"
#include "gvswhip/hash.h"

namespace gvswhip {

using nlohmann::json;

Eigen::VectorXd ShiftedLegendre(int degree, double s) {
  Eigen::VectorXd p(degree + 1);
  const double x = 2.0 * s - 1.0;
  p[0] = 1.0;
  if (degree >= 1) p[1] = x;
  for (int k = 1; k < degree; ++k) {
    p[k + 1] = ((2.0 * k + 1.0) * x * p[k] - k * p[k - 1]) / (k + 1.0);
  }
  return p;
}

StrainBasis::StrainBasis(int degree, std::vector<int> channels, const Twist& reference_strain)
    : degree_(degree), channels_(std::move(channels)), reference_strain_(reference_strain) {
  if (degree_ < 0) throw Error(ErrorCode::kInvalidArgument, "basis degree must be >= 0");
  for (int c : channels_) {
    if (c < 0 || c > 5) throw Error(ErrorCode::kInvalidArgument, "strain channel outside 0..5");
  }
}

Matrix6X StrainBasis::evaluate(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw Error(ErrorCode::kOutOfDomain,
                "strain basis evaluated at s = " + std::to_string(s) + " outside [0, 1]");
  }
  const Eigen::VectorXd p = ShiftedLegendre(degree_, s);
  Matrix6X phi = Matrix6X::Zero(6, n_dof());
  const int m = degree_ + 1;
  for (int c = 0; c < static_cast<int>(channels_.size()); ++c) {
    phi.block(channels_[c], c * m, 1, m) = p.transpose();
  }
  return phi;
}

double RodModel::area(double s) const {
  const double r = radius(s);
  return std::numbers::pi * r * r;
}

double RodModel::second_moment(double s) const {
  const double r = radius(s);
  return std::numbers::pi * r * r * r * r / 4.0;
}

Vector6 RodModel::section_inertia(double s) const {
  const double a = area(s);
  const double i = second_moment(s);
  Vector6 m;
  m << 2.0 * i, i, i, a, a, a;
  return density * m;
}

Vector6 RodModel::section_stiffness(double s) const {
  const double a = area(s);
  const double i = second_moment(s);
  Vector6 k;
  k << shear_modulus * 2.0 * i, youngs_modulus * i, youngs_modulus * i, youngs_modulus * a,
      shear_modulus * a, shear_modulus * a;
  return k;
}

Vector6 RodModel::section_damping(double s) const {
  const double a = area(s);
  const double i = second_moment(s);
  Vector6 d;
  d << 2.0 * i, i, i, a, a, a;
  return damping_coeff * d;
}

void RodModel::Validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (!(rod_length > 0.0)) fail("rod_length must be positive");
  if (!(radius_base > 0.0) || !(radius_tip > 0.0)) fail("radius profile must stay positive");
  if (!(youngs_modulus > 0.0) || !(shear_modulus > 0.0)) fail("moduli must be positive");
  if (!(density > 0.0)) fail("density must be positive");
  if (damping_coeff < 0.0 || mass_damping < 0.0) fail("damping must be non-negative");
  if (n_intervals < 1) fail("n_intervals must be >= 1");
  if (quadrature_points < 1 || quadrature_points > 8) fail("quadrature_points must be in 1..8");
  for (const auto& j : joints) {
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) fail("joint axes must be unit vectors");
  }
}

namespace {

json PoseToJson(const Pose& p) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(p.rotation()(r, c));
  return json{{"rotation", rot},
              {"translation", {p.translation().x(), p.translation().y(), p.translation().z()}}};
}

Pose PoseFromJson(const json& j) {
  Eigen::Matrix3d r;
  const auto& rot = j.at("rotation");
  for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rot.at(i).get<double>();
  const auto& t = j.at("translation");
  return Pose(r, Eigen::Vector3d(t.at(0).get<double>(), t.at(1).get<double>(),
                                 t.at(2).get<double>()));
}

json ToJsonObject(const RodModel& m) {
  json joints = json::array();
  for (const auto& jt : m.joints) {
    joints.push_back({{"axis", {jt.axis.x(), jt.axis.y(), jt.axis.z()}},
                      {"offset", PoseToJson(jt.offset)}});
  }
  json ref = json::array();
  for (int i = 0; i < 6; ++i) ref.push_back(m.basis.reference_strain()[i]);
  return json{
      {"rod_length", m.rod_length},
      {"radius_base", m.radius_base},
      {"radius_tip", m.radius_tip},
      {"youngs_modulus", m.youngs_modulus},
      {"shear_modulus", m.shear_modulus},
      {"density", m.density},
      {"damping_coeff", m.damping_coeff},
      {"mass_damping", m.mass_damping},
      {"gravity", {m.gravity.x(), m.gravity.y(), m.gravity.z()}},
      {"n_intervals", m.n_intervals},
      {"quadrature_points", m.quadrature_points},
      {"basis_degree", m.basis.degree()},
      {"strain_channels", m.basis.channels()},
      {"reference_strain", ref},
      {"joints", joints},
  };
}

}  // namespace

std::string ToJson(const RodModel& model) { return ToJsonObject(model).dump(2); }

RodModel RodModelFromJson(const std::string& text) {
  RodModel m;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormatError, std::string("rod model config: ") + e.what());
  }
  try {
    // Missing keys keep their defaults.
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("rod_length", m.rod_length);
    get("radius_base", m.radius_base);
    get("radius_tip", m.radius_tip);
    get("youngs_modulus", m.youngs_modulus);
    get("shear_modulus", m.shear_modulus);
    get("density", m.density);
    get("damping_coeff", m.damping_coeff);
    get("mass_damping", m.mass_damping);
    get("n_intervals", m.n_intervals);
    get("quadrature_points", m.quadrature_points);
    if (j.contains("gravity")) {
      const auto& g = j.at("gravity");
      m.gravity = Eigen::Vector3d(g.at(0).get<double>(), g.at(1).get<double>(),
                                  g.at(2).get<double>());
    }
    int degree = m.basis.degree();
    std::vector<int> channels = m.basis.channels();
    Twist ref = m.basis.reference_strain();
    get("basis_degree", degree);
    get("strain_channels", channels);
    if (j.contains("reference_strain")) {
      Vector6 r;
      for (int i = 0; i < 6; ++i) r[i] = j.at("reference_strain").at(i).get<double>();
      ref = Twist(r);
    }
    m.basis = StrainBasis(degree, channels, ref);
    if (j.contains("joints")) {
      const auto& js = j.at("joints");
      for (int k = 0; k < 2; ++k) {
        const auto& a = js.at(k).at("axis");
        m.joints[k].axis =
            Eigen::Vector3d(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
        if (js.at(k).contains("offset")) m.joints[k].offset = PoseFromJson(js.at(k).at("offset"));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("rod model config: ") + e.what());
  }
  m.Validate();
  return m;
}

RodModel LoadRodModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open rod model config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return RodModelFromJson(ss.str());
}

void SaveRodModel(const RodModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write rod model config " + path);
  out << ToJson(model) << "\n";
}

std::uint64_t RodModel::Hash() const {
  return Fnv1a(ToJsonObject(*this).dump());
}

}  // namespace gvswhip
