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

#include "gvswhip/dynamics.h"

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include "gvswhip/error.h"

namespace gvswhip {
namespace {

Eigen::VectorXd RandomConfig(const RodModel& model, std::mt19937_64& rng, double soft_scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd q(model.dof());
  q[0] = std::numbers::pi * u(rng);
  q[1] = 0.5 * std::numbers::pi * u(rng);
  const int m = model.basis.degree() + 1;
  for (int i = 0; i < model.n_soft(); ++i) q[2 + i] = soft_scale * u(rng) / (1.0 + i % m);
  return q;
}

ControlInput RandomControl(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> az(ControlInput::kAzimuthMin, ControlInput::kAzimuthMax);
  std::uniform_real_distribution<double> el(ControlInput::kElevationMin,
                                            ControlInput::kElevationMax);
  ControlInput c;
  for (int k = 0; k < 4; ++k) {
    c.theta(0, k) = az(rng);
    c.theta(1, k) = el(rng);
  }
  return c;
}

SystemState BentState(const RodModel& model) {
  SystemState s;
  s.q = Eigen::VectorXd::Zero(model.dof());
  s.qd = Eigen::VectorXd::Zero(model.dof());
  const int m = model.basis.degree() + 1;
  // In-plane bending (omega_z channel) keeps the rope in the z = 0 plane.
  s.q[2 + m] = 2.0;
  s.q[2 + m + 1] = 1.0;
  s.q[2 + m + 2] = -0.5;
  return s;
}

TEST(DynamicsTest, MassMatrixSymmetricPositiveDefinite) {
  const RodModel model;
  const RodDynamics dyn(model);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd q = RandomConfig(model, rng, 3.0);
    const Eigen::MatrixXd m = dyn.Evaluate(q, Eigen::VectorXd::Zero(model.dof()), false).mass;
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0) << "trial " << trial;
  }
}

TEST(DynamicsTest, ReferenceStrainIsStressFree) {
  const RodModel model;
  std::mt19937_64 rng(2);
  Eigen::VectorXd q = RandomConfig(model, rng, 1.0);
  q.tail(model.n_soft()).setZero();
  EXPECT_EQ(stiffness_force(model, q).norm(), 0.0);
}

// Rotary inertia of the straight tapered rope about both joint axes by a
// fine midpoint rule.
TEST(DynamicsTest, StraightRodRigidInertia) {
  const RodModel model;
  const int n = 200000;
  double about_z = 0.0, about_y = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) / n;
    const double x = s * model.rod_length;
    const double r = model.radius_base + (model.radius_tip - model.radius_base) * s;
    const double area = std::numbers::pi * r * r;
    const double second = std::numbers::pi * r * r * r * r / 4.0;
    const double dx = model.rod_length / n;
    about_z += model.density * (area * x * x + second) * dx;
    about_y += model.density * (area * x * x + second) * dx;
  }
  const Eigen::MatrixXd m = mass_matrix(model, Eigen::VectorXd::Zero(model.dof()));
  EXPECT_NEAR(m(0, 0), about_z, 1e-6 * about_z);
  EXPECT_NEAR(m(1, 1), about_y, 1e-6 * about_y);
  EXPECT_NEAR(m(0, 1), 0.0, 1e-12);
}

TEST(DynamicsTest, EquilibriumWithoutGravity) {
  RodModel model;
  model.gravity.setZero();
  SystemState s;
  s.q = Eigen::VectorXd::Zero(model.dof());
  s.qd = Eigen::VectorXd::Zero(model.dof());
  EXPECT_EQ(forward_dynamics(model, s, ControlInput{}).norm(), 0.0);
}

TEST(DynamicsTest, StaticGravitySolve) {
  const RodModel model;
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    SystemState s;
    s.q = RandomConfig(model, rng, 0.5);
    s.q.head<2>().setZero();
    s.qd = Eigen::VectorXd::Zero(model.dof());
    const int ns = model.n_soft();
    const Eigen::MatrixXd m = mass_matrix(model, s.q);
    const Eigen::VectorXd rhs =
        (gravity_force(model, s.q) - stiffness_force(model, s.q)).tail(ns);
    const Eigen::VectorXd expected = m.bottomRightCorner(ns, ns).fullPivLu().solve(rhs);
    const Eigen::VectorXd qdd = forward_dynamics(model, s, ControlInput{});
    EXPECT_EQ(qdd.head<2>().norm(), 0.0);
    EXPECT_LT((qdd.tail(ns) - expected).norm(), 1e-9 * expected.norm());
  }
}

// c(q, qd) = Mdot qd - 1/2 d/dq (qd^T M qd) with both terms differenced
// numerically from mass_matrix.
TEST(DynamicsTest, CoriolisMatchesChristoffelForm) {
  const RodModel model;
  const RodDynamics dyn(model);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  const int dof = model.dof();
  auto mass = [&](const Eigen::VectorXd& q) {
    return dyn.Evaluate(q, Eigen::VectorXd::Zero(dof), false).mass;
  };
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd q = RandomConfig(model, rng, 2.0);
    Eigen::VectorXd qd(dof);
    for (int i = 0; i < dof; ++i) qd[i] = 3.0 * n(rng);
    const double h = 1e-5;
    const Eigen::MatrixXd mdot = (mass(q + h * qd) - mass(q - h * qd)) / (2 * h);
    Eigen::VectorXd grad(dof);
    for (int i = 0; i < dof; ++i) {
      Eigen::VectorXd dq = Eigen::VectorXd::Zero(dof);
      dq[i] = h;
      grad[i] = (qd.dot(mass(q + dq) * qd) - qd.dot(mass(q - dq) * qd)) / (2 * h);
    }
    const Eigen::VectorXd expected = mdot * qd - 0.5 * grad;
    const Eigen::VectorXd c = dyn.Evaluate(q, qd, true).coriolis;
    EXPECT_LT((c - expected).norm(), 1e-6 * expected.norm()) << "trial " << trial;
  }
}

// Superposition of the lowest bending modes of the straight rope; keeps the
// energy out of modes the explicit step cannot resolve.
SystemState ModalState(const RodModel& model, int n_modes) {
  const RodDynamics dyn(model);
  const int ns = model.n_soft();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(model.dof());
  const Eigen::MatrixXd m = dyn.Evaluate(zero, zero, false).mass.bottomRightCorner(ns, ns);
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(dyn.soft_stiffness(), m);
  SystemState s{zero, zero, 0.0};
  for (int k = 0; k < n_modes; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(k);
    v /= v.cwiseAbs().maxCoeff();
    s.q.tail(ns) += (k % 2 ? -2.0 : 2.0) / (k + 1) * v;
  }
  return s;
}

TEST(DynamicsTest, EnergyConservedWithoutDamping) {
  for (const bool gravity : {false, true}) {
    RodModel model;
    model.damping_coeff = 0.0;
    if (!gravity) model.gravity.setZero();
    const SystemState start = ModalState(model, 4);
    IntegrationOptions opt;
    opt.duration = 0.1;
    opt.record_points = false;
    const Trajectory traj = integrate(model, ControlInput{}, start, opt);
    ASSERT_TRUE(traj.valid);
    const RodDynamics dyn(model);
    const double e0 = dyn.Energy(start.q, start.qd);
    ASSERT_GT(e0, 0.0);
    double worst = 0.0;
    for (int r = 0; r < traj.length(); ++r) {
      const double e = dyn.Energy(traj.Q.row(r).transpose(), traj.Qd.row(r).transpose());
      worst = std::max(worst, std::abs(e - e0) / e0);
    }
    EXPECT_LT(worst, 1e-3) << "gravity " << gravity;
    EXPECT_GT(traj.Qd.cwiseAbs().maxCoeff(), 1.0);
  }
}

// dE/dt = -qd^T D qd + qd_r^T tau_r, with tau_r the force that keeps the
// joints on their reference.
TEST(DynamicsTest, PowerBalance) {
  for (const bool damped : {false, true}) {
    RodModel model;
    if (!damped) model.damping_coeff = 0.0;
    const RodDynamics dyn(model);
    ControlInput control;
    control.theta << 0.6, 1.0, 0.4, 0.2, -0.3, 0.2, 0.5, 0.1;
    IntegrationOptions opt;
    opt.dt = 2.5e-4;
    opt.duration = 0.2;
    opt.record_points = false;
    const Trajectory traj = integrate(model, control, SystemState{Eigen::VectorXd::Zero(20),
                                                                  Eigen::VectorXd::Zero(20), 0.0},
                                      opt);
    ASSERT_TRUE(traj.valid);
    const int rows = traj.length();
    std::vector<double> energy(rows), power(rows);
    for (int r = 0; r < rows; ++r) {
      const Eigen::VectorXd q = traj.Q.row(r).transpose();
      const Eigen::VectorXd qd = traj.Qd.row(r).transpose();
      energy[r] = dyn.Energy(q, qd);
      const DynamicsTerms t = dyn.Evaluate(q, qd, true);
      const Eigen::Vector2d accel = reference_trajectory(control, traj.times[r]).accel;
      const Eigen::VectorXd qdd = dyn.ForwardDynamics(q, qd, accel);
      const Eigen::VectorXd tau =
          t.mass * qdd + t.coriolis + t.stiffness + t.damping - t.gravity;
      power[r] = qd.head<2>().dot(tau.head<2>()) - qd.dot(t.damping);
    }
    // Windows of 0.05 s: rate of change from the energy record vs power.
    const int window = static_cast<int>(std::lround(0.05 / opt.dt));
    for (int start = 1; start + window < rows - 1; start += window) {
      double peak = 0.0, worst = 0.0;
      for (int r = start; r < start + window; ++r) {
        const double dedt = (energy[r + 1] - energy[r - 1]) / (2 * opt.dt);
        peak = std::max(peak, std::abs(power[r]));
        worst = std::max(worst, std::abs(dedt - power[r]));
      }
      EXPECT_LT(worst, (damped ? 1e-2 : 1e-3) * peak) << "damped " << damped << " window at "
                                                      << traj.times[start];
    }
  }
}

TEST(DynamicsTest, HangingRopeSettles) {
  RodModel model;
  model.gravity = Eigen::Vector3d(9.81, 0.0, 0.0);  // rope axis points down
  model.mass_damping = 12.0;
  const SystemState start = BentState(model);
  IntegrationOptions opt;
  opt.duration = 2.0;
  opt.record_every = 100;
  opt.record_points = false;
  const Trajectory traj = integrate(model, ControlInput{}, start, opt);
  ASSERT_TRUE(traj.valid);
  EXPECT_GT(traj.Qd.row(1).norm(), 1e-2);
  EXPECT_LT(traj.Qd.row(traj.length() - 1).norm(), 1e-3);
}

TEST(DynamicsTest, SimulateShapeAndClampedStart) {
  const RodModel model;
  std::mt19937_64 rng(8);
  const ControlInput control = RandomControl(rng);
  const Trajectory traj = simulate(model, control);
  ASSERT_TRUE(traj.valid);
  ASSERT_EQ(traj.length(), kTrajectoryLength);
  EXPECT_EQ(traj.Q.cols(), model.dof());
  EXPECT_EQ(traj.point_positions.cols(), 3 * model.n_points());
  EXPECT_EQ(traj.Q.row(0).norm(), 0.0);
  EXPECT_EQ(traj.Qd.row(0).norm(), 0.0);
  for (int r = 1; r < traj.length(); ++r) {
    EXPECT_NEAR(traj.times[r] - traj.times[r - 1], kTimeStep, 1e-15);
  }
  // Root point stays at the joint origin; the tip starts at (L, 0, 0).
  EXPECT_LT(traj.point(250, 0).norm(), 1e-15);
  EXPECT_NEAR(traj.point(0, model.n_points() - 1).x(), model.rod_length, 1e-12);
}

TEST(DynamicsTest, ZeroControlSags) {
  const RodModel model;
  const Trajectory traj = simulate(model, ControlInput{});
  ASSERT_TRUE(traj.valid);
  EXPECT_EQ(traj.Q.leftCols<2>().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT(traj.point(traj.length() - 1, model.n_points() - 1).z(), -0.05);
  EXPECT_NEAR(traj.point(traj.length() - 1, model.n_points() - 1).y(), 0.0, 1e-12);
}

TEST(DynamicsTest, PointVelocitiesMatchPositionDifferences) {
  const RodModel model;
  std::mt19937_64 rng(9);
  const Trajectory traj = simulate(model, RandomControl(rng));
  ASSERT_TRUE(traj.valid);
  const int tip = model.n_points() - 1;
  for (int r = 50; r < 450; r += 50) {
    const Eigen::Vector3d fd = (traj.point(r + 1, tip) - traj.point(r - 1, tip)) / (2 * kTimeStep);
    const Eigen::Vector3d v = traj.point_velocity(r, tip);
    EXPECT_LT((fd - v).norm(), 2e-2 * std::max(1.0, v.norm())) << "row " << r;
  }
}

TEST(DynamicsTest, Deterministic) {
  const RodModel model;
  std::mt19937_64 rng(10);
  const ControlInput control = RandomControl(rng);
  const Trajectory a = simulate(model, control);
  const Trajectory b = simulate(model, control);
  ASSERT_EQ(a.Q.size(), b.Q.size());
  EXPECT_EQ(std::memcmp(a.Q.data(), b.Q.data(), sizeof(double) * a.Q.size()), 0);
  EXPECT_EQ(std::memcmp(a.point_velocities.data(), b.point_velocities.data(),
                        sizeof(double) * a.point_velocities.size()),
            0);
}

TEST(DynamicsTest, QuadratureRefinement) {
  const RodModel coarse;
  RodModel fine;
  fine.quadrature_points = 8;
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const ControlInput control = RandomControl(rng);
    const Trajectory a = simulate(coarse, control);
    const Trajectory b = simulate(fine, control);
    ASSERT_EQ(a.valid, b.valid);
    if (!a.valid) continue;
    const int tip = coarse.n_points() - 1;
    double sup = 0.0;
    for (int r = 0; r < a.length(); ++r) sup = std::max(sup, (a.point(r, tip) - b.point(r, tip)).norm());
    EXPECT_LT(sup, 1e-3) << "trial " << trial;
  }
}

TEST(DynamicsTest, DivergenceFlagsInvalid) {
  RodModel model;
  model.damping_coeff = 1e5;  // far outside the explicit stability region
  const Trajectory traj = simulate(model, ControlInput{});
  EXPECT_FALSE(traj.valid);
  EXPECT_TRUE(std::isnan(traj.Q(traj.length() - 1, 2)));
}

TEST(DynamicsTest, ShapeMismatchThrows) {
  const RodModel model;
  EXPECT_THROW(mass_matrix(model, Eigen::VectorXd::Zero(7)), Error);
  SystemState s{Eigen::VectorXd::Zero(20), Eigen::VectorXd::Zero(3), 0.0};
  EXPECT_THROW(forward_dynamics(model, s, ControlInput{}), Error);
}

}  // namespace
}  // namespace gvswhip
