#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "handshake/kinematics.hpp"
#include "handshake/promp.hpp"
#include "handshake/skeleton.hpp"

namespace fixtures {

using handshake::Vec3;
using handshake::skeleton::UpperBodyFrame;
using handshake::skeleton::UpperJoint;

// Upright person at the origin facing +y, z up, right shoulder at (0.19, 0, 0.47).
inline UpperBodyFrame standing_frame() {
  UpperBodyFrame f;
  f[UpperJoint::SpineBase] = {0, 0, 0};
  f[UpperJoint::SpineMid] = {0, 0, 0.25};
  f[UpperJoint::SpineShoulder] = {0, 0, 0.5};
  f[UpperJoint::Neck] = {0, 0, 0.56};
  f[UpperJoint::Head] = {0, 0.02, 0.72};
  f[UpperJoint::ShoulderLeft] = {-0.19, 0, 0.47};
  f[UpperJoint::ElbowLeft] = {-0.2, 0.02, 0.18};
  f[UpperJoint::WristLeft] = {-0.2, 0.08, -0.06};
  f[UpperJoint::HandLeft] = {-0.2, 0.1, -0.13};
  f[UpperJoint::HandTipLeft] = {-0.2, 0.12, -0.19};
  f[UpperJoint::ShoulderRight] = {0.19, 0, 0.47};
  f[UpperJoint::ElbowRight] = {0.2, 0.02, 0.18};
  f[UpperJoint::WristRight] = {0.2, 0.08, -0.06};
  f[UpperJoint::HandRight] = {0.2, 0.1, -0.13};
  f[UpperJoint::HandTipRight] = {0.2, 0.12, -0.19};
  return f;
}

// Frame whose right arm is posed by `q` on `arm`, using the standing torso.
inline UpperBodyFrame posed_frame(const handshake::kinematics::ArmModel& arm,
                                  const handshake::kinematics::JointAngles& q) {
  UpperBodyFrame f = standing_frame();
  const Vec3 shoulder = f[UpperJoint::ShoulderRight];
  // Torso frame of standing_frame: x = +x, y = +y, z = +z, origin at the right shoulder.
  f[UpperJoint::ElbowRight] = shoulder + handshake::kinematics::elbow_position(arm, q);
  f[UpperJoint::WristRight] = shoulder + handshake::kinematics::forward_kinematics(arm, q);
  const Vec3 dir = (f[UpperJoint::WristRight] - f[UpperJoint::ElbowRight]).normalized();
  f[UpperJoint::HandRight] = f[UpperJoint::WristRight] + 0.08 * dir;
  f[UpperJoint::HandTipRight] = f[UpperJoint::HandRight] + 0.06 * dir;
  return f;
}

inline handshake::kinematics::JointAngles random_angles(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> shoulder(-1.3, 1.3);
  std::uniform_real_distribution<double> elbow(0.15, 2.6);
  return {shoulder(rng), shoulder(rng), shoulder(rng), elbow(rng)};
}

// 4-DoF primitive for a gentle forward reach, about 0.2 rad of spread per joint.
inline handshake::promp::ProMP arm_prior() {
  using Eigen::MatrixXd;
  const auto basis = handshake::promp::BasisConfig::equally_spaced(3);
  Eigen::VectorXd mean(12);
  mean << 0.1, 0.5, 0.9, 0.0, 0.1, 0.2, 0.0, 0.2, 0.3, 0.3, 0.8, 1.2;
  MatrixXd cov = 0.04 * MatrixXd::Identity(12, 12);
  for (int d = 0; d < 4; ++d) cov.block(3 * d, 3 * d, 3, 3).array() += 0.02;
  return handshake::promp::ProMP(basis, mean, cov, 1e-4 * MatrixXd::Identity(4, 4));
}

}  // namespace fixtures
