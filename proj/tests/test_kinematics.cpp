#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "handshake/error.hpp"
#include "handshake/kinematics.hpp"

using namespace handshake;
using namespace handshake::kinematics;
using handshake::skeleton::UpperBodyFrame;
using handshake::skeleton::UpperJoint;

namespace {

// Builds the wrist position from axis-angle rotations about the body's own axes:
// down, forward and right are the shoulder frame's x, y and z.
Vec3 fk_oracle(const ArmModel& arm, const JointAngles& q) {
  const Vec3 down(0, 0, -1), forward(0, 1, 0), right(1, 0, 0);
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(q.shoulder_yaw, right) *
                             Eigen::AngleAxisd(q.shoulder_pitch, forward) *
                             Eigen::AngleAxisd(q.shoulder_roll, down))
                                .toRotationMatrix();
  // r acts on shoulder-frame coordinates mapped into the torso frame.
  Eigen::Matrix3d s;
  s.col(0) = down;
  s.col(1) = forward;
  s.col(2) = right;
  const Eigen::Matrix3d in_shoulder = s.transpose() * r * s;
  const Vec3 local(arm.upper_arm_length + arm.forearm_length * std::cos(q.elbow),
                   arm.forearm_length * std::sin(q.elbow), 0.0);
  return arm.shoulder_origin + s * in_shoulder * local;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond quat(g(rng), g(rng), g(rng), g(rng));
  return quat.normalized().toRotationMatrix();
}

}  // namespace

TEST_SUITE("kinematics") {
  TEST_CASE("forward kinematics matches an axis-angle construction") {
    std::mt19937_64 rng(1);
    ArmModel arm;
    arm.shoulder_origin = {0.01, -0.02, 0.03};
    for (int i = 0; i < 200; ++i) {
      const auto q = fixtures::random_angles(rng);
      CHECK((forward_kinematics(arm, q) - fk_oracle(arm, q)).norm() < 1e-12);
    }
    // Straight arm at rest hangs down the body.
    CHECK((forward_kinematics(arm, {}) - (arm.shoulder_origin + Vec3(0, 0, -arm.reach()))).norm() < 1e-12);
    // Positive yaw swings the straight arm forward.
    CHECK(forward_kinematics(arm, {0.3, 0, 0, 0}).y() > 0.0);
  }

  TEST_CASE("analytic Jacobian agrees with central differences") {
    std::mt19937_64 rng(2);
    ArmModel arm;
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const auto q = fixtures::random_angles(rng);
      const Jacobian j = jacobian(arm, q);
      Jacobian fd;
      const double h = 1e-6;
      for (int k = 0; k < 4; ++k) {
        Vector4 qp = q.as_vector(), qm = q.as_vector();
        qp[k] += h;
        qm[k] -= h;
        fd.col(k) = (fk_oracle(arm, JointAngles::from_vector(qp)) - fk_oracle(arm, JointAngles::from_vector(qm))) /
                    (2 * h);
      }
      worst = std::max(worst, (j - fd).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("torso frame is right-handed and orthonormal") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.02);
    for (int i = 0; i < 50; ++i) {
      auto f = fixtures::standing_frame();
      for (auto& p : f.joints) p += Vec3(g(rng), g(rng), g(rng));
      const auto t = torso_frame(f);
      CHECK((t.axes.transpose() * t.axes - Eigen::Matrix3d::Identity()).norm() < 1e-12);
      CHECK(t.axes.determinant() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(t.origin == f[UpperJoint::ShoulderRight]);
    }
    const auto t = torso_frame(fixtures::standing_frame());
    CHECK((t.axes - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  }

  TEST_CASE("degenerate torso") {
    auto f = fixtures::standing_frame();
    f[UpperJoint::ShoulderLeft] = f[UpperJoint::ShoulderRight];
    CHECK_THROWS_AS(torso_frame(f), GeometryError);
    auto g = fixtures::standing_frame();
    g[UpperJoint::SpineShoulder] = {0.5, 0, 0};
    g[UpperJoint::SpineBase] = {-0.5, 0, 0};
    CHECK_THROWS_AS(torso_frame(g), GeometryError);
    auto h = fixtures::standing_frame();
    h[UpperJoint::WristRight] = h[UpperJoint::ElbowRight];
    CHECK_THROWS_AS(extract_joint_angles(h), GeometryError);
  }

  TEST_CASE("extraction then forward kinematics reproduces the wrist") {
    std::mt19937_64 rng(4);
    ArmModel arm{Vec3::Zero(), 0.29, 0.26, std::nullopt};
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
      const auto q = fixtures::random_angles(rng);
      const auto frame = fixtures::posed_frame(arm, q);
      const auto ex = extract_joint_angles(frame);
      const Vec3 wrist_local = torso_frame(frame).to_local(frame[UpperJoint::WristRight]);
      worst = std::max(worst, (forward_kinematics(arm, ex.angles) - wrist_local).norm());
      // Elbow flexion is the angle between the two arm segments.
      const Vec3 u = frame[UpperJoint::ElbowRight] - frame[UpperJoint::ShoulderRight];
      const Vec3 v = frame[UpperJoint::WristRight] - frame[UpperJoint::ElbowRight];
      CHECK(ex.angles.elbow == doctest::Approx(std::acos(u.normalized().dot(v.normalized()))).epsilon(1e-9));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("angles are invariant under rigid motion of the whole body") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    ArmModel arm;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto frame = fixtures::posed_frame(arm, fixtures::random_angles(rng));
      const Eigen::Matrix3d r = random_rotation(rng);
      const Vec3 t(g(rng), g(rng), g(rng));
      UpperBodyFrame moved = frame;
      for (auto& p : moved.joints) p = r * p + t;
      const auto a = extract_joint_angles(frame).angles.as_vector();
      const auto b = extract_joint_angles(moved).angles.as_vector();
      for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(wrap_angle(a[k] - b[k])));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("upper arm pointing sideways raises the gimbal flag") {
    ArmModel arm;
    auto f = fixtures::standing_frame();
    const Vec3 s = f[UpperJoint::ShoulderRight];
    f[UpperJoint::ElbowRight] = s + Vec3(0.3, 0, 0);
    f[UpperJoint::WristRight] = s + Vec3(0.3, 0.25, 0);
    const auto ex = extract_joint_angles(f);
    CHECK(ex.gimbal_flag);
    CHECK(std::isfinite(ex.angles.shoulder_yaw));
    CHECK((forward_kinematics(arm, ex.angles) - Vec3(0.3, 0.25, 0)).norm() < 1e-9);
    CHECK_FALSE(extract_joint_angles(fixtures::posed_frame(arm, {0.2, 0.3, 0.1, 1.0})).gimbal_flag);
  }

  TEST_CASE("arm model estimation takes medians") {
    skeleton::SkeletonSequence seq;
    const double uppers[] = {0.30, 0.31, 0.29, 0.5, 0.30, 0.305, 0.295};
    for (const double lu : uppers) {
      auto f = fixtures::standing_frame();
      const Vec3 s = f[UpperJoint::ShoulderRight];
      f[UpperJoint::ElbowRight] = s + Vec3(0, 0, -lu);
      f[UpperJoint::WristRight] = f[UpperJoint::ElbowRight] + Vec3(0, 0.24, 0);
      f[UpperJoint::HandTipRight] = f[UpperJoint::ElbowRight] + Vec3(0, 0.38, 0);
      seq.frames.push_back(f);
    }
    const auto arm = estimate_arm_model(seq);
    CHECK(arm.upper_arm_length == doctest::Approx(0.30));
    CHECK(arm.forearm_length == doctest::Approx(0.24));
    CHECK(estimate_arm_model(seq, UpperJoint::HandTipRight).forearm_length == doctest::Approx(0.38));
    seq.frames.resize(4);
    CHECK_THROWS_AS(estimate_arm_model(seq), ContractError);
  }

  TEST_CASE("limits and angle wrapping") {
    JointLimits lim{Vector4(-1, -1, -1, 0), Vector4(1, 1, 1, 2)};
    const auto c = lim.clamp({-3, 0.5, 4, -0.1});
    CHECK(c == JointAngles{-1, 0.5, 1, 0});
    CHECK(wrap_angle(3 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(0.5 - 4 * std::numbers::pi) == doctest::Approx(0.5));
    ArmModel bad;
    bad.forearm_length = 0.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }
}
