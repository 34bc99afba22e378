#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

#include "handshake/skeleton.hpp"

namespace handshake::kinematics {

using Vector4 = Eigen::Vector4d;
using Jacobian = Eigen::Matrix<double, 3, 4>;

/// Right-arm configuration. Order everywhere: yaw, pitch, roll, elbow.
///
/// The shoulder rotation is an intrinsic Z-Y-X sequence applied in the shoulder frame
/// (x down the relaxed arm, y forward, z towards the body's right). Roll turns about the
/// upper-arm axis. The elbow measures flexion away from full extension (0 = straight).
struct JointAngles {
  double shoulder_yaw = 0.0;
  double shoulder_pitch = 0.0;
  double shoulder_roll = 0.0;
  double elbow = 0.0;

  Vector4 as_vector() const { return {shoulder_yaw, shoulder_pitch, shoulder_roll, elbow}; }
  static JointAngles from_vector(const Vector4& q) { return {q[0], q[1], q[2], q[3]}; }

  bool operator==(const JointAngles&) const = default;
};

/// Per-robot command limits, applied by clamping at command time only.
struct JointLimits {
  Vector4 lower;
  Vector4 upper;

  JointAngles clamp(const JointAngles& q) const;
};

struct ArmModel {
  /// Shoulder position in the torso frame. The torso frame is centred on the right
  /// shoulder, so models estimated from skeletons have this at the origin.
  Vec3 shoulder_origin = Vec3::Zero();
  double upper_arm_length = 0.30;
  double forearm_length = 0.25;
  std::optional<JointLimits> limits;

  void validate() const;
  double reach() const { return upper_arm_length + forearm_length; }
};

/// Body-fixed frame: x from left to right shoulder, z up the spine, y = z × x (forward).
/// Origin at the right shoulder. `axes` holds the three unit axes as columns.
struct TorsoFrame {
  Vec3 origin = Vec3::Zero();
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();

  Vec3 to_local(const Vec3& world) const { return axes.transpose() * (world - origin); }
  Vec3 to_world(const Vec3& local) const { return axes * local + origin; }
};

TorsoFrame torso_frame(const skeleton::UpperBodyFrame& frame);

struct AngleExtraction {
  JointAngles angles;
  /// Set when the upper arm was within 1e-6 of the pitch singularity.
  bool gimbal_flag = false;
};

AngleExtraction extract_joint_angles(const skeleton::UpperBodyFrame& frame);

/// Constant rotation from the shoulder frame to the torso frame.
const Eigen::Matrix3d& shoulder_frame();

/// Shoulder rotation Rz(yaw) Ry(pitch) Rx(roll), expressed in the shoulder frame.
Eigen::Matrix3d shoulder_rotation(const JointAngles& q);

/// Wrist position in the torso frame.
Vec3 forward_kinematics(const ArmModel& model, const JointAngles& q);

/// Elbow position in the torso frame.
Vec3 elbow_position(const ArmModel& model, const JointAngles& q);

/// Analytic derivative of forward_kinematics with respect to (yaw, pitch, roll, elbow).
Jacobian jacobian(const ArmModel& model, const JointAngles& q);

/// Median right upper-arm and forearm lengths over the frames (at least 5). The forearm
/// runs from the elbow to `end` (the wrist, or the hand to make the hand the end-effector).
ArmModel estimate_arm_model(const skeleton::SkeletonSequence& seq,
                            skeleton::UpperJoint end = skeleton::UpperJoint::WristRight);

/// Same statistic pooled over several recordings.
ArmModel estimate_arm_model(std::span<const skeleton::SkeletonSequence> sequences,
                            skeleton::UpperJoint end = skeleton::UpperJoint::WristRight);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

}  // namespace handshake::kinematics
