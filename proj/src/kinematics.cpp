#include "handshake/kinematics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Geometry>

#include "handshake/error.hpp"

namespace handshake::kinematics {

using skeleton::UpperJoint;

namespace {

constexpr double kMinTorsoSpacing = 0.01;
constexpr double kMinSegment = 1e-4;
constexpr double kGimbalTolerance = 1e-6;

Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Eigen::Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Eigen::Matrix3d skew(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Arm vector in the upper-arm frame: upper arm along x, forearm flexed towards +y.
Vec3 local_arm(const ArmModel& model, double elbow) {
  return {model.upper_arm_length + model.forearm_length * std::cos(elbow),
          model.forearm_length * std::sin(elbow), 0.0};
}

double median(std::vector<double> values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::remainder(a, 2.0 * pi);
  if (a <= -pi) a += 2.0 * pi;
  return a;
}

JointAngles JointLimits::clamp(const JointAngles& q) const {
  return JointAngles::from_vector(q.as_vector().cwiseMax(lower).cwiseMin(upper));
}

void ArmModel::validate() const {
  if (!(upper_arm_length > 0.0) || !(forearm_length > 0.0)) {
    throw ContractError("arm segment lengths must be positive");
  }
  if (!shoulder_origin.allFinite()) throw ContractError("shoulder origin must be finite");
  if (limits && (limits->lower.array() > limits->upper.array()).any()) {
    throw ContractError("joint limits: lower bound above upper bound");
  }
}

TorsoFrame torso_frame(const skeleton::UpperBodyFrame& frame) {
  const Vec3& left = frame[UpperJoint::ShoulderLeft];
  const Vec3& right = frame[UpperJoint::ShoulderRight];
  const Vec3& base = frame[UpperJoint::SpineBase];
  const Vec3& top = frame[UpperJoint::SpineShoulder];
  if (!(left.allFinite() && right.allFinite() && base.allFinite() && top.allFinite())) {
    throw GeometryError("torso joints are not finite");
  }
  using JointPair = std::pair<const Vec3*, const Vec3*>;
  const std::array<JointPair, 6> pairs = {JointPair{&left, &right}, JointPair{&base, &top},
                                          JointPair{&left, &base},  JointPair{&right, &base},
                                          JointPair{&left, &top},   JointPair{&right, &top}};
  for (const auto& [a, b] : pairs) {
    if ((*a - *b).norm() <= kMinTorsoSpacing) throw GeometryError("degenerate torso joints");
  }
  const Vec3 x = (right - left).normalized();
  Vec3 z = top - base;
  z -= z.dot(x) * x;
  if (z.norm() <= kMinTorsoSpacing) throw GeometryError("spine parallel to the shoulder line");
  z.normalize();
  const Vec3 y = z.cross(x);

  TorsoFrame out;
  out.origin = right;
  out.axes.col(0) = x;
  out.axes.col(1) = y;
  out.axes.col(2) = z;
  return out;
}

const Eigen::Matrix3d& shoulder_frame() {
  // columns: arm-down, forward, right (in torso coordinates)
  static const Eigen::Matrix3d frame = [] {
    Eigen::Matrix3d m;
    m << 0, 0, 1,
         0, 1, 0,
        -1, 0, 0;
    return m;
  }();
  return frame;
}

Eigen::Matrix3d shoulder_rotation(const JointAngles& q) {
  return rot_z(q.shoulder_yaw) * rot_y(q.shoulder_pitch) * rot_x(q.shoulder_roll);
}

AngleExtraction extract_joint_angles(const skeleton::UpperBodyFrame& frame) {
  const TorsoFrame torso = torso_frame(frame);
  const Vec3 shoulder = torso.to_local(frame[UpperJoint::ShoulderRight]);
  const Vec3 elbow = torso.to_local(frame[UpperJoint::ElbowRight]);
  const Vec3 wrist = torso.to_local(frame[UpperJoint::WristRight]);
  if (!(elbow.allFinite() && wrist.allFinite())) throw GeometryError("arm joints are not finite");

  const Vec3 upper = elbow - shoulder;
  const Vec3 fore = wrist - elbow;
  if (upper.norm() <= kMinSegment || fore.norm() <= kMinSegment) {
    throw GeometryError("degenerate arm segment");
  }
  const Eigen::Matrix3d& s = shoulder_frame();
  const Vec3 u = s.transpose() * upper.normalized();
  const Vec3 f = s.transpose() * fore.normalized();

  AngleExtraction out;
  JointAngles& q = out.angles;
  q.elbow = std::acos(std::clamp(u.dot(f), -1.0, 1.0));

  const double horizontal = std::hypot(u.x(), u.y());
  if (horizontal < kGimbalTolerance) {
    // Upper arm along the yaw axis: yaw and roll coincide. Put it all in yaw.
    out.gimbal_flag = true;
    q.shoulder_pitch = u.z() < 0.0 ? std::numbers::pi / 2 : -std::numbers::pi / 2;
    q.shoulder_roll = 0.0;
    const double fx = f.x(), fy = f.y();
    q.shoulder_yaw = std::hypot(fx, fy) > 1e-12 ? wrap_angle(std::atan2(fy, fx) - std::numbers::pi / 2) : 0.0;
    return out;
  }

  q.shoulder_yaw = wrap_angle(std::atan2(u.y(), u.x()));
  q.shoulder_pitch = std::atan2(-u.z(), horizontal);
  const Vec3 f_local = (rot_z(q.shoulder_yaw) * rot_y(q.shoulder_pitch)).transpose() * f;
  q.shoulder_roll = std::sin(q.elbow) > 1e-9 ? wrap_angle(std::atan2(f_local.z(), f_local.y())) : 0.0;
  return out;
}

Vec3 forward_kinematics(const ArmModel& model, const JointAngles& q) {
  return model.shoulder_origin + shoulder_frame() * shoulder_rotation(q) * local_arm(model, q.elbow);
}

Vec3 elbow_position(const ArmModel& model, const JointAngles& q) {
  return model.shoulder_origin +
         shoulder_frame() * shoulder_rotation(q) * Vec3(model.upper_arm_length, 0.0, 0.0);
}

Jacobian jacobian(const ArmModel& model, const JointAngles& q) {
  const Eigen::Matrix3d rz = rot_z(q.shoulder_yaw);
  const Eigen::Matrix3d ry = rot_y(q.shoulder_pitch);
  const Eigen::Matrix3d rx = rot_x(q.shoulder_roll);
  const Vec3 v = local_arm(model, q.elbow);
  const Vec3 dv(-model.forearm_length * std::sin(q.elbow), model.forearm_length * std::cos(q.elbow), 0.0);
  const Eigen::Matrix3d& s = shoulder_frame();

  Jacobian j;
  j.col(0) = s * skew(Vec3::UnitZ()) * rz * ry * rx * v;
  j.col(1) = s * rz * skew(Vec3::UnitY()) * ry * rx * v;
  j.col(2) = s * rz * ry * skew(Vec3::UnitX()) * rx * v;
  j.col(3) = s * rz * ry * rx * dv;
  return j;
}

ArmModel estimate_arm_model(std::span<const skeleton::SkeletonSequence> sequences, UpperJoint end) {
  std::vector<double> upper;
  std::vector<double> fore;
  for (const auto& seq : sequences) {
    for (const auto& frame : seq.frames) {
      const double lu = (frame[UpperJoint::ElbowRight] - frame[UpperJoint::ShoulderRight]).norm();
      const double lf = (frame[end] - frame[UpperJoint::ElbowRight]).norm();
      if (std::isfinite(lu) && std::isfinite(lf)) {
        upper.push_back(lu);
        fore.push_back(lf);
      }
    }
  }
  if (upper.size() < 5) throw ContractError("arm model estimation needs at least 5 frames");
  ArmModel model;
  model.shoulder_origin = Vec3::Zero();
  model.upper_arm_length = median(std::move(upper));
  model.forearm_length = median(std::move(fore));
  model.validate();
  return model;
}

ArmModel estimate_arm_model(const skeleton::SkeletonSequence& seq, UpperJoint end) {
  return estimate_arm_model(std::span<const skeleton::SkeletonSequence>(&seq, 1), end);
}

}  // namespace handshake::kinematics
