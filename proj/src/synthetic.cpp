#include "handshake/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "handshake/error.hpp"
#include "handshake/io.hpp"
#include "handshake/kinematics.hpp"

namespace handshake::sim {

using kinematics::ArmModel;
using kinematics::JointAngles;
using skeleton::KinectJoint;
using skeleton::RawSkeletonFrame;
using skeleton::RawSkeletonSequence;

namespace {

constexpr double kHandOffset = 0.08;  // wrist to hand joint
constexpr double kTipOffset = 0.06;   // hand joint to hand tip
constexpr std::size_t kHoldFrames = 10;

using Pose = std::array<Vec3, skeleton::kKinectJointCount>;

Vec3& at(Pose& p, KinectJoint j) { return p[static_cast<std::size_t>(j)]; }

struct Body {
  double torso = 0.5;
  double shoulder_width = 0.38;
  double upper_arm = 0.29;
  double forearm = 0.25;

  // Body coordinates: x right, y forward, z up, origin at the spine base.
  Vec3 right_shoulder() const { return {shoulder_width / 2, 0.0, torso - 0.03}; }
  Vec3 left_shoulder() const { return {-shoulder_width / 2, 0.0, torso - 0.03}; }
  ArmModel arm() const { return {Vec3::Zero(), upper_arm, forearm, std::nullopt}; }
  ArmModel hand_arm() const { return {Vec3::Zero(), upper_arm, forearm + kHandOffset, std::nullopt}; }
};

struct ArmJoints {
  Vec3 elbow, wrist, hand, tip, thumb;
};

// Arm chain relative to the shoulder, in body coordinates.
ArmJoints arm_chain(const Body& b, const JointAngles& q) {
  const ArmModel arm = b.arm();
  ArmJoints a;
  a.elbow = kinematics::elbow_position(arm, q);
  a.wrist = kinematics::forward_kinematics(arm, q);
  const Vec3 dir = (a.wrist - a.elbow).normalized();
  a.hand = a.wrist + kHandOffset * dir;
  a.tip = a.hand + kTipOffset * dir;
  a.thumb = a.hand + 0.03 * dir + Vec3(-0.02, 0.02, 0.0);
  return a;
}

Pose body_pose(const Body& b, const JointAngles& right, const JointAngles& left_rest) {
  Pose p;
  p.fill(Vec3::Zero());
  at(p, KinectJoint::SpineBase) = Vec3::Zero();
  at(p, KinectJoint::SpineMid) = {0.0, 0.0, 0.5 * b.torso};
  at(p, KinectJoint::SpineShoulder) = {0.0, 0.0, b.torso};
  at(p, KinectJoint::Neck) = {0.0, 0.0, b.torso + 0.06};
  at(p, KinectJoint::Head) = {0.0, 0.02, b.torso + 0.22};

  const Vec3 rs = b.right_shoulder();
  const ArmJoints r = arm_chain(b, right);
  at(p, KinectJoint::ShoulderRight) = rs;
  at(p, KinectJoint::ElbowRight) = rs + r.elbow;
  at(p, KinectJoint::WristRight) = rs + r.wrist;
  at(p, KinectJoint::HandRight) = rs + r.hand;
  at(p, KinectJoint::HandTipRight) = rs + r.tip;
  at(p, KinectJoint::ThumbRight) = rs + r.thumb;

  // Left arm is the mirror image of a right-arm rest pose.
  const Vec3 ls = b.left_shoulder();
  const Eigen::Vector3d mirror(-1.0, 1.0, 1.0);
  const ArmJoints l = arm_chain(b, left_rest);
  at(p, KinectJoint::ShoulderLeft) = ls;
  at(p, KinectJoint::ElbowLeft) = ls + mirror.cwiseProduct(l.elbow);
  at(p, KinectJoint::WristLeft) = ls + mirror.cwiseProduct(l.wrist);
  at(p, KinectJoint::HandLeft) = ls + mirror.cwiseProduct(l.hand);
  at(p, KinectJoint::HandTipLeft) = ls + mirror.cwiseProduct(l.tip);
  at(p, KinectJoint::ThumbLeft) = ls + mirror.cwiseProduct(l.thumb);

  for (const double side : {-1.0, 1.0}) {
    const bool is_left = side < 0.0;
    const Vec3 hip(side * 0.09, 0.0, -0.05);
    at(p, is_left ? KinectJoint::HipLeft : KinectJoint::HipRight) = hip;
    at(p, is_left ? KinectJoint::KneeLeft : KinectJoint::KneeRight) = hip + Vec3(0.0, 0.02, -0.42);
    at(p, is_left ? KinectJoint::AnkleLeft : KinectJoint::AnkleRight) = hip + Vec3(0.0, 0.0, -0.82);
    at(p, is_left ? KinectJoint::FootLeft : KinectJoint::FootRight) = hip + Vec3(0.0, 0.1, -0.86);
  }
  return p;
}

// Damped least squares on the hand position, starting from `guess`.
JointAngles solve_reach(const Body& b, const Vec3& target, JointAngles guess) {
  const ArmModel arm = b.hand_arm();
  Eigen::Vector4d q = guess.as_vector();
  for (int iter = 0; iter < 500; ++iter) {
    const JointAngles cur = JointAngles::from_vector(q);
    const Vec3 r = target - kinematics::forward_kinematics(arm, cur);
    if (r.norm() < 1e-10) break;
    const kinematics::Jacobian j = kinematics::jacobian(arm, cur);
    const Eigen::Matrix3d jjt = j * j.transpose() + 1e-4 * Eigen::Matrix3d::Identity();
    q += j.transpose() * jjt.ldlt().solve(r);
    q[3] = std::clamp(q[3], 0.0, std::numbers::pi);
  }
  const JointAngles out = JointAngles::from_vector(q);
  if ((kinematics::forward_kinematics(arm, out) - target).norm() > 1e-4) {
    throw NumericalError("synthetic reach target is out of the arm's reach");
  }
  return out;
}

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

struct Person {
  Body body;
  Eigen::Matrix3d to_scene;  // body axes as scene columns
  Vec3 origin;               // spine base in scene coordinates
  JointAngles rest, reach, left_rest;
  std::size_t onset = 0;     // first frame of the reach
  std::size_t duration = 40;

  Pose pose_at(std::size_t t) const {
    const double tau = t <= onset ? 0.0 : static_cast<double>(t - onset) / static_cast<double>(duration);
    const double s = min_jerk(tau);
    const JointAngles q = JointAngles::from_vector((1.0 - s) * rest.as_vector() + s * reach.as_vector());
    Pose p = body_pose(body, q, left_rest);
    for (auto& v : p) v = origin + to_scene * v;
    return p;
  }

  // Scene point expressed in body coordinates relative to the right shoulder.
  Vec3 to_shoulder_local(const Vec3& scene) const {
    return to_scene.transpose() * (scene - origin) - body.right_shoulder();
  }
};

// Least-squares slope of samples x[lo..hi] against their frame index.
Vec3 slope(const std::vector<Vec3>& x, std::size_t lo, std::size_t hi) {
  const double n = static_cast<double>(hi - lo + 1);
  if (n < 2.0) return Vec3::Zero();
  const double centre = 0.5 * static_cast<double>(lo + hi);
  double denom = 0.0;
  Vec3 num = Vec3::Zero();
  for (std::size_t k = lo; k <= hi; ++k) {
    const double d = static_cast<double>(k) - centre;
    num += d * x[k];
    denom += d * d;
  }
  return num / denom;
}

double speed_at(const std::vector<Vec3>& x, std::size_t t, std::size_t window, double fps) {
  const std::size_t lo = t >= window ? t - window : 0;
  const std::size_t hi = std::min(x.size() - 1, t + window);
  return std::min(slope(x, lo, t).norm(), slope(x, t, hi).norm()) * fps;
}

std::optional<skeleton::SegmentBounds> truth_bounds(const std::vector<Vec3>& hand_a, const std::vector<Vec3>& hand_b,
                                                    const skeleton::SegmentationConfig& cfg, double fps) {
  std::optional<std::size_t> grasp;
  for (std::size_t t = 0; t < hand_a.size() && !grasp; ++t) {
    if ((hand_a[t] - hand_b[t]).norm() <= cfg.grasp_distance_threshold) grasp = t;
  }
  if (!grasp) return std::nullopt;
  const auto moving = [&](std::size_t t) {
    return std::max(speed_at(hand_a, t, cfg.speed_window, fps), speed_at(hand_b, t, cfg.speed_window, fps)) >
           cfg.start_velocity_threshold;
  };
  for (std::size_t t = 0; t <= *grasp; ++t) {
    const std::size_t last = std::min(*grasp, t + cfg.sustain_frames - 1);
    bool sustained = true;
    for (std::size_t k = t; k <= last && sustained; ++k) sustained = moving(k);
    if (sustained) return skeleton::SegmentBounds{t, *grasp};
  }
  return std::nullopt;
}

constexpr std::array<std::pair<KinectJoint, KinectJoint>, 10> kMirrorPairs = {{
    {KinectJoint::ShoulderLeft, KinectJoint::ShoulderRight},
    {KinectJoint::ElbowLeft, KinectJoint::ElbowRight},
    {KinectJoint::WristLeft, KinectJoint::WristRight},
    {KinectJoint::HandLeft, KinectJoint::HandRight},
    {KinectJoint::HipLeft, KinectJoint::HipRight},
    {KinectJoint::KneeLeft, KinectJoint::KneeRight},
    {KinectJoint::AnkleLeft, KinectJoint::AnkleRight},
    {KinectJoint::FootLeft, KinectJoint::FootRight},
    {KinectJoint::HandTipLeft, KinectJoint::HandTipRight},
    {KinectJoint::ThumbLeft, KinectJoint::ThumbRight},
}};

// Reflect across the plane spanned by the facing direction and the vertical, then swap
// left/right labels so the skeleton stays anatomically consistent.
void mirror(Pose& p) {
  for (auto& v : p) v.z() = -v.z();
  for (const auto& [l, r] : kMirrorPairs) std::swap(at(p, l), at(p, r));
}

}  // namespace

void SyntheticConfig::validate() const {
  if (count == 0) throw ContractError("synthetic dataset needs at least one recording");
  if (left_handed_count > count) throw ContractError("left_handed_count exceeds count");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ContractError("noise must be a finite non-negative value");
  if (!(frame_rate > 0.0)) throw ContractError("frame_rate must be positive");
  segmentation.validate();
}

SyntheticRecording generate_handshake(std::uint64_t seed, double noise, bool left_handed,
                                      const skeleton::SegmentationConfig& segmentation, std::string name,
                                      double frame_rate) {
  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const auto uniform_int = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  // Scene: x from the first person towards the second, y up.
  const double distance = uniform(0.55, 0.7);
  const Eigen::Matrix3d faces_forward = (Eigen::Matrix3d() << 0, 1, 0, 0, 0, 1, 1, 0, 0).finished();
  std::array<Person, 2> people;
  for (std::size_t i = 0; i < 2; ++i) {
    Person& p = people[i];
    p.body = {uniform(0.45, 0.55), uniform(0.34, 0.42), uniform(0.27, 0.32), uniform(0.23, 0.27)};
    // Body axes (right, forward, up) in scene coordinates; the second person faces back.
    const double heading = (i == 0 ? 0.0 : std::numbers::pi) + uniform(-0.1, 0.1);
    const Eigen::Matrix3d turn = Eigen::AngleAxisd(heading, Vec3::UnitY()).toRotationMatrix();
    p.to_scene = turn * faces_forward;
    p.origin = i == 0 ? Vec3(0.0, 0.0, 0.0) : Vec3(distance, uniform(-0.05, 0.05), uniform(-0.05, 0.05));
    p.rest = {uniform(0.0, 0.15), uniform(-0.08, 0.02), uniform(-0.1, 0.1), uniform(0.2, 0.35)};
    p.left_rest = {uniform(0.0, 0.1), uniform(-0.08, 0.0), uniform(-0.1, 0.1), uniform(0.2, 0.35)};
  }
  // The body axes are columns: right = forward x up.
  for (auto& p : people) p.to_scene.col(0) = p.to_scene.col(1).cross(p.to_scene.col(2));

  const double height = 0.5 * (people[0].body.torso + people[1].body.torso) - uniform(0.18, 0.28);
  const Vec3 meet(0.5 * distance + uniform(-0.05, 0.05), height, uniform(-0.05, 0.05));
  const double gap = uniform(0.02, 0.05);
  const std::size_t rest_frames = uniform_int(10, 16);
  const std::size_t reach_frames = uniform_int(58, 66);
  for (std::size_t i = 0; i < 2; ++i) {
    Person& p = people[i];
    const Vec3 hand_target = meet + (i == 0 ? -0.5 : 0.5) * gap * Vec3::UnitX();
    const JointAngles guess{uniform(0.5, 0.8), uniform(0.1, 0.3), uniform(-0.2, 0.2), uniform(0.9, 1.2)};
    p.reach = solve_reach(p.body, p.to_shoulder_local(hand_target), guess);
    p.onset = rest_frames + (i == 0 ? 0 : uniform_int(0, 2));
    p.duration = reach_frames + uniform_int(0, 4) - 2;
  }
  const std::size_t frames =
      std::max(people[0].onset + people[0].duration, people[1].onset + people[1].duration) + kHoldFrames;

  // Camera: the pair is seen side-on, about three metres away.
  const Eigen::Matrix3d camera_turn = Eigen::AngleAxisd(uniform(-0.3, 0.3), Vec3::UnitY()).toRotationMatrix();
  const Vec3 camera_offset(-0.5 * distance + uniform(-0.2, 0.2), uniform(-0.4, -0.2), uniform(2.6, 3.2));

  SyntheticRecording rec;
  rec.name = std::move(name);
  rec.truth.left_handed = left_handed;
  rec.truth.frames = frames;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::array<std::vector<Vec3>, 2> clean_hands;
  const KinectJoint shaking = left_handed ? KinectJoint::HandLeft : KinectJoint::HandRight;
  for (std::size_t i = 0; i < 2; ++i) {
    RawSkeletonSequence seq;
    seq.body_id = std::to_string(72057594037930000ULL + seed % 100000 * 10 + i);
    seq.frame_rate = frame_rate;
    seq.source_label = rec.name;
    for (std::size_t t = 0; t < frames; ++t) {
      Pose pose = people[i].pose_at(t);
      if (left_handed) mirror(pose);
      RawSkeletonFrame frame;
      frame.frame_index = t;
      frame.body_info = "0 0 0 0 0 0 0 0 2";
      for (std::size_t j = 0; j < skeleton::kKinectJointCount; ++j) {
        const Vec3 clean = camera_offset + camera_turn * pose[j];
        if (j == static_cast<std::size_t>(shaking)) clean_hands[i].push_back(clean);
        Vec3 noisy = clean;
        if (noise > 0.0) {
          for (int k = 0; k < 3; ++k) noisy[k] += noise * gauss(rng);
        }
        frame.joints[j] = {noisy, skeleton::TrackingState::Tracked};
      }
      seq.frames.push_back(std::move(frame));
    }
    rec.bodies.push_back(std::move(seq));
  }

  if (!left_handed) rec.truth.bounds = truth_bounds(clean_hands[0], clean_hands[1], segmentation, frame_rate);
  std::size_t grasp = frames - 1;
  for (std::size_t t = 0; t < frames; ++t) {
    if ((clean_hands[0][t] - clean_hands[1][t]).norm() <= segmentation.grasp_distance_threshold) {
      grasp = t;
      break;
    }
  }
  rec.truth.final_hand_first = clean_hands[0][grasp];
  rec.truth.final_hand_second = clean_hands[1][grasp];
  return rec;
}

std::vector<SyntheticRecording> generate_synthetic_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 seeds(cfg.seed);
  std::vector<SyntheticRecording> out;
  out.reserve(cfg.count);
  const std::size_t width = std::to_string(cfg.count).size();
  for (std::size_t i = 0; i < cfg.count; ++i) {
    std::string index = std::to_string(i);
    index.insert(0, std::max<std::size_t>(width, 3) - index.size(), '0');
    const bool left = i >= cfg.count - cfg.left_handed_count;
    out.push_back(generate_handshake(seeds(), cfg.noise, left, cfg.segmentation, "synthetic_" + index,
                                     cfg.frame_rate));
  }
  return out;
}

void write_synthetic_dataset(std::span<const SyntheticRecording> recordings, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& rec : recordings) {
    io::write_text_file(dir / (rec.name + ".skeleton"), skeleton::serialize_skeleton_file(rec.bodies));
    io::json truth = {{"left_handed", rec.truth.left_handed},
                      {"frames", rec.truth.frames},
                      {"final_hand_first", io::vec3_to_json(rec.truth.final_hand_first)},
                      {"final_hand_second", io::vec3_to_json(rec.truth.final_hand_second)}};
    if (rec.truth.bounds) {
      truth["segment_bounds"] = {{"start", rec.truth.bounds->start}, {"grasp", rec.truth.bounds->grasp}};
    } else {
      truth["segment_bounds"] = nullptr;
    }
    io::write_text_file(dir / (rec.name + ".truth.json"), truth.dump(2) + "\n");
  }
}

}  // namespace handshake::sim
