#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace handshake {

using Vec3 = Eigen::Vector3d;

namespace skeleton {

inline constexpr std::size_t kKinectJointCount = 25;
inline constexpr std::size_t kUpperBodyJointCount = 15;

/// Kinect v2 joint indices, as written in NTU `.skeleton` files.
enum class KinectJoint : std::uint8_t {
  SpineBase = 0,
  SpineMid = 1,
  Neck = 2,
  Head = 3,
  ShoulderLeft = 4,
  ElbowLeft = 5,
  WristLeft = 6,
  HandLeft = 7,
  ShoulderRight = 8,
  ElbowRight = 9,
  WristRight = 10,
  HandRight = 11,
  HipLeft = 12,
  KneeLeft = 13,
  AnkleLeft = 14,
  FootLeft = 15,
  HipRight = 16,
  KneeRight = 17,
  AnkleRight = 18,
  FootRight = 19,
  SpineShoulder = 20,
  HandTipLeft = 21,
  ThumbLeft = 22,
  HandTipRight = 23,
  ThumbRight = 24,
};

/// Slots of the 15-joint upper-body frame. The value is the slot index.
enum class UpperJoint : std::uint8_t {
  SpineBase = 0,
  SpineMid = 1,
  SpineShoulder = 2,
  Neck = 3,
  Head = 4,
  ShoulderLeft = 5,
  ElbowLeft = 6,
  WristLeft = 7,
  HandLeft = 8,
  ShoulderRight = 9,
  ElbowRight = 10,
  WristRight = 11,
  HandRight = 12,
  HandTipLeft = 13,
  HandTipRight = 14,
};

/// Upper-body slot -> Kinect joint index. This is the single authoritative map.
inline constexpr std::array<std::size_t, kUpperBodyJointCount> kUpperBodyMap = {
    0,   // spine base
    1,   // spine mid
    20,  // spine shoulder
    2,   // neck
    3,   // head
    4,   // left shoulder
    5,   // left elbow
    6,   // left wrist
    7,   // left hand
    8,   // right shoulder
    9,   // right elbow
    10,  // right wrist
    11,  // right hand
    21,  // left hand tip
    23,  // right hand tip
};

enum class TrackingState : std::uint8_t { NotTracked = 0, Inferred = 1, Tracked = 2 };

struct RawJoint {
  Vec3 position = Vec3::Zero();
  TrackingState tracking_state = TrackingState::Tracked;

  bool operator==(const RawJoint&) const = default;
};

struct RawSkeletonFrame {
  std::array<RawJoint, kKinectJointCount> joints{};
  /// Frame ordinal within the recording (30 Hz nominal).
  std::size_t frame_index = 0;
  /// The nine body flags following the id on the body line, kept verbatim.
  std::string body_info;

  bool operator==(const RawSkeletonFrame&) const = default;
};

/// All frames of one tracked body in a recording, in file order.
struct RawSkeletonSequence {
  std::string body_id;
  std::vector<RawSkeletonFrame> frames;
  double frame_rate = 30.0;
  std::string source_label;

  bool operator==(const RawSkeletonSequence&) const = default;
};

struct UpperBodyFrame {
  std::array<Vec3, kUpperBodyJointCount> joints{};

  const Vec3& operator[](UpperJoint j) const { return joints[static_cast<std::size_t>(j)]; }
  Vec3& operator[](UpperJoint j) { return joints[static_cast<std::size_t>(j)]; }

  bool all_finite() const;
  bool operator==(const UpperBodyFrame&) const = default;
};

struct SkeletonSequence {
  std::vector<UpperBodyFrame> frames;
  double frame_rate = 30.0;
  std::string source_label;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
};

/// Parses NTU RGB+D `.skeleton` text. Returns one sequence per body id, in order of
/// first appearance. Throws EmptyInputError on empty content and ParseError otherwise.
std::vector<RawSkeletonSequence> parse_skeleton_file(std::string_view content,
                                                     std::string_view source_label = {});

/// Writes sequences back in NTU layout. Fields that are not interpreted (depth/colour
/// coordinates, orientation) are written as zero.
std::string serialize_skeleton_file(std::span<const RawSkeletonSequence> bodies);

UpperBodyFrame select_upper_body(const RawSkeletonFrame& frame);
SkeletonSequence select_upper_body(const RawSkeletonSequence& seq);

/// Picks the two longest-tracked bodies and restricts both to the frames where both are
/// present. The pair keeps the order of first appearance in the file.
std::optional<std::pair<RawSkeletonSequence, RawSkeletonSequence>> pair_bodies(
    std::span<const RawSkeletonSequence> bodies);

struct SegmentationConfig {
  double start_velocity_threshold = 0.05;  // m/s
  double grasp_distance_threshold = 0.12;  // m
  std::size_t min_length = 15;             // frames
  /// Longest run of defective frames tolerated inside a segment.
  std::size_t max_gap = 2;
  /// Frames on each side of the sliding line fits used to estimate hand speed.
  std::size_t speed_window = 15;
  /// The start frame must begin a run of this many frames above the speed threshold
  /// (shorter if the run reaches the grasp frame).
  std::size_t sustain_frames = 5;
  double discontinuity_threshold = 0.3;  // m/frame

  void validate() const;
};

struct SegmentBounds {
  std::size_t start = 0;  // first frame of the reach
  std::size_t grasp = 0;  // first frame with the right hands within the grasp distance

  std::size_t length() const { return grasp - start + 1; }
  bool operator==(const SegmentBounds&) const = default;
};

struct ReachSegment {
  SegmentBounds bounds;
  SkeletonSequence first;
  SkeletonSequence second;
};

enum class RejectionReason { NoMovement, NoGrasp, LeftHand, TooShort, TrackingGap };

std::string_view to_string(RejectionReason reason);

struct Rejection {
  RejectionReason reason;
  std::string detail;
};

using SegmentResult = std::variant<ReachSegment, Rejection>;

/// Estimated speed (m/s) of one joint per frame: the smaller of the line-fit slopes over
/// the trailing and the leading `window` frames. Non-finite samples are skipped.
std::vector<double> joint_speed(const SkeletonSequence& seq, UpperJoint joint, std::size_t window);

/// Cuts a two-person recording down to the reaching phase of a right-hand handshake.
SegmentResult segment_reach_phase(const SkeletonSequence& first, const SkeletonSequence& second,
                                  const SegmentationConfig& cfg = {});

enum class DefectKind { NonFinite, Discontinuity };

struct Defect {
  std::size_t frame;
  DefectKind kind;
  std::size_t joint;   // upper-body slot of the worst joint
  double magnitude;    // jump size in metres (NaN for non-finite frames)
};

/// One defect per affected frame; an empty result means the sequence is clean.
std::vector<Defect> validate_sequence(const SkeletonSequence& seq,
                                      double discontinuity_threshold = 0.3);

}  // namespace skeleton
}  // namespace handshake
