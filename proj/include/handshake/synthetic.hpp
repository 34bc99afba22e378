#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "handshake/skeleton.hpp"

namespace handshake::sim {

struct SyntheticConfig {
  std::size_t count = 10;
  std::uint64_t seed = 0;
  double noise = 0.005;  // m, per coordinate
  /// The last `left_handed_count` recordings shake with the left hand.
  std::size_t left_handed_count = 0;
  double frame_rate = 30.0;
  /// Used to compute the ground-truth segment bounds.
  skeleton::SegmentationConfig segmentation;

  void validate() const;
};

struct SyntheticTruth {
  bool left_handed = false;
  /// Bounds the segmentation rule yields on the noise-free recording (none if left-handed).
  std::optional<skeleton::SegmentBounds> bounds;
  /// Noise-free right hands at the grasp frame (left hands for left-handed shakes), camera frame.
  Vec3 final_hand_first = Vec3::Zero();
  Vec3 final_hand_second = Vec3::Zero();
  std::size_t frames = 0;
};

struct SyntheticRecording {
  std::string name;
  std::vector<skeleton::RawSkeletonSequence> bodies;  // two bodies, frame-aligned
  SyntheticTruth truth;
};

/// One two-person handshake: both persons rest, then reach with a minimum-jerk joint
/// profile until the hands are a few centimetres apart, then hold.
SyntheticRecording generate_handshake(std::uint64_t seed, double noise, bool left_handed,
                                      const skeleton::SegmentationConfig& segmentation, std::string name,
                                      double frame_rate = 30.0);

std::vector<SyntheticRecording> generate_synthetic_dataset(const SyntheticConfig& cfg);

/// Writes `<name>.skeleton` and `<name>.truth.json` per recording.
void write_synthetic_dataset(std::span<const SyntheticRecording> recordings, const std::filesystem::path& dir);

}  // namespace handshake::sim
