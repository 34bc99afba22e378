#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "handshake/kinematics.hpp"
#include "handshake/predictor.hpp"
#include "handshake/promp.hpp"

namespace handshake::control {

/// Blend weight w(t) = sigmoid(sigmoid_slope * (t - center_fraction * expected_length)).
struct BlendConfig {
  double expected_length = 32.0;  // frames
  double center_fraction = 0.625;
  double sigmoid_slope = 0.3;  // per frame

  double center() const { return center_fraction * expected_length; }
  void validate() const;
  bool operator==(const BlendConfig&) const = default;
};

double blend_weight(double t, const BlendConfig& cfg);

/// (1 - w) * h_hat + w * h_obs.
Vec3 blend_target(const Vec3& h_hat, const Vec3& h_obs, double t, const BlendConfig& cfg);

struct ControllerOptions {
  BlendConfig blend;
  Eigen::Matrix3d task_accuracy = Eigen::Matrix3d::Identity() * 1e-4;
  promp::TaskConditioningOptions conditioning;
};

struct StepFlags {
  bool prediction_fallback = false;  // predictor output was not finite; h_obs used instead
  bool not_converged = false;        // task-space optimiser hit its iteration cap
  bool phase_clamped = false;        // interaction ran past expected_length

  bool operator==(const StepFlags&) const = default;
};

struct StepRecord {
  std::size_t t = 0;
  Vec3 h_obs = Vec3::Zero();
  Vec3 h_hat = Vec3::Zero();
  Vec3 h_star = Vec3::Zero();
  double z = 0.0;
  kinematics::JointAngles command;
  Vec3 fk_position = Vec3::Zero();
  StepFlags flags;

  bool operator==(const StepRecord&) const = default;
};

struct InteractionSummary {
  double final_reaching_error = 0.0;  // |FK(last command) - last h_obs|, m
  std::size_t steps = 0;
  std::size_t fallback_steps = 0;
  std::size_t nonconverged_steps = 0;

  bool operator==(const InteractionSummary&) const = default;
};

struct InteractionLog {
  std::vector<StepRecord> steps;
  InteractionSummary summary;

  bool operator==(const InteractionLog&) const = default;
};

/// Streams partner frames, already expressed in the robot's torso frame, and emits one
/// arm command per frame. The primitive is re-conditioned from the prior at every step.
class InteractionController {
 public:
  InteractionController(promp::ProMP prior, kinematics::ArmModel arm,
                        std::shared_ptr<const predictor::HandPredictor> model, ControllerOptions options = {});

  const StepRecord& step(const skeleton::UpperBodyFrame& partner);
  std::size_t step_count() const { return records_.size(); }

  /// Throws ContractError before the first step.
  InteractionLog finish() const;

 private:
  promp::ProMP prior_;
  kinematics::ArmModel arm_;
  predictor::PredictorSession session_;
  ControllerOptions options_;
  std::vector<StepRecord> records_;
};

/// Partner hand observed in a frame (the right hand joint).
Vec3 observed_hand(const skeleton::UpperBodyFrame& partner);

}  // namespace handshake::control
