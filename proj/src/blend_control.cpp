#include "handshake/blend_control.hpp"

#include <algorithm>
#include <cmath>

#include "handshake/error.hpp"

namespace handshake::control {

void BlendConfig::validate() const {
  if (!(expected_length > 0.0)) throw ContractError("expected_length must be positive");
  if (!(sigmoid_slope > 0.0)) throw ContractError("sigmoid_slope must be positive");
  if (!std::isfinite(center_fraction)) throw ContractError("center_fraction must be finite");
}

double blend_weight(double t, const BlendConfig& cfg) {
  const double x = cfg.sigmoid_slope * (t - cfg.center());
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec3 blend_target(const Vec3& h_hat, const Vec3& h_obs, double t, const BlendConfig& cfg) {
  const double w = blend_weight(t, cfg);
  return (1.0 - w) * h_hat + w * h_obs;
}

Vec3 observed_hand(const skeleton::UpperBodyFrame& partner) {
  return partner[skeleton::UpperJoint::HandRight];
}

InteractionController::InteractionController(promp::ProMP prior, kinematics::ArmModel arm,
                                             std::shared_ptr<const predictor::HandPredictor> model,
                                             ControllerOptions options)
    : prior_(std::move(prior)), arm_(std::move(arm)), session_(std::move(model)), options_(options) {
  prior_.validate();
  arm_.validate();
  options_.blend.validate();
  if (prior_.dof() != 4) throw ContractError("controller needs a 4-DoF primitive");
}

const StepRecord& InteractionController::step(const skeleton::UpperBodyFrame& partner) {
  StepRecord rec;
  rec.t = records_.size();
  rec.h_obs = observed_hand(partner);
  if (!rec.h_obs.allFinite()) throw ContractError("observed hand is not finite");

  rec.h_hat = session_.step(partner);
  Vec3 target;
  if (rec.h_hat.allFinite()) {
    target = blend_target(rec.h_hat, rec.h_obs, static_cast<double>(rec.t), options_.blend);
  } else {
    rec.flags.prediction_fallback = true;
    target = rec.h_obs;
  }
  rec.h_star = target;

  const promp::Phase ph = promp::phase(static_cast<double>(rec.t), 0.0, options_.blend.expected_length);
  rec.z = ph.z;
  rec.flags.phase_clamped = ph.clamped;

  const auto cond = promp::condition_task_space(prior_, rec.z, {target, options_.task_accuracy}, arm_,
                                                options_.conditioning);
  rec.flags.not_converged = !cond.converged;
  const Eigen::VectorXd mean = promp::marginal(cond.promp, rec.z).mean;
  rec.command = kinematics::JointAngles::from_vector(Eigen::Vector4d(mean));
  if (arm_.limits) rec.command = arm_.limits->clamp(rec.command);
  rec.fk_position = kinematics::forward_kinematics(arm_, rec.command);
  records_.push_back(rec);
  return records_.back();
}

InteractionLog InteractionController::finish() const {
  if (records_.empty()) throw ContractError("interaction has no steps");
  InteractionLog log;
  log.steps = records_;
  log.summary.steps = records_.size();
  log.summary.final_reaching_error = (records_.back().fk_position - records_.back().h_obs).norm();
  for (const auto& r : records_) {
    log.summary.fallback_steps += r.flags.prediction_fallback ? 1 : 0;
    log.summary.nonconverged_steps += r.flags.not_converged ? 1 : 0;
  }
  return log;
}

}  // namespace handshake::control
