#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>

#include "fixtures.hpp"
#include "handshake/blend_control.hpp"
#include "handshake/error.hpp"

using namespace handshake;
using namespace handshake::control;
using skeleton::UpperBodyFrame;
using skeleton::UpperJoint;

namespace {

// Predictor whose output is always `point` while the partner's spine base stays at the origin.
std::shared_ptr<predictor::HandPredictor> constant_predictor(const Vec3& point) {
  predictor::PredictorConfig cfg;
  cfg.layers = 1;
  cfg.hidden_dim = 2;
  auto model = std::make_shared<predictor::HandPredictor>(
      predictor::HandPredictor{predictor::PredictorWeights(cfg), {0.5}});
  model->weights.head_bias() = point / 0.5;
  return model;
}

UpperBodyFrame partner_with_hand(const Vec3& hand) {
  UpperBodyFrame f = fixtures::standing_frame();
  f[UpperJoint::HandRight] = hand;
  return f;
}

}  // namespace

TEST_SUITE("blend_control") {
  TEST_CASE("blend weight shape") {
    BlendConfig cfg;
    CHECK(blend_weight(cfg.center(), cfg) == doctest::Approx(0.5));
    CHECK(blend_weight(0.0, cfg) < 0.01);
    CHECK(blend_weight(2.0 * cfg.center(), cfg) > 0.99);
    CHECK(blend_weight(1e6, cfg) == doctest::Approx(1.0));
    CHECK(blend_weight(-1e6, cfg) == doctest::Approx(0.0));
    for (double t = 0.0; t < 60.0; t += 0.5) CHECK(blend_weight(t + 0.5, cfg) > blend_weight(t, cfg));
    // Logistic function written out directly.
    CHECK(blend_weight(7.0, cfg) == doctest::Approx(1.0 / (1.0 + std::exp(-0.3 * (7.0 - 20.0)))));

    const Vec3 a(1, 0, 0), b(0, 1, 0);
    CHECK((blend_target(a, b, cfg.center(), cfg) - Vec3(0.5, 0.5, 0)).norm() < 1e-12);
    // Far enough from the centre that the weight is below 1e-6.
    const double far = 14.0 / cfg.sigmoid_slope;
    CHECK(blend_weight(cfg.center() - far, cfg) < 1e-6);
    CHECK((blend_target(a, b, cfg.center() - far, cfg) - a).norm() < 1e-6 * (a - b).norm());
    CHECK((blend_target(a, b, cfg.center() + far, cfg) - b).norm() < 1e-6 * (a - b).norm());
    BlendConfig bad;
    bad.expected_length = 0.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }

  TEST_CASE("stationary partner hand is reached") {
    const kinematics::ArmModel arm;
    const Vec3 hand = kinematics::forward_kinematics(arm, {0.6, 0.05, 0.2, 0.9});
    InteractionController ctl(fixtures::arm_prior(), arm, constant_predictor(Vec3(0.4, 0.5, 0.3)));
    for (int t = 0; t < 60; ++t) ctl.step(partner_with_hand(hand));
    const auto log = ctl.finish();
    CHECK(log.summary.final_reaching_error < 5e-3);
    CHECK(log.summary.steps == 60);
    CHECK(log.steps.back().flags.phase_clamped);
    CHECK_FALSE(log.steps.front().flags.phase_clamped);
    const auto& last = log.steps.back();
    CHECK(log.summary.final_reaching_error == doctest::Approx((last.fk_position - last.h_obs).norm()));
  }

  TEST_CASE("commands settle for a stationary hand that is predicted correctly") {
    const kinematics::ArmModel arm;
    const Vec3 hand = kinematics::forward_kinematics(arm, {0.5, 0.1, 0.0, 1.1});
    ControllerOptions opts;
    InteractionController ctl(fixtures::arm_prior(), arm, constant_predictor(hand), opts);
    kinematics::JointAngles previous;
    for (int t = 0; t < 40; ++t) {
      const auto& rec = ctl.step(partner_with_hand(hand));
      if (t >= 0.9 * opts.blend.expected_length) {
        CHECK((rec.command.as_vector() - previous.as_vector()).norm() < 1e-3);
      }
      previous = rec.command;
    }
  }

  TEST_CASE("a one-step log") {
    InteractionController ctl(fixtures::arm_prior(), kinematics::ArmModel{}, constant_predictor(Vec3(0.2, 0.4, 0)));
    const auto& rec = ctl.step(partner_with_hand(Vec3(0.2, 0.4, -0.1)));
    const auto log = ctl.finish();
    REQUIRE(log.steps.size() == 1);
    CHECK(log.summary.final_reaching_error == (rec.fk_position - rec.h_obs).norm());
    CHECK(rec.fk_position == kinematics::forward_kinematics(kinematics::ArmModel{}, rec.command));
  }

  TEST_CASE("without task information the command is the prior mean") {
    ControllerOptions opts;
    opts.task_accuracy = 1e12 * Eigen::Matrix3d::Identity();
    const auto prior = fixtures::arm_prior();
    InteractionController ctl(prior, kinematics::ArmModel{}, constant_predictor(Vec3(0.3, 0.3, 0.0)), opts);
    for (int t = 0; t < 40; ++t) {
      const auto& rec = ctl.step(partner_with_hand(Vec3(0.3, 0.4, -0.1)));
      const auto mean = promp::marginal(prior, rec.z).mean;
      CHECK((rec.command.as_vector() - mean).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  TEST_CASE("linear approach ends within two centimetres") {
    const kinematics::ArmModel arm;
    const Vec3 meet = kinematics::forward_kinematics(arm, {0.7, 0.0, 0.1, 0.8});
    const Vec3 start = meet + Vec3(0.05, 0.35, -0.1);
    InteractionController ctl(fixtures::arm_prior(), arm, constant_predictor(meet));
    for (int t = 0; t < 32; ++t) {
      const double s = std::min(1.0, t / 31.0);
      const auto& rec = ctl.step(partner_with_hand((1 - s) * start + s * meet));
      CHECK_FALSE(rec.flags.prediction_fallback);
    }
    CHECK(ctl.finish().summary.final_reaching_error < 0.02);
  }

  TEST_CASE("non-finite predictions fall back to the observation") {
    auto model = constant_predictor(Vec3::Zero());
    model->weights.head_bias()[1] = std::numeric_limits<double>::quiet_NaN();
    InteractionController ctl(fixtures::arm_prior(), kinematics::ArmModel{}, model);
    const Vec3 hand(0.1, 0.4, -0.2);
    const auto& rec = ctl.step(partner_with_hand(hand));
    CHECK(rec.flags.prediction_fallback);
    CHECK(rec.h_star == hand);
    CHECK(ctl.finish().summary.fallback_steps == 1);
  }

  TEST_CASE("contracts") {
    InteractionController ctl(fixtures::arm_prior(), kinematics::ArmModel{}, constant_predictor(Vec3::Zero()));
    CHECK_THROWS_AS(ctl.finish(), ContractError);
    promp::ProMP two_dof(promp::BasisConfig::equally_spaced(3), Eigen::VectorXd::Zero(6),
                         Eigen::MatrixXd::Identity(6, 6), Eigen::MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(InteractionController(two_dof, kinematics::ArmModel{}, constant_predictor(Vec3::Zero())),
                    ContractError);
  }
}
