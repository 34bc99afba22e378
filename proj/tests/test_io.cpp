#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "handshake/error.hpp"
#include "handshake/io.hpp"

using namespace handshake;
using namespace handshake::io;

TEST_SUITE("io") {
  TEST_CASE("matrix layout is row-major") {
    Eigen::MatrixXd m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const json j = matrix_to_json(m);
    CHECK(j.at("rows") == 2);
    CHECK(j.at("cols") == 3);
    CHECK(j.at("data") == json::array({1, 2, 3, 4, 5, 6}));
    CHECK(matrix_from_json(j) == m);
    json bad = j;
    bad["cols"] = 4;
    CHECK_THROWS_AS(matrix_from_json(bad), ContractError);
  }

  TEST_CASE("model round trips") {
    const auto p = fixtures::arm_prior();
    const auto q = promp_from_json(json::parse(promp_to_json(p).dump()));
    CHECK(q.basis() == p.basis());
    CHECK(q.mean_weights() == p.mean_weights());
    CHECK(q.weight_cov() == p.weight_cov());
    CHECK(q.obs_noise() == p.obs_noise());

    kinematics::ArmModel arm{Vec3(0.01, 0.02, 0.03), 0.31, 0.27,
                             kinematics::JointLimits{Eigen::Vector4d(-1, -2, -3, 0), Eigen::Vector4d(1, 2, 3, 2.5)}};
    const auto arm2 = arm_model_from_json(json::parse(arm_model_to_json(arm).dump()));
    CHECK(arm2.shoulder_origin == arm.shoulder_origin);
    CHECK(arm2.upper_arm_length == arm.upper_arm_length);
    REQUIRE(arm2.limits.has_value());
    CHECK(arm2.limits->upper == arm.limits->upper);

    predictor::PredictorConfig cfg;
    cfg.layers = 2;
    cfg.hidden_dim = 3;
    auto model = predictor::HandPredictor{predictor::PredictorWeights::initialize(cfg, 4), {0.52}};
    const auto back = predictor_from_json(json::parse(predictor_to_json(model).dump()));
    CHECK(back.weights.config() == cfg);
    CHECK(back.weights.parameters() == model.weights.parameters());
    CHECK(back.standardization.torso_scale == 0.52);
  }

  TEST_CASE("headers and shapes are checked") {
    json j = promp_to_json(fixtures::arm_prior());
    json wrong_version = j;
    wrong_version["version"] = kFormatVersion + 1;
    CHECK_THROWS_AS(promp_from_json(wrong_version), ContractError);
    json wrong_format = j;
    wrong_format["format"] = "handshake.arm_model";
    CHECK_THROWS_AS(promp_from_json(wrong_format), ContractError);
    json wrong_shape = j;
    wrong_shape["weight_cov"] = matrix_to_json(Eigen::MatrixXd::Identity(5, 5));
    CHECK_THROWS_AS(promp_from_json(wrong_shape), ContractError);

    predictor::PredictorConfig cfg;
    cfg.hidden_dim = 2;
    json pj = predictor_to_json({predictor::PredictorWeights(cfg), {}});
    pj["config"]["hidden_dim"] = 3;
    CHECK_THROWS_AS(predictor_from_json(pj), ContractError);
  }

  TEST_CASE("jsonl streams") {
    skeleton::SkeletonSequence seq;
    seq.frames = {fixtures::standing_frame(), fixtures::standing_frame()};
    seq.frames[1][skeleton::UpperJoint::Head] = {0.123456789012345, -1e-17, 3.0};
    const auto back = skeleton_from_jsonl(skeleton_to_jsonl(seq));
    REQUIRE(back.frames.size() == 2);
    CHECK(back.frames == seq.frames);

    const std::vector<kinematics::JointAngles> angles{{0.1, 0.2, 0.3, 0.4}, {-1, 0, 1, 2}};
    CHECK(angles_from_jsonl(angles_to_jsonl(angles)) == angles);

    try {
      parse_jsonl("{\"a\": 1}\n{\"a\": }\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }

    const TrajectoryMeta meta{30.0, "x.skeleton", {4, 40}, 2};
    CHECK(trajectory_meta_from_json(trajectory_meta_to_json(meta)) == meta);
  }

  TEST_CASE("interaction logs round-trip, including fallback steps") {
    control::InteractionLog log;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (std::size_t t = 0; t < 5; ++t) {
      control::StepRecord r;
      r.t = t;
      r.h_obs = {g(rng), g(rng), g(rng)};
      r.h_hat = {g(rng), g(rng), g(rng)};
      r.h_star = {g(rng), g(rng), g(rng)};
      r.z = 0.1 * static_cast<double>(t);
      r.command = {g(rng), g(rng), g(rng), g(rng)};
      r.fk_position = {g(rng), g(rng), g(rng)};
      r.flags.not_converged = t == 2;
      log.steps.push_back(r);
    }
    log.steps[3].h_hat.y() = std::numeric_limits<double>::quiet_NaN();
    log.steps[3].flags.prediction_fallback = true;
    log.summary = {0.0123, 5, 1, 1};
    const auto back = interaction_log_from_jsonl(interaction_log_to_jsonl(log));
    REQUIRE(back.steps.size() == 5);
    CHECK(std::isnan(back.steps[3].h_hat.y()));
    for (std::size_t t = 0; t < 5; ++t) {
      if (t == 3) continue;
      CHECK(back.steps[t] == log.steps[t]);
    }
    CHECK(back.steps[3].flags == log.steps[3].flags);
    CHECK(back.summary == log.summary);
  }
}
