#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "handshake/error.hpp"
#include "handshake/predictor.hpp"

using namespace handshake;
using namespace handshake::predictor;
using skeleton::UpperBodyFrame;
using skeleton::UpperJoint;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

PredictorConfig small_config(std::size_t layers, std::size_t hidden) {
  PredictorConfig cfg;
  cfg.layers = layers;
  cfg.hidden_dim = hidden;
  return cfg;
}

void randomize(PredictorWeights& w, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index i = 0; i < w.parameters().size(); ++i) w.parameters()[i] = g(rng);
}

// A person whose right hand drifts towards `goal` over `n` frames, with some body sway.
std::vector<UpperBodyFrame> reaching_frames(const Vec3& goal, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.01);
  std::vector<UpperBodyFrame> frames;
  const auto rest = fixtures::standing_frame();
  for (std::size_t t = 0; t < n; ++t) {
    auto f = rest;
    const double s = static_cast<double>(t) / static_cast<double>(n);
    f[UpperJoint::HandRight] = (1 - s) * rest[UpperJoint::HandRight] + s * goal;
    f[UpperJoint::WristRight] = f[UpperJoint::HandRight] + Vec3(0, -0.05, 0);
    f[UpperJoint::HandTipRight] = f[UpperJoint::HandRight] + Vec3(0, 0.05, 0);
    for (auto& p : f.joints) p += Vec3(g(rng), g(rng), g(rng));
    frames.push_back(f);
  }
  return frames;
}

}  // namespace

TEST_SUITE("predictor") {
  TEST_CASE("parameter layout") {
    const auto cfg = small_config(2, 3);
    CHECK(PredictorWeights::parameter_count(cfg) == (12 * 45 + 12 * 3 + 12) + (12 * 3 + 12 * 3 + 12) + (3 * 3 + 3));
    PredictorWeights w(cfg);
    CHECK(w.layer_offset(1) == 12 * 45 + 12 * 3 + 12);
    w.recurrent_weights(1)(2, 1) = 7.0;
    CHECK(w.parameters()[static_cast<Eigen::Index>(w.layer_offset(1) + 12 * 3 + 1 * 12 + 2)] == 7.0);
    const auto init = PredictorWeights::initialize(cfg, 5);
    CHECK(init.bias(0).segment(3, 3).minCoeff() > 0.5);
    CHECK(init.bias(0).segment(0, 3).maxCoeff() <= 1.0 / std::sqrt(3.0));
  }

  TEST_CASE("zero network predicts the spine base") {
    HandPredictor model{PredictorWeights(small_config(2, 4)), {}};
    const auto frames = reaching_frames({0.3, 0.5, 0.1}, 8, 1);
    const auto trace = forward(model, frames);
    for (std::size_t t = 0; t < frames.size(); ++t) CHECK(trace.estimates[t] == frames[t][UpperJoint::SpineBase]);
  }

  TEST_CASE("one-unit network matches a hand-unrolled recurrence") {
    for (const std::size_t layers : {1u, 2u}) {
      PredictorWeights w(small_config(layers, 1));
      randomize(w, 21 + layers);
      std::mt19937_64 rng(3);
      std::normal_distribution<double> g;
      MatrixXd x(5, 45);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);

      const MatrixXd out = forward_features(w, x);
      std::vector<double> h(layers, 0.0), c(layers, 0.0);
      for (int t = 0; t < 5; ++t) {
        double below = 0.0;
        for (std::size_t l = 0; l < layers; ++l) {
          double pre[4];
          for (int k = 0; k < 4; ++k) {
            double in = 0.0;
            if (l == 0) {
              for (int j = 0; j < 45; ++j) in += w.input_weights(0)(k, j) * x(t, j);
            } else {
              in = w.input_weights(l)(k, 0) * below;
            }
            pre[k] = in + w.recurrent_weights(l)(k, 0) * h[l] + w.bias(l)[k];
          }
          c[l] = sig(pre[1]) * c[l] + sig(pre[0]) * std::tanh(pre[2]);
          h[l] = sig(pre[3]) * std::tanh(c[l]);
          below = h[l];
        }
        for (int d = 0; d < 3; ++d) {
          CHECK(std::abs(out(t, d) - (w.head_weights()(d, 0) * below + w.head_bias()[d])) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("BPTT gradient agrees with finite differences") {
    HandPredictor model{PredictorWeights(small_config(2, 5)), {0.5}};
    randomize(model.weights, 8);
    const auto frames = reaching_frames({0.25, 0.55, 0.05}, 7, 2);
    const Vec3 target(0.3, 0.6, 0.1);
    CHECK(gradient_check(model, frames, target) < 1e-4);

    // Spot check a few coordinates directly against the loss function.
    const auto lg = loss_and_gradient(model, frames, target);
    CHECK(lg.loss == doctest::Approx(loss(forward(model, frames), target)).epsilon(1e-12));
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<Eigen::Index> pick(0, model.weights.parameters().size() - 1);
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index i = pick(rng);
      HandPredictor plus = model, minus = model;
      plus.weights.parameters()[i] += 1e-6;
      minus.weights.parameters()[i] -= 1e-6;
      const double fd = (loss(forward(plus, frames), target) - loss(forward(minus, frames), target)) / 2e-6;
      CHECK(std::abs(fd - lg.gradient[i]) <= 1e-6 + 1e-4 * std::abs(fd));
    }
  }

  TEST_CASE("zero inputs give zero input-weight gradients") {
    HandPredictor model{PredictorWeights(small_config(1, 3)), {}};
    randomize(model.weights, 10);
    UpperBodyFrame collapsed;
    for (auto& p : collapsed.joints) p = Vec3(0.1, 0.2, 0.3);
    const std::vector<UpperBodyFrame> frames(4, collapsed);
    const auto lg = loss_and_gradient(model, frames, Vec3(0.5, 0.5, 0.5));
    CHECK(lg.gradient.head(12 * 45).cwiseAbs().maxCoeff() == 0.0);
    CHECK(lg.gradient.tail(12).cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("incremental steps equal the batch pass") {
    auto model = std::make_shared<HandPredictor>(HandPredictor{PredictorWeights(small_config(2, 6)), {0.45}});
    randomize(model->weights, 11);
    const auto frames = reaching_frames({0.3, 0.5, 0.0}, 25, 3);
    const auto trace = forward(*model, frames);
    PredictorSession session(model);
    double worst = 0.0;
    for (std::size_t t = 0; t < frames.size(); ++t) worst = std::max(worst, (session.step(frames[t]) - trace.estimates[t]).norm());
    CHECK(worst < 1e-12);
    CHECK(session.steps() == frames.size());
    session.reset();
    CHECK((session.step(frames[0]) - trace.estimates[0]).norm() < 1e-12);
    CHECK((predict_final_hand(*model, std::span(frames).first(10)) - trace.estimates[9]).norm() < 1e-12);
  }

  TEST_CASE("a single trajectory can be memorised") {
    PredictorConfig cfg = small_config(1, 16);
    cfg.epochs = 400;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 1;
    cfg.init_head_bias_from_data = false;
    TrainingSample sample;
    sample.sequence.frames = reaching_frames({0.3, 0.55, 0.05}, 20, 4);
    sample.final_hand = {0.3, 0.55, 0.05};
    const auto result = train(std::span(&sample, 1), cfg);
    CHECK(result.loss_curve.size() == cfg.epochs);
    CHECK(loss(forward(result.predictor, sample.sequence.frames), sample.final_hand) < 1e-3);
  }

  TEST_CASE("training on fifty trajectories lowers the loss and is deterministic") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.15, 0.15);
    std::vector<TrainingSample> samples;
    for (std::uint64_t k = 0; k < 50; ++k) {
      TrainingSample s;
      s.final_hand = Vec3(0.3 + u(rng), 0.5 + u(rng), 0.1 + u(rng));
      s.sequence.frames = reaching_frames(s.final_hand, 15, 100 + k);
      samples.push_back(s);
    }
    PredictorConfig cfg = small_config(1, 12);
    cfg.epochs = 25;
    cfg.batch_size = 8;
    cfg.learning_rate = 5e-3;
    cfg.seed = 3;
    const auto a = train(samples, cfg);
    CHECK(a.loss_curve.back() < 0.5 * a.loss_curve.front());
    const auto b = train(samples, cfg);
    CHECK(a.predictor.weights.parameters() == b.predictor.weights.parameters());
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.predictor.standardization.torso_scale == doctest::Approx(0.5).epsilon(0.01));
  }

  TEST_CASE("contracts") {
    PredictorConfig bad;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    CHECK_THROWS_AS(train({}, PredictorConfig{}), ContractError);
    HandPredictor model{PredictorWeights(small_config(1, 2)), {}};
    CHECK_THROWS_AS(predict_final_hand(model, {}), ContractError);
  }
}
