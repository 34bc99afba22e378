#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "handshake/skeleton.hpp"

namespace handshake::predictor {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PredictorConfig {
  std::size_t layers = 2;
  std::size_t hidden_dim = 64;
  std::size_t input_dim = 45;
  std::size_t output_dim = 3;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Start the head bias at the mean standardised target instead of at random.
  bool init_head_bias_from_data = true;

  void validate() const;
  bool operator==(const PredictorConfig&) const = default;
};

/// Stacked LSTM with an affine read-out, all parameters in one flat vector.
///
/// Parameter blocks, in order, each stored column-major:
///   for every layer l: input weights (4H x I_l), recurrent weights (4H x H), bias (4H)
///   head weights (output_dim x H), head bias (output_dim)
/// Gate rows are ordered input, forget, cell, output.
class PredictorWeights {
 public:
  using MatrixMap = Eigen::Map<MatrixXd>;
  using ConstMatrixMap = Eigen::Map<const MatrixXd>;
  using VectorMap = Eigen::Map<VectorXd>;
  using ConstVectorMap = Eigen::Map<const VectorXd>;

  /// All-zero parameters.
  explicit PredictorWeights(const PredictorConfig& cfg);
  PredictorWeights() : PredictorWeights(PredictorConfig{}) {}

  /// Uniform in +-1/sqrt(hidden_dim), forget-gate biases shifted by +1.
  static PredictorWeights initialize(const PredictorConfig& cfg, std::uint64_t seed);

  const PredictorConfig& config() const { return cfg_; }
  std::size_t layer_input_dim(std::size_t layer) const;
  static std::size_t parameter_count(const PredictorConfig& cfg);

  VectorXd& parameters() { return params_; }
  const VectorXd& parameters() const { return params_; }

  ConstMatrixMap input_weights(std::size_t layer) const;
  ConstMatrixMap recurrent_weights(std::size_t layer) const;
  ConstVectorMap bias(std::size_t layer) const;
  ConstMatrixMap head_weights() const;
  ConstVectorMap head_bias() const;

  MatrixMap input_weights(std::size_t layer);
  MatrixMap recurrent_weights(std::size_t layer);
  VectorMap bias(std::size_t layer);
  MatrixMap head_weights();
  VectorMap head_bias();

  /// Offset of a layer's first block inside the flat parameter vector.
  std::size_t layer_offset(std::size_t layer) const;
  std::size_t head_offset() const;

 private:
  PredictorConfig cfg_;
  VectorXd params_;
};

/// Raw network pass over standardised inputs (rows = time steps). Returns T x output_dim.
MatrixXd forward_features(const PredictorWeights& w, const MatrixXd& features);

/// Frames are translated to put the spine base at the origin and divided by the
/// dataset's mean torso length. Outputs are mapped back the same way.
struct Standardization {
  double torso_scale = 1.0;
};

struct HandPredictor {
  PredictorWeights weights;
  Standardization standardization;
};

VectorXd frame_features(const skeleton::UpperBodyFrame& frame, const Standardization& s);
MatrixXd sequence_features(std::span<const skeleton::UpperBodyFrame> frames, const Standardization& s);

struct PredictionTrace {
  std::vector<Vec3> estimates;
};

/// Per-step estimate of the final hand position, in the frames' coordinate system.
PredictionTrace forward(const HandPredictor& model, std::span<const skeleton::UpperBodyFrame> frames);

/// Mean squared distance (m^2) between each step's estimate and the target.
double loss(const PredictionTrace& trace, const Vec3& target);

struct LossGradient {
  double loss = 0.0;
  VectorXd gradient;
};

/// Loss of one sequence and its gradient by backpropagation through time.
LossGradient loss_and_gradient(const HandPredictor& model, std::span<const skeleton::UpperBodyFrame> frames,
                               const Vec3& target);

/// Largest relative error between the analytic gradient and central differences.
double gradient_check(const HandPredictor& model, std::span<const skeleton::UpperBodyFrame> frames,
                      const Vec3& target, double step = 1e-5);

struct TrainingSample {
  skeleton::SkeletonSequence sequence;
  Vec3 final_hand = Vec3::Zero();
};

struct TrainingResult {
  HandPredictor predictor;
  std::vector<double> loss_curve;  // mean training loss per epoch, m^2
};

/// Mean spine-base to spine-shoulder distance over every frame in the samples.
Standardization compute_standardization(std::span<const TrainingSample> samples);

/// Mini-batch Adam over whole sequences; deterministic in cfg.seed.
TrainingResult train(std::span<const TrainingSample> samples, const PredictorConfig& cfg);

Vec3 predict_final_hand(const HandPredictor& model, std::span<const skeleton::UpperBodyFrame> prefix);

/// Carries the recurrent state so each new frame costs one network step.
class PredictorSession {
 public:
  explicit PredictorSession(std::shared_ptr<const HandPredictor> model);

  Vec3 step(const skeleton::UpperBodyFrame& frame);
  std::size_t steps() const { return steps_; }
  void reset();

 private:
  std::shared_ptr<const HandPredictor> model_;
  std::vector<VectorXd> hidden_;
  std::vector<VectorXd> cell_;
  std::size_t steps_ = 0;
};

}  // namespace handshake::predictor
