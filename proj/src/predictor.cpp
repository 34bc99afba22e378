#include "handshake/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "handshake/error.hpp"

namespace handshake::predictor {

using skeleton::UpperBodyFrame;
using skeleton::UpperJoint;

namespace {

using Index = Eigen::Index;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerCache {
  MatrixXd inputs;   // I x T
  MatrixXd gates;    // 4H x T, after the nonlinearities
  MatrixXd cells;    // H x T
  MatrixXd hidden;   // H x T
};

// One recurrent step. `z` holds the pre-activations on entry and the gate values on exit.
void lstm_cell(Eigen::Ref<VectorXd> z, const VectorXd& c_prev, VectorXd& c, VectorXd& h, Index hd) {
  for (Index k = 0; k < hd; ++k) {
    const double i = sigmoid(z[k]);
    const double f = sigmoid(z[hd + k]);
    const double g = std::tanh(z[2 * hd + k]);
    const double o = sigmoid(z[3 * hd + k]);
    z[k] = i;
    z[hd + k] = f;
    z[2 * hd + k] = g;
    z[3 * hd + k] = o;
    c[k] = f * c_prev[k] + i * g;
    h[k] = o * std::tanh(c[k]);
  }
}

std::vector<LayerCache> run_layers(const PredictorWeights& w, const MatrixXd& inputs_by_column) {
  const auto& cfg = w.config();
  const auto hd = static_cast<Index>(cfg.hidden_dim);
  const Index steps = inputs_by_column.cols();
  std::vector<LayerCache> caches(cfg.layers);
  MatrixXd layer_input = inputs_by_column;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerCache& cache = caches[l];
    cache.gates = (w.input_weights(l) * layer_input).colwise() + VectorXd(w.bias(l));
    cache.cells.resize(hd, steps);
    cache.hidden.resize(hd, steps);
    VectorXd c_prev = VectorXd::Zero(hd);
    VectorXd h_prev = VectorXd::Zero(hd);
    VectorXd c(hd), h(hd);
    const auto recurrent = w.recurrent_weights(l);
    for (Index t = 0; t < steps; ++t) {
      cache.gates.col(t) += recurrent * h_prev;
      lstm_cell(cache.gates.col(t), c_prev, c, h, hd);
      cache.cells.col(t) = c;
      cache.hidden.col(t) = h;
      c_prev = c;
      h_prev = h;
    }
    cache.inputs = std::move(layer_input);
    layer_input = cache.hidden;
  }
  return caches;
}

std::size_t block_sizes(const PredictorConfig& cfg, std::size_t layer) {
  const std::size_t h = cfg.hidden_dim;
  const std::size_t in = layer == 0 ? cfg.input_dim : h;
  return 4 * h * in + 4 * h * h + 4 * h;
}

void check_features(const PredictorWeights& w, const MatrixXd& features) {
  if (features.cols() != static_cast<Index>(w.config().input_dim)) {
    throw ContractError("feature width " + std::to_string(features.cols()) + " differs from input_dim " +
                        std::to_string(w.config().input_dim));
  }
  if (features.rows() == 0) throw ContractError("empty input sequence");
}

}  // namespace

void PredictorConfig::validate() const {
  if (layers == 0 || hidden_dim == 0 || input_dim == 0 || output_dim == 0) {
    throw ContractError("predictor dimensions must be positive");
  }
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (!(learning_rate > 0.0) || !(epsilon > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
      !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("invalid optimiser settings");
  }
}

PredictorWeights::PredictorWeights(const PredictorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  params_ = VectorXd::Zero(static_cast<Index>(parameter_count(cfg_)));
}

PredictorWeights PredictorWeights::initialize(const PredictorConfig& cfg, std::uint64_t seed) {
  PredictorWeights w(cfg);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Index i = 0; i < w.params_.size(); ++i) w.params_[i] = uniform(rng);
  const auto hd = static_cast<Index>(cfg.hidden_dim);
  for (std::size_t l = 0; l < cfg.layers; ++l) w.bias(l).segment(hd, hd).array() += 1.0;
  return w;
}

std::size_t PredictorWeights::parameter_count(const PredictorConfig& cfg) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < cfg.layers; ++l) n += block_sizes(cfg, l);
  return n + cfg.output_dim * cfg.hidden_dim + cfg.output_dim;
}

std::size_t PredictorWeights::layer_input_dim(std::size_t layer) const {
  return layer == 0 ? cfg_.input_dim : cfg_.hidden_dim;
}

std::size_t PredictorWeights::layer_offset(std::size_t layer) const {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) offset += block_sizes(cfg_, l);
  return offset;
}

std::size_t PredictorWeights::head_offset() const { return layer_offset(cfg_.layers); }

PredictorWeights::ConstMatrixMap PredictorWeights::input_weights(std::size_t layer) const {
  const auto rows = static_cast<Index>(4 * cfg_.hidden_dim);
  return {params_.data() + layer_offset(layer), rows, static_cast<Index>(layer_input_dim(layer))};
}

PredictorWeights::ConstMatrixMap PredictorWeights::recurrent_weights(std::size_t layer) const {
  const auto rows = static_cast<Index>(4 * cfg_.hidden_dim);
  const std::size_t offset = layer_offset(layer) + 4 * cfg_.hidden_dim * layer_input_dim(layer);
  return {params_.data() + offset, rows, static_cast<Index>(cfg_.hidden_dim)};
}

PredictorWeights::ConstVectorMap PredictorWeights::bias(std::size_t layer) const {
  const std::size_t h = cfg_.hidden_dim;
  const std::size_t offset = layer_offset(layer) + 4 * h * layer_input_dim(layer) + 4 * h * h;
  return {params_.data() + offset, static_cast<Index>(4 * h)};
}

PredictorWeights::ConstMatrixMap PredictorWeights::head_weights() const {
  return {params_.data() + head_offset(), static_cast<Index>(cfg_.output_dim), static_cast<Index>(cfg_.hidden_dim)};
}

PredictorWeights::ConstVectorMap PredictorWeights::head_bias() const {
  return {params_.data() + head_offset() + cfg_.output_dim * cfg_.hidden_dim, static_cast<Index>(cfg_.output_dim)};
}

PredictorWeights::MatrixMap PredictorWeights::input_weights(std::size_t layer) {
  const auto view = std::as_const(*this).input_weights(layer);
  return {const_cast<double*>(view.data()), view.rows(), view.cols()};
}

PredictorWeights::MatrixMap PredictorWeights::recurrent_weights(std::size_t layer) {
  const auto view = std::as_const(*this).recurrent_weights(layer);
  return {const_cast<double*>(view.data()), view.rows(), view.cols()};
}

PredictorWeights::VectorMap PredictorWeights::bias(std::size_t layer) {
  const auto view = std::as_const(*this).bias(layer);
  return {const_cast<double*>(view.data()), view.size()};
}

PredictorWeights::MatrixMap PredictorWeights::head_weights() {
  const auto view = std::as_const(*this).head_weights();
  return {const_cast<double*>(view.data()), view.rows(), view.cols()};
}

PredictorWeights::VectorMap PredictorWeights::head_bias() {
  const auto view = std::as_const(*this).head_bias();
  return {const_cast<double*>(view.data()), view.size()};
}

MatrixXd forward_features(const PredictorWeights& w, const MatrixXd& features) {
  check_features(w, features);
  const auto caches = run_layers(w, features.transpose());
  const MatrixXd out = (w.head_weights() * caches.back().hidden).colwise() + VectorXd(w.head_bias());
  return out.transpose();
}

VectorXd frame_features(const UpperBodyFrame& frame, const Standardization& s) {
  VectorXd x(3 * static_cast<Index>(skeleton::kUpperBodyJointCount));
  const Vec3& origin = frame[UpperJoint::SpineBase];
  for (std::size_t j = 0; j < skeleton::kUpperBodyJointCount; ++j) {
    x.segment<3>(3 * static_cast<Index>(j)) = (frame.joints[j] - origin) / s.torso_scale;
  }
  return x;
}

MatrixXd sequence_features(std::span<const UpperBodyFrame> frames, const Standardization& s) {
  MatrixXd out(static_cast<Index>(frames.size()), 3 * static_cast<Index>(skeleton::kUpperBodyJointCount));
  for (std::size_t t = 0; t < frames.size(); ++t) out.row(static_cast<Index>(t)) = frame_features(frames[t], s).transpose();
  return out;
}

PredictionTrace forward(const HandPredictor& model, std::span<const UpperBodyFrame> frames) {
  if (model.weights.config().output_dim != 3) throw ContractError("hand predictor must emit 3 values");
  const MatrixXd raw = forward_features(model.weights, sequence_features(frames, model.standardization));
  PredictionTrace trace;
  trace.estimates.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    trace.estimates.push_back(frames[t][UpperJoint::SpineBase] +
                              model.standardization.torso_scale * raw.row(static_cast<Index>(t)).transpose());
  }
  return trace;
}

double loss(const PredictionTrace& trace, const Vec3& target) {
  if (trace.estimates.empty()) throw ContractError("loss of an empty trace");
  double sum = 0.0;
  for (const auto& e : trace.estimates) sum += (e - target).squaredNorm();
  return sum / static_cast<double>(trace.estimates.size());
}

LossGradient loss_and_gradient(const HandPredictor& model, std::span<const UpperBodyFrame> frames,
                               const Vec3& target) {
  const PredictorWeights& w = model.weights;
  const auto& cfg = w.config();
  if (cfg.output_dim != 3) throw ContractError("hand predictor must emit 3 values");
  const MatrixXd features = sequence_features(frames, model.standardization);
  check_features(w, features);

  const auto hd = static_cast<Index>(cfg.hidden_dim);
  const Index steps = features.rows();
  const double scale = model.standardization.torso_scale;
  const auto caches = run_layers(w, features.transpose());
  const MatrixXd raw = (w.head_weights() * caches.back().hidden).colwise() + VectorXd(w.head_bias());

  LossGradient out;
  out.gradient = VectorXd::Zero(w.parameters().size());
  PredictorWeights grad_view(cfg);  // zero-initialised blocks with the same layout

  MatrixXd d_raw(3, steps);
  double sum = 0.0;
  for (Index t = 0; t < steps; ++t) {
    const Vec3 estimate = frames[static_cast<std::size_t>(t)][UpperJoint::SpineBase] + scale * raw.col(t);
    const Vec3 residual = estimate - target;
    sum += residual.squaredNorm();
    d_raw.col(t) = (2.0 * scale / static_cast<double>(steps)) * residual;
  }
  out.loss = sum / static_cast<double>(steps);

  grad_view.head_weights() = d_raw * caches.back().hidden.transpose();
  grad_view.head_bias() = d_raw.rowwise().sum();
  MatrixXd d_hidden = w.head_weights().transpose() * d_raw;  // H x T

  for (std::size_t l = cfg.layers; l-- > 0;) {
    const LayerCache& cache = caches[l];
    MatrixXd d_gates(4 * hd, steps);
    VectorXd dh_next = VectorXd::Zero(hd);
    VectorXd dc_next = VectorXd::Zero(hd);
    const auto recurrent = w.recurrent_weights(l);
    for (Index t = steps; t-- > 0;) {
      const VectorXd dh = d_hidden.col(t) + dh_next;
      for (Index k = 0; k < hd; ++k) {
        const double i = cache.gates(k, t);
        const double f = cache.gates(hd + k, t);
        const double g = cache.gates(2 * hd + k, t);
        const double o = cache.gates(3 * hd + k, t);
        const double tanh_c = std::tanh(cache.cells(k, t));
        const double c_prev = t > 0 ? cache.cells(k, t - 1) : 0.0;
        const double dc = dh[k] * o * (1.0 - tanh_c * tanh_c) + dc_next[k];
        d_gates(k, t) = dc * g * i * (1.0 - i);
        d_gates(hd + k, t) = dc * c_prev * f * (1.0 - f);
        d_gates(2 * hd + k, t) = dc * i * (1.0 - g * g);
        d_gates(3 * hd + k, t) = dh[k] * tanh_c * o * (1.0 - o);
        dc_next[k] = dc * f;
      }
      dh_next = recurrent.transpose() * d_gates.col(t);
    }
    grad_view.input_weights(l) = d_gates * cache.inputs.transpose();
    if (steps > 1) {
      grad_view.recurrent_weights(l) =
          d_gates.rightCols(steps - 1) * cache.hidden.leftCols(steps - 1).transpose();
    }
    grad_view.bias(l) = d_gates.rowwise().sum();
    if (l > 0) d_hidden = w.input_weights(l).transpose() * d_gates;
  }
  out.gradient = std::move(grad_view.parameters());
  return out;
}

double gradient_check(const HandPredictor& model, std::span<const UpperBodyFrame> frames, const Vec3& target,
                      double step) {
  const VectorXd analytic = loss_and_gradient(model, frames, target).gradient;
  HandPredictor probe = model;
  VectorXd& params = probe.weights.parameters();
  double worst = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double plus = loss(forward(probe, frames), target);
    params[i] = saved - step;
    const double minus = loss(forward(probe, frames), target);
    params[i] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

Standardization compute_standardization(std::span<const TrainingSample> samples) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    for (const auto& frame : s.sequence.frames) {
      const double len = (frame[UpperJoint::SpineShoulder] - frame[UpperJoint::SpineBase]).norm();
      if (std::isfinite(len)) {
        sum += len;
        ++count;
      }
    }
  }
  if (count == 0 || !(sum > 0.0)) throw ContractError("cannot standardise: no valid torso lengths");
  return {sum / static_cast<double>(count)};
}

TrainingResult train(std::span<const TrainingSample> samples, const PredictorConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ContractError("training set is empty");
  if (cfg.input_dim != 3 * skeleton::kUpperBodyJointCount || cfg.output_dim != 3) {
    throw ContractError("hand predictor needs input_dim 45 and output_dim 3");
  }
  for (const auto& s : samples) {
    if (s.sequence.empty()) throw ContractError("training sequence is empty");
  }

  TrainingResult result{HandPredictor{PredictorWeights::initialize(cfg, cfg.seed), compute_standardization(samples)},
                        {}};
  HandPredictor& model = result.predictor;
  if (cfg.init_head_bias_from_data) {
    Vec3 sum = Vec3::Zero();
    double count = 0.0;
    for (const auto& s : samples) {
      for (const auto& frame : s.sequence.frames) {
        sum += (s.final_hand - frame[UpperJoint::SpineBase]) / model.standardization.torso_scale;
        count += 1.0;
      }
    }
    model.weights.head_bias() = sum / count;
  }
  VectorXd& params = model.weights.parameters();
  VectorXd first_moment = VectorXd::Zero(params.size());
  VectorXd second_moment = VectorXd::Zero(params.size());
  std::size_t adam_step = 0;

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      VectorXd grad = VectorXd::Zero(params.size());
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& sample = samples[order[k]];
        const auto lg = loss_and_gradient(model, sample.sequence.frames, sample.final_hand);
        batch_loss += lg.loss;
        grad += lg.gradient;
      }
      const double count = static_cast<double>(end - begin);
      grad /= count;
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << batch << " (gradient norm "
            << grad.norm() << ")";
        throw NumericalError(msg.str());
      }
      epoch_loss += batch_loss;

      ++adam_step;
      first_moment = cfg.beta1 * first_moment + (1.0 - cfg.beta1) * grad;
      second_moment = cfg.beta2 * second_moment + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_step));
      const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_step));
      params.array() -= cfg.learning_rate * (first_moment.array() / correction1) /
                        ((second_moment.array() / correction2).sqrt() + cfg.epsilon);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return result;
}

Vec3 predict_final_hand(const HandPredictor& model, std::span<const UpperBodyFrame> prefix) {
  if (prefix.empty()) throw ContractError("prediction needs at least one frame");
  return forward(model, prefix).estimates.back();
}

PredictorSession::PredictorSession(std::shared_ptr<const HandPredictor> model) : model_(std::move(model)) {
  if (!model_) throw ContractError("predictor session needs a model");
  reset();
}

void PredictorSession::reset() {
  const auto& cfg = model_->weights.config();
  hidden_.assign(cfg.layers, VectorXd::Zero(static_cast<Index>(cfg.hidden_dim)));
  cell_.assign(cfg.layers, VectorXd::Zero(static_cast<Index>(cfg.hidden_dim)));
  steps_ = 0;
}

Vec3 PredictorSession::step(const UpperBodyFrame& frame) {
  const PredictorWeights& w = model_->weights;
  const auto& cfg = w.config();
  const auto hd = static_cast<Index>(cfg.hidden_dim);
  VectorXd input = frame_features(frame, model_->standardization);
  VectorXd c(hd), h(hd);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    VectorXd z = w.input_weights(l) * input + VectorXd(w.bias(l)) + w.recurrent_weights(l) * hidden_[l];
    lstm_cell(z, cell_[l], c, h, hd);
    cell_[l] = c;
    hidden_[l] = h;
    input = h;
  }
  ++steps_;
  const Vec3 raw = w.head_weights() * input + VectorXd(w.head_bias());
  return frame[UpperJoint::SpineBase] + model_->standardization.torso_scale * raw;
}

}  // namespace handshake::predictor
