#include "handshake/io.hpp"

#include <fstream>
#include <sstream>

#include "handshake/error.hpp"

namespace handshake::io {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::string_view kPrompFormat = "handshake.promp";
constexpr std::string_view kArmFormat = "handshake.arm_model";
constexpr std::string_view kPredictorFormat = "handshake.predictor";

json header(std::string_view format) { return {{"format", format}, {"version", kFormatVersion}}; }

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ContractError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("field '") + key + "': " + e.what());
  }
}

const json& child(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ContractError(std::string("missing field '") + key + "'");
  return j.at(key);
}

void expect_shape(const MatrixXd& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ContractError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void check_header(const json& j, std::string_view format) {
  const auto tag = field<std::string>(j, "format");
  if (tag != format) throw ContractError("expected a " + std::string(format) + " file, got " + tag);
  const int version = field<int>(j, "version");
  if (version != kFormatVersion) throw ContractError("unsupported " + tag + " version " + std::to_string(version));
}

json matrix_to_json(const MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const json& j) {
  const auto rows = field<Index>(j, "rows");
  const auto cols = field<Index>(j, "cols");
  const auto data = field<std::vector<double>>(j, "data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw ContractError("matrix data does not match its shape");
  }
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

json vector_to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ContractError("expected a numeric array");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  const VectorXd v = vector_from_json(j);
  if (v.size() != 3) throw ContractError("expected a 3-vector");
  return v;
}

json basis_to_json(const promp::BasisConfig& b) {
  return {{"n_basis", b.n_basis}, {"centers", b.centers}, {"width", b.width}, {"normalize", b.normalize}};
}

promp::BasisConfig basis_from_json(const json& j) {
  promp::BasisConfig b;
  b.n_basis = field<std::size_t>(j, "n_basis");
  b.centers = field<std::vector<double>>(j, "centers");
  b.width = field<double>(j, "width");
  b.normalize = field<bool>(j, "normalize");
  b.validate();
  return b;
}

json promp_to_json(const promp::ProMP& p) {
  json j = header(kPrompFormat);
  j["basis"] = basis_to_json(p.basis());
  j["dof"] = p.dof();
  j["mean_weights"] = vector_to_json(p.mean_weights());
  j["weight_cov"] = vector_to_json(Eigen::Map<const VectorXd>(
      MatrixXd(p.weight_cov().transpose()).data(), p.weight_cov().size()));
  j["obs_noise"] = vector_to_json(Eigen::Map<const VectorXd>(
      MatrixXd(p.obs_noise().transpose()).data(), p.obs_noise().size()));
  return j;
}

namespace {

MatrixXd square_from_row_major(const json& j, Index n, const std::string& what) {
  const VectorXd flat = vector_from_json(j);
  if (flat.size() != n * n) throw ContractError(what + ": expected " + std::to_string(n * n) + " entries");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), n, n);
}

}  // namespace

promp::ProMP promp_from_json(const json& j) {
  check_header(j, kPrompFormat);
  auto basis = basis_from_json(child(j, "basis"));
  const auto dof = field<Index>(j, "dof");
  if (dof <= 0) throw ContractError("dof must be positive");
  const Index order = dof * static_cast<Index>(basis.n_basis);
  VectorXd mean = vector_from_json(child(j, "mean_weights"));
  if (mean.size() != order) throw ContractError("mean_weights: expected " + std::to_string(order) + " entries");
  MatrixXd cov = square_from_row_major(child(j, "weight_cov"), order, "weight_cov");
  MatrixXd noise = square_from_row_major(child(j, "obs_noise"), dof, "obs_noise");
  promp::ProMP p(std::move(basis), std::move(mean), std::move(cov), std::move(noise));
  p.validate();
  return p;
}

json arm_model_to_json(const kinematics::ArmModel& m) {
  json j = header(kArmFormat);
  j["shoulder_origin"] = vec3_to_json(m.shoulder_origin);
  j["upper_arm_length"] = m.upper_arm_length;
  j["forearm_length"] = m.forearm_length;
  if (m.limits) {
    j["limits"] = {{"lower", vector_to_json(m.limits->lower)}, {"upper", vector_to_json(m.limits->upper)}};
  } else {
    j["limits"] = nullptr;
  }
  return j;
}

kinematics::ArmModel arm_model_from_json(const json& j) {
  check_header(j, kArmFormat);
  kinematics::ArmModel m;
  m.shoulder_origin = vec3_from_json(child(j, "shoulder_origin"));
  m.upper_arm_length = field<double>(j, "upper_arm_length");
  m.forearm_length = field<double>(j, "forearm_length");
  if (j.contains("limits") && !j.at("limits").is_null()) {
    const VectorXd lower = vector_from_json(child(j.at("limits"), "lower"));
    const VectorXd upper = vector_from_json(child(j.at("limits"), "upper"));
    if (lower.size() != 4 || upper.size() != 4) throw ContractError("joint limits need 4 entries each");
    m.limits = kinematics::JointLimits{lower, upper};
  }
  m.validate();
  return m;
}

json predictor_config_to_json(const predictor::PredictorConfig& c) {
  return {{"layers", c.layers},         {"hidden_dim", c.hidden_dim},
          {"input_dim", c.input_dim},   {"output_dim", c.output_dim},
          {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},           {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"init_head_bias_from_data", c.init_head_bias_from_data}};
}

predictor::PredictorConfig predictor_config_from_json(const json& j) {
  predictor::PredictorConfig c;
  if (!j.is_object()) throw ContractError("predictor config must be an object");
  // Missing keys keep their defaults so partial configs work.
  const auto take = [&](const char* key, auto& target) {
    if (j.contains(key)) target = field<std::decay_t<decltype(target)>>(j, key);
  };
  take("layers", c.layers);
  take("hidden_dim", c.hidden_dim);
  take("input_dim", c.input_dim);
  take("output_dim", c.output_dim);
  take("batch_size", c.batch_size);
  take("epochs", c.epochs);
  take("learning_rate", c.learning_rate);
  take("beta1", c.beta1);
  take("beta2", c.beta2);
  take("epsilon", c.epsilon);
  take("seed", c.seed);
  take("init_head_bias_from_data", c.init_head_bias_from_data);
  c.validate();
  return c;
}

json predictor_to_json(const predictor::HandPredictor& p) {
  const auto& w = p.weights;
  json j = header(kPredictorFormat);
  j["config"] = predictor_config_to_json(w.config());
  j["standardization"] = {{"torso_scale", p.standardization.torso_scale}};
  json layers = json::array();
  for (std::size_t l = 0; l < w.config().layers; ++l) {
    layers.push_back({{"input_weights", matrix_to_json(w.input_weights(l))},
                      {"recurrent_weights", matrix_to_json(w.recurrent_weights(l))},
                      {"bias", vector_to_json(w.bias(l))}});
  }
  j["layers"] = std::move(layers);
  j["head"] = {{"weights", matrix_to_json(w.head_weights())}, {"bias", vector_to_json(w.head_bias())}};
  return j;
}

predictor::HandPredictor predictor_from_json(const json& j) {
  check_header(j, kPredictorFormat);
  const auto cfg = predictor_config_from_json(child(j, "config"));
  predictor::HandPredictor p{predictor::PredictorWeights(cfg), {}};
  p.standardization.torso_scale = field<double>(child(j, "standardization"), "torso_scale");
  if (!(p.standardization.torso_scale > 0.0)) throw ContractError("torso_scale must be positive");

  const json& layers = child(j, "layers");
  if (!layers.is_array() || layers.size() != cfg.layers) throw ContractError("layer count does not match config");
  auto& w = p.weights;
  const auto h4 = static_cast<Index>(4 * cfg.hidden_dim);
  const auto hd = static_cast<Index>(cfg.hidden_dim);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string name = "layer " + std::to_string(l);
    const MatrixXd wx = matrix_from_json(child(layers[l], "input_weights"));
    expect_shape(wx, h4, static_cast<Index>(w.layer_input_dim(l)), name + " input_weights");
    const MatrixXd wh = matrix_from_json(child(layers[l], "recurrent_weights"));
    expect_shape(wh, h4, hd, name + " recurrent_weights");
    const VectorXd b = vector_from_json(child(layers[l], "bias"));
    expect_shape(b, h4, 1, name + " bias");
    w.input_weights(l) = wx;
    w.recurrent_weights(l) = wh;
    w.bias(l) = b;
  }
  const json& head = child(j, "head");
  const MatrixXd wy = matrix_from_json(child(head, "weights"));
  expect_shape(wy, static_cast<Index>(cfg.output_dim), hd, "head weights");
  const VectorXd by = vector_from_json(child(head, "bias"));
  expect_shape(by, static_cast<Index>(cfg.output_dim), 1, "head bias");
  w.head_weights() = wy;
  w.head_bias() = by;
  if (!w.parameters().allFinite()) throw ContractError("predictor parameters are not finite");
  return p;
}

json trajectory_meta_to_json(const TrajectoryMeta& m) {
  return {{"frame_rate", m.frame_rate},
          {"source_label", m.source_label},
          {"segment_bounds", {{"start", m.segment_bounds.start}, {"grasp", m.segment_bounds.grasp}}},
          {"gimbal_frames", m.gimbal_frames}};
}

TrajectoryMeta trajectory_meta_from_json(const json& j) {
  TrajectoryMeta m;
  m.frame_rate = field<double>(j, "frame_rate");
  m.source_label = field<std::string>(j, "source_label");
  m.segment_bounds.start = field<std::size_t>(child(j, "segment_bounds"), "start");
  m.segment_bounds.grasp = field<std::size_t>(child(j, "segment_bounds"), "grasp");
  if (j.contains("gimbal_frames")) m.gimbal_frames = field<std::size_t>(j, "gimbal_frames");
  return m;
}

std::vector<json> parse_jsonl(std::string_view text) {
  std::vector<json> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    ++line_no;
    const std::string_view line = text.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        out.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw ParseError(line_no, e.what());
      }
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

std::string skeleton_to_jsonl(const skeleton::SkeletonSequence& seq) {
  std::string out;
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    json joints = json::array();
    for (const auto& p : seq.frames[t].joints) joints.push_back(vec3_to_json(p));
    out += json{{"t", t}, {"joints", std::move(joints)}}.dump();
    out += '\n';
  }
  return out;
}

skeleton::SkeletonSequence skeleton_from_jsonl(std::string_view text, double frame_rate, std::string source_label) {
  skeleton::SkeletonSequence seq;
  seq.frame_rate = frame_rate;
  seq.source_label = std::move(source_label);
  for (const auto& record : parse_jsonl(text)) {
    const json& joints = child(record, "joints");
    if (!joints.is_array() || joints.size() != skeleton::kUpperBodyJointCount) {
      throw ContractError("frame " + std::to_string(seq.frames.size()) + ": expected 15 joints");
    }
    if (field<std::size_t>(record, "t") != seq.frames.size()) throw ContractError("frame indices must count up from 0");
    skeleton::UpperBodyFrame frame;
    for (std::size_t k = 0; k < skeleton::kUpperBodyJointCount; ++k) frame.joints[k] = vec3_from_json(joints[k]);
    seq.frames.push_back(frame);
  }
  if (seq.frames.empty()) throw EmptyInputError("trajectory file has no frames");
  return seq;
}

std::string angles_to_jsonl(const std::vector<kinematics::JointAngles>& angles) {
  std::string out;
  for (std::size_t t = 0; t < angles.size(); ++t) {
    out += json{{"t", t}, {"q", vector_to_json(angles[t].as_vector())}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<kinematics::JointAngles> angles_from_jsonl(std::string_view text) {
  std::vector<kinematics::JointAngles> out;
  for (const auto& record : parse_jsonl(text)) {
    const VectorXd q = vector_from_json(child(record, "q"));
    if (q.size() != 4) throw ContractError("joint angle record needs 4 values");
    out.push_back(kinematics::JointAngles::from_vector(q));
  }
  if (out.empty()) throw EmptyInputError("angle file has no records");
  return out;
}

std::string interaction_log_to_jsonl(const control::InteractionLog& log) {
  std::string out;
  for (const auto& r : log.steps) {
    json rec = {{"t", r.t},
                {"h_obs", vec3_to_json(r.h_obs)},
                {"h_hat", vec3_to_json(r.h_hat)},
                {"h_star", vec3_to_json(r.h_star)},
                {"z", r.z},
                {"command_q", vector_to_json(r.command.as_vector())},
                {"fk_position", vec3_to_json(r.fk_position)},
                {"flags",
                 {{"prediction_fallback", r.flags.prediction_fallback},
                  {"not_converged", r.flags.not_converged},
                  {"phase_clamped", r.flags.phase_clamped}}}};
    // Non-finite predictions are logged as null.
    if (!r.h_hat.allFinite()) rec["h_hat"] = nullptr;
    out += rec.dump();
    out += '\n';
  }
  const auto& s = log.summary;
  out += json{{"summary",
               {{"final_reaching_error", s.final_reaching_error},
                {"steps", s.steps},
                {"fallback_steps", s.fallback_steps},
                {"nonconverged_steps", s.nonconverged_steps}}}}
             .dump();
  out += '\n';
  return out;
}

control::InteractionLog interaction_log_from_jsonl(std::string_view text) {
  const auto records = parse_jsonl(text);
  if (records.empty() || !records.back().contains("summary")) {
    throw ContractError("interaction log lacks a trailing summary record");
  }
  control::InteractionLog log;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    const json& j = records[i];
    control::StepRecord r;
    r.t = field<std::size_t>(j, "t");
    r.h_obs = vec3_from_json(child(j, "h_obs"));
    r.h_hat = j.contains("h_hat") && j.at("h_hat").is_null() ? Vec3::Constant(std::nan(""))
                                                              : vec3_from_json(child(j, "h_hat"));
    r.h_star = vec3_from_json(child(j, "h_star"));
    r.z = field<double>(j, "z");
    const VectorXd q = vector_from_json(child(j, "command_q"));
    if (q.size() != 4) throw ContractError("command_q needs 4 values");
    r.command = kinematics::JointAngles::from_vector(q);
    r.fk_position = vec3_from_json(child(j, "fk_position"));
    const json& flags = child(j, "flags");
    r.flags.prediction_fallback = field<bool>(flags, "prediction_fallback");
    r.flags.not_converged = field<bool>(flags, "not_converged");
    r.flags.phase_clamped = field<bool>(flags, "phase_clamped");
    log.steps.push_back(r);
  }
  const json& s = records.back().at("summary");
  log.summary.final_reaching_error = field<double>(s, "final_reaching_error");
  log.summary.steps = field<std::size_t>(s, "steps");
  log.summary.fallback_steps = field<std::size_t>(s, "fallback_steps");
  log.summary.nonconverged_steps = field<std::size_t>(s, "nonconverged_steps");
  if (log.summary.steps != log.steps.size()) throw ContractError("summary step count does not match the log");
  return log;
}

}  // namespace handshake::io
