#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "handshake/blend_control.hpp"
#include "handshake/kinematics.hpp"
#include "handshake/predictor.hpp"
#include "handshake/promp.hpp"
#include "handshake/skeleton.hpp"

namespace handshake::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Throws ContractError unless `j` is an object with the given "format" tag and a
/// supported "version".
void check_header(const json& j, std::string_view format);

json matrix_to_json(const Eigen::MatrixXd& m);  // {rows, cols, data (row-major)}
Eigen::MatrixXd matrix_from_json(const json& j);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);
json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const json& j);

json basis_to_json(const promp::BasisConfig& b);
promp::BasisConfig basis_from_json(const json& j);

json promp_to_json(const promp::ProMP& p);
promp::ProMP promp_from_json(const json& j);

json arm_model_to_json(const kinematics::ArmModel& m);
kinematics::ArmModel arm_model_from_json(const json& j);

json predictor_config_to_json(const predictor::PredictorConfig& c);
predictor::PredictorConfig predictor_config_from_json(const json& j);

json predictor_to_json(const predictor::HandPredictor& p);
predictor::HandPredictor predictor_from_json(const json& j);

struct TrajectoryMeta {
  double frame_rate = 30.0;
  std::string source_label;
  skeleton::SegmentBounds segment_bounds;
  /// Frames whose angle extraction hit the shoulder singularity.
  std::size_t gimbal_frames = 0;

  bool operator==(const TrajectoryMeta&) const = default;
};

json trajectory_meta_to_json(const TrajectoryMeta& m);
TrajectoryMeta trajectory_meta_from_json(const json& j);

/// One {t, joints: [[x,y,z] x 15]} record per line.
std::string skeleton_to_jsonl(const skeleton::SkeletonSequence& seq);
skeleton::SkeletonSequence skeleton_from_jsonl(std::string_view text, double frame_rate = 30.0,
                                               std::string source_label = {});

/// One {t, q: [yaw, pitch, roll, elbow]} record per line.
std::string angles_to_jsonl(const std::vector<kinematics::JointAngles>& angles);
std::vector<kinematics::JointAngles> angles_from_jsonl(std::string_view text);

/// One record per step followed by a {summary: ...} record.
std::string interaction_log_to_jsonl(const control::InteractionLog& log);
control::InteractionLog interaction_log_from_jsonl(std::string_view text);

/// Splits text into non-empty lines and parses each as JSON. Errors carry the line number.
std::vector<json> parse_jsonl(std::string_view text);

}  // namespace handshake::io
