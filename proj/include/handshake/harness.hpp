#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "handshake/blend_control.hpp"
#include "handshake/io.hpp"
#include "handshake/kinematics.hpp"
#include "handshake/predictor.hpp"
#include "handshake/promp.hpp"
#include "handshake/skeleton.hpp"
#include "handshake/synthetic.hpp"

namespace handshake::sim {

/// Everything the CLI reads from `--config`. Sections that are absent keep their defaults.
struct PipelineConfig {
  skeleton::SegmentationConfig segmentation;
  double test_fraction = 0.2;
  promp::BasisConfig basis;
  double ridge_lambda = 1e-10;
  double obs_noise_std = 0.01;  // rad
  predictor::PredictorConfig predictor;
  control::ControllerOptions controller;
  /// Use the median training segment length as the controller's expected length.
  bool expected_length_from_data = true;

  void validate() const;
};

io::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const io::json& j);

enum class Split { Train, Test };

struct ManifestEntry {
  std::string source;  // skeleton file name
  bool accepted = false;
  std::string reason;  // rejection reason, empty when accepted
  std::string detail;
  std::optional<Split> split;
  std::optional<skeleton::SegmentBounds> bounds;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::uint64_t split_seed = 0;
  std::vector<ManifestEntry> entries;

  std::size_t accepted() const;
  std::size_t rejected() const { return entries.size() - accepted(); }
  std::size_t count(Split s) const;

  bool operator==(const DatasetManifest&) const = default;
};

io::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const io::json& j);

/// One accepted handshake, expressed in the robot's torso frame at the segment's first
/// frame. The second recorded person plays the robot, the first is the partner.
struct PreparedTrajectory {
  std::string name;
  skeleton::SkeletonSequence partner;
  skeleton::SkeletonSequence robot;
  std::vector<kinematics::JointAngles> angles;  // the robot's right arm
  io::TrajectoryMeta meta;
};

/// Segments every `*.skeleton` file in `input_dir` (sorted by name), writes the cleaned
/// trajectories and `manifest.json` into `out_dir`, and splits the accepted ones.
DatasetManifest prepare_dataset(const std::filesystem::path& input_dir, const std::filesystem::path& out_dir,
                                const PipelineConfig& cfg, std::uint64_t split_seed);

std::vector<PreparedTrajectory> load_prepared(const std::filesystem::path& data_dir, Split split);

/// Trajectory files written by prepare_dataset for `name`.
std::filesystem::path partner_path(const std::filesystem::path& data_dir, const std::string& name);
std::filesystem::path robot_path(const std::filesystem::path& data_dir, const std::string& name);
std::filesystem::path angles_path(const std::filesystem::path& data_dir, const std::string& name);
std::filesystem::path meta_path(const std::filesystem::path& data_dir, const std::string& name);

promp::ProMP fit_promp_from(std::span<const PreparedTrajectory> data, const PipelineConfig& cfg);
/// Robot arm with the hand tip as end-effector, pooled over the trajectories.
kinematics::ArmModel fit_arm_model_from(std::span<const PreparedTrajectory> data);
predictor::TrainingResult train_predictor_from(std::span<const PreparedTrajectory> data,
                                               const predictor::PredictorConfig& cfg);
/// Median segment length, in frames.
double median_length(std::span<const PreparedTrajectory> data);

/// Replays the partner frame by frame through the controller.
control::InteractionLog run_interaction(const skeleton::SkeletonSequence& partner, const promp::ProMP& prior,
                                        std::shared_ptr<const predictor::HandPredictor> model,
                                        const kinematics::ArmModel& arm, const control::ControllerOptions& options);

struct EvaluationSummary {
  std::vector<double> errors;  // final reaching error per interaction, m
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
  std::size_t nonconverged_steps = 0;
  std::size_t fallback_steps = 0;
};

EvaluationSummary evaluate(std::span<const control::InteractionLog> logs);
io::json summary_to_json(const EvaluationSummary& s);

std::string loss_curve_csv(std::span<const double> losses);
/// Recorded robot angles next to the commanded ones, plus hand and end-effector positions.
std::string interaction_csv(const control::InteractionLog& log, std::span<const kinematics::JointAngles> observed);
std::string error_histogram_csv(std::span<const double> errors, double bin_width = 0.005);

struct EndToEndResult {
  DatasetManifest manifest;
  predictor::TrainingResult training;
  std::vector<control::InteractionLog> logs;
  EvaluationSummary summary;
};

/// Generate -> prepare -> fit -> train -> replay the test split, all under `work_dir`.
EndToEndResult run_end_to_end(const SyntheticConfig& data, const PipelineConfig& cfg, std::uint64_t split_seed,
                              const std::filesystem::path& work_dir);

}  // namespace handshake::sim
