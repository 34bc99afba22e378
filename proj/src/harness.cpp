#include "handshake/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "handshake/error.hpp"

namespace handshake::sim {

namespace fs = std::filesystem;
using io::json;
using skeleton::SkeletonSequence;

namespace {

constexpr std::string_view kConfigFormat = "handshake.config";
constexpr std::string_view kManifestFormat = "handshake.manifest";

template <typename T>
void take(const json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("config field '") + key + "': " + e.what());
  }
}

std::string csv_number(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

// Linear interpolation over non-finite joint samples; ends are held.
void fill_gaps(SkeletonSequence& seq) {
  const std::size_t n = seq.size();
  for (std::size_t j = 0; j < skeleton::kUpperBodyJointCount; ++j) {
    std::optional<std::size_t> last;
    for (std::size_t t = 0; t < n; ++t) {
      if (!seq.frames[t].joints[j].allFinite()) continue;
      if (last && t > *last + 1) {
        const Vec3 a = seq.frames[*last].joints[j];
        const Vec3 b = seq.frames[t].joints[j];
        for (std::size_t k = *last + 1; k < t; ++k) {
          const double s = static_cast<double>(k - *last) / static_cast<double>(t - *last);
          seq.frames[k].joints[j] = (1.0 - s) * a + s * b;
        }
      } else if (!last) {
        for (std::size_t k = 0; k < t; ++k) seq.frames[k].joints[j] = seq.frames[t].joints[j];
      }
      last = t;
    }
    if (!last) throw GeometryError("joint " + std::to_string(j) + " is never tracked");
    for (std::size_t k = *last + 1; k < n; ++k) seq.frames[k].joints[j] = seq.frames[*last].joints[j];
  }
}

SkeletonSequence to_local(const SkeletonSequence& seq, const kinematics::TorsoFrame& frame) {
  SkeletonSequence out = seq;
  for (auto& f : out.frames) {
    for (auto& p : f.joints) p = frame.to_local(p);
  }
  return out;
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

}  // namespace

void PipelineConfig::validate() const {
  segmentation.validate();
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ContractError("test_fraction must lie in [0, 1)");
  basis.validate();
  if (!(ridge_lambda >= 0.0)) throw ContractError("ridge_lambda must be non-negative");
  if (!(obs_noise_std > 0.0)) throw ContractError("obs_noise_std must be positive");
  predictor.validate();
  controller.blend.validate();
}

json config_to_json(const PipelineConfig& cfg) {
  const auto& s = cfg.segmentation;
  const auto& c = cfg.controller;
  return {{"format", kConfigFormat},
          {"version", io::kFormatVersion},
          {"segmentation",
           {{"start_velocity_threshold", s.start_velocity_threshold},
            {"grasp_distance_threshold", s.grasp_distance_threshold},
            {"min_length", s.min_length},
            {"max_gap", s.max_gap},
            {"speed_window", s.speed_window},
            {"sustain_frames", s.sustain_frames},
            {"discontinuity_threshold", s.discontinuity_threshold}}},
          {"split", {{"test_fraction", cfg.test_fraction}}},
          {"promp",
           {{"basis", io::basis_to_json(cfg.basis)},
            {"ridge_lambda", cfg.ridge_lambda},
            {"obs_noise_std", cfg.obs_noise_std}}},
          {"predictor", io::predictor_config_to_json(cfg.predictor)},
          {"controller",
           {{"expected_length", c.blend.expected_length},
            {"expected_length_from_data", cfg.expected_length_from_data},
            {"center_fraction", c.blend.center_fraction},
            {"sigmoid_slope", c.blend.sigmoid_slope},
            {"task_accuracy_std", std::sqrt(c.task_accuracy(0, 0))},
            {"kappa", c.conditioning.kappa},
            {"max_iters", c.conditioning.max_iters}}}};
}

PipelineConfig config_from_json(const json& j) {
  io::check_header(j, kConfigFormat);
  PipelineConfig cfg;
  if (j.contains("segmentation")) {
    const json& s = j.at("segmentation");
    auto& seg = cfg.segmentation;
    take(s, "start_velocity_threshold", seg.start_velocity_threshold);
    take(s, "grasp_distance_threshold", seg.grasp_distance_threshold);
    take(s, "min_length", seg.min_length);
    take(s, "max_gap", seg.max_gap);
    take(s, "speed_window", seg.speed_window);
    take(s, "sustain_frames", seg.sustain_frames);
    take(s, "discontinuity_threshold", seg.discontinuity_threshold);
  }
  if (j.contains("split")) take(j.at("split"), "test_fraction", cfg.test_fraction);
  if (j.contains("promp")) {
    const json& p = j.at("promp");
    if (p.contains("basis")) {
      const json& b = p.at("basis");
      if (b.contains("centers")) {
        cfg.basis = io::basis_from_json(b);
      } else {
        std::size_t n = cfg.basis.n_basis;
        double width = cfg.basis.width;
        bool normalize = cfg.basis.normalize;
        take(b, "n_basis", n);
        take(b, "width", width);
        take(b, "normalize", normalize);
        cfg.basis = promp::BasisConfig::equally_spaced(n, width, normalize);
      }
    }
    take(p, "ridge_lambda", cfg.ridge_lambda);
    take(p, "obs_noise_std", cfg.obs_noise_std);
  }
  if (j.contains("predictor")) cfg.predictor = io::predictor_config_from_json(j.at("predictor"));
  if (j.contains("controller")) {
    const json& c = j.at("controller");
    auto& ctl = cfg.controller;
    take(c, "expected_length", ctl.blend.expected_length);
    take(c, "expected_length_from_data", cfg.expected_length_from_data);
    take(c, "center_fraction", ctl.blend.center_fraction);
    take(c, "sigmoid_slope", ctl.blend.sigmoid_slope);
    double accuracy = std::sqrt(ctl.task_accuracy(0, 0));
    take(c, "task_accuracy_std", accuracy);
    if (!(accuracy > 0.0)) throw ContractError("task_accuracy_std must be positive");
    ctl.task_accuracy = Eigen::Matrix3d::Identity() * accuracy * accuracy;
    take(c, "kappa", ctl.conditioning.kappa);
    take(c, "max_iters", ctl.conditioning.max_iters);
  }
  cfg.validate();
  return cfg;
}

std::size_t DatasetManifest::accepted() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.accepted; }));
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
}

json manifest_to_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json j = {{"source", e.source}, {"status", e.accepted ? "accepted" : "rejected"}};
    if (!e.accepted) {
      j["reason"] = e.reason;
      j["detail"] = e.detail;
    }
    if (e.split) j["split"] = split_name(*e.split);
    if (e.bounds) j["segment_bounds"] = {{"start", e.bounds->start}, {"grasp", e.bounds->grasp}};
    entries.push_back(std::move(j));
  }
  return {{"format", kManifestFormat},
          {"version", io::kFormatVersion},
          {"split_seed", m.split_seed},
          {"counts",
           {{"total", m.entries.size()},
            {"accepted", m.accepted()},
            {"rejected", m.rejected()},
            {"train", m.count(Split::Train)},
            {"test", m.count(Split::Test)}}},
          {"entries", std::move(entries)}};
}

DatasetManifest manifest_from_json(const json& j) {
  io::check_header(j, kManifestFormat);
  DatasetManifest m;
  try {
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.source = e.at("source").get<std::string>();
      const auto status = e.at("status").get<std::string>();
      if (status != "accepted" && status != "rejected") throw ContractError("unknown status " + status);
      entry.accepted = status == "accepted";
      if (!entry.accepted) {
        entry.reason = e.at("reason").get<std::string>();
        entry.detail = e.value("detail", "");
      }
      if (e.contains("split")) {
        const auto s = e.at("split").get<std::string>();
        if (s != "train" && s != "test") throw ContractError("unknown split " + s);
        entry.split = s == "train" ? Split::Train : Split::Test;
      }
      if (e.contains("segment_bounds")) {
        entry.bounds = skeleton::SegmentBounds{e.at("segment_bounds").at("start").get<std::size_t>(),
                                               e.at("segment_bounds").at("grasp").get<std::size_t>()};
      }
      if (entry.accepted != entry.split.has_value()) throw ContractError("split must cover exactly the accepted entries");
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("manifest: ") + e.what());
  }
  return m;
}

fs::path partner_path(const fs::path& dir, const std::string& name) {
  return dir / "trajectories" / (name + ".partner.jsonl");
}
fs::path robot_path(const fs::path& dir, const std::string& name) {
  return dir / "trajectories" / (name + ".robot.jsonl");
}
fs::path angles_path(const fs::path& dir, const std::string& name) {
  return dir / "trajectories" / (name + ".angles.jsonl");
}
fs::path meta_path(const fs::path& dir, const std::string& name) {
  return dir / "trajectories" / (name + ".meta.json");
}

DatasetManifest prepare_dataset(const fs::path& input_dir, const fs::path& out_dir, const PipelineConfig& cfg,
                                std::uint64_t split_seed) {
  cfg.validate();
  if (!fs::is_directory(input_dir)) throw PipelineError("input directory " + input_dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".skeleton") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  DatasetManifest manifest;
  manifest.split_seed = split_seed;
  for (const auto& file : files) {
    ManifestEntry entry;
    entry.source = file.filename().string();
    const std::string name = file.stem().string();
    const auto reject = [&](std::string reason, std::string detail) {
      entry.reason = std::move(reason);
      entry.detail = std::move(detail);
      manifest.entries.push_back(entry);
    };

    std::vector<skeleton::RawSkeletonSequence> bodies;
    try {
      bodies = skeleton::parse_skeleton_file(io::read_text_file(file), entry.source);
    } catch (const EmptyInputError& e) {
      reject("empty", e.what());
      continue;
    } catch (const ParseError& e) {
      reject("parse error", e.what());
      continue;
    }
    const auto pair = skeleton::pair_bodies(bodies);
    if (!pair) {
      reject("single body", "fewer than two tracked bodies share frames");
      continue;
    }
    const auto result = skeleton::segment_reach_phase(skeleton::select_upper_body(pair->first),
                                                      skeleton::select_upper_body(pair->second), cfg.segmentation);
    if (const auto* r = std::get_if<skeleton::Rejection>(&result)) {
      reject(std::string(skeleton::to_string(r->reason)), r->detail);
      continue;
    }
    const auto& seg = std::get<skeleton::ReachSegment>(result);

    PreparedTrajectory traj;
    try {
      SkeletonSequence partner = seg.first;
      SkeletonSequence robot = seg.second;
      fill_gaps(partner);
      fill_gaps(robot);
      const auto frame = kinematics::torso_frame(robot.frames.front());
      traj.partner = to_local(partner, frame);
      traj.robot = to_local(robot, frame);
      for (const auto& f : traj.robot.frames) {
        const auto ex = kinematics::extract_joint_angles(f);
        traj.angles.push_back(ex.angles);
        if (ex.gimbal_flag) ++traj.meta.gimbal_frames;
      }
    } catch (const GeometryError& e) {
      reject("geometry", e.what());
      continue;
    }
    entry.accepted = true;
    entry.bounds = seg.bounds;
    const io::TrajectoryMeta meta{seg.first.frame_rate, entry.source, seg.bounds, traj.meta.gimbal_frames};
    io::write_text_file(partner_path(out_dir, name), io::skeleton_to_jsonl(traj.partner));
    io::write_text_file(robot_path(out_dir, name), io::skeleton_to_jsonl(traj.robot));
    io::write_text_file(angles_path(out_dir, name), io::angles_to_jsonl(traj.angles));
    io::write_text_file(meta_path(out_dir, name), io::trajectory_meta_to_json(meta).dump(2) + "\n");
    manifest.entries.push_back(entry);
  }

  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].accepted) accepted.push_back(i);
  }
  if (accepted.empty()) {
    throw PipelineError("no accepted trajectories among " + std::to_string(files.size()) + " files in " +
                        input_dir.string());
  }
  std::mt19937_64 rng(split_seed);
  std::shuffle(accepted.begin(), accepted.end(), rng);
  auto n_test = static_cast<std::size_t>(std::lround(cfg.test_fraction * static_cast<double>(accepted.size())));
  n_test = std::min(n_test, accepted.size() - 1);
  for (std::size_t k = 0; k < accepted.size(); ++k) {
    manifest.entries[accepted[k]].split = k < n_test ? Split::Test : Split::Train;
  }
  io::write_text_file(out_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

std::vector<PreparedTrajectory> load_prepared(const fs::path& data_dir, Split split) {
  const auto manifest = manifest_from_json(io::json::parse(io::read_text_file(data_dir / "manifest.json")));
  std::vector<PreparedTrajectory> out;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    PreparedTrajectory t;
    t.name = fs::path(e.source).stem().string();
    t.meta = io::trajectory_meta_from_json(io::json::parse(io::read_text_file(meta_path(data_dir, t.name))));
    t.partner = io::skeleton_from_jsonl(io::read_text_file(partner_path(data_dir, t.name)), t.meta.frame_rate,
                                        t.meta.source_label);
    t.robot = io::skeleton_from_jsonl(io::read_text_file(robot_path(data_dir, t.name)), t.meta.frame_rate,
                                      t.meta.source_label);
    t.angles = io::angles_from_jsonl(io::read_text_file(angles_path(data_dir, t.name)));
    if (t.partner.size() != t.robot.size() || t.angles.size() != t.robot.size()) {
      throw ContractError(t.name + ": trajectory files disagree in length");
    }
    out.push_back(std::move(t));
  }
  return out;
}

promp::ProMP fit_promp_from(std::span<const PreparedTrajectory> data, const PipelineConfig& cfg) {
  std::vector<Eigen::VectorXd> weights;
  for (const auto& t : data) {
    // Angles jump across the shoulder singularity.
    if (t.meta.gimbal_frames > 0) continue;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(t.angles.size()), 4);
    for (std::size_t i = 0; i < t.angles.size(); ++i) values.row(static_cast<Eigen::Index>(i)) = t.angles[i].as_vector();
    weights.push_back(promp::fit_weights(promp::JointTrajectory::uniform(std::move(values)), cfg.basis,
                                         promp::Ridge{cfg.ridge_lambda}));
  }
  if (weights.size() < 2) throw PipelineError("a primitive needs at least two demonstrations without gimbal frames");
  const Eigen::MatrixXd noise = Eigen::Matrix4d::Identity() * cfg.obs_noise_std * cfg.obs_noise_std;
  return promp::fit_promp(weights, noise, cfg.basis);
}

kinematics::ArmModel fit_arm_model_from(std::span<const PreparedTrajectory> data) {
  std::vector<SkeletonSequence> robots;
  for (const auto& t : data) robots.push_back(t.robot);
  return kinematics::estimate_arm_model(robots, skeleton::UpperJoint::HandTipRight);
}

predictor::TrainingResult train_predictor_from(std::span<const PreparedTrajectory> data,
                                               const predictor::PredictorConfig& cfg) {
  std::vector<predictor::TrainingSample> samples;
  for (const auto& t : data) samples.push_back({t.partner, control::observed_hand(t.partner.frames.back())});
  return predictor::train(samples, cfg);
}

double median_length(std::span<const PreparedTrajectory> data) {
  if (data.empty()) throw ContractError("median length of an empty set");
  std::vector<double> lengths;
  for (const auto& t : data) lengths.push_back(static_cast<double>(t.robot.size()));
  std::sort(lengths.begin(), lengths.end());
  const std::size_t n = lengths.size();
  return n % 2 == 1 ? lengths[n / 2] : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
}

control::InteractionLog run_interaction(const SkeletonSequence& partner, const promp::ProMP& prior,
                                        std::shared_ptr<const predictor::HandPredictor> model,
                                        const kinematics::ArmModel& arm, const control::ControllerOptions& options) {
  control::InteractionController controller(prior, arm, std::move(model), options);
  for (const auto& frame : partner.frames) controller.step(frame);
  return controller.finish();
}

EvaluationSummary evaluate(std::span<const control::InteractionLog> logs) {
  if (logs.empty()) throw ContractError("nothing to evaluate");
  EvaluationSummary s;
  for (const auto& log : logs) {
    s.errors.push_back(log.summary.final_reaching_error);
    s.nonconverged_steps += log.summary.nonconverged_steps;
    s.fallback_steps += log.summary.fallback_steps;
  }
  s.count = s.errors.size();
  const double n = static_cast<double>(s.count);
  s.mean = std::accumulate(s.errors.begin(), s.errors.end(), 0.0) / n;
  double ss = 0.0;
  for (const double e : s.errors) ss += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

json summary_to_json(const EvaluationSummary& s) {
  return {{"count", s.count},       {"mean", s.mean},
          {"std", s.std},           {"errors", s.errors},
          {"nonconverged_steps", s.nonconverged_steps}, {"fallback_steps", s.fallback_steps}};
}

std::string loss_curve_csv(std::span<const double> losses) {
  std::string out = "epoch,loss_m2\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i + 1) + "," + csv_number(losses[i]) + "\n";
  return out;
}

std::string interaction_csv(const control::InteractionLog& log, std::span<const kinematics::JointAngles> observed) {
  std::string out =
      "t,z,obs_yaw,obs_pitch,obs_roll,obs_elbow,cmd_yaw,cmd_pitch,cmd_roll,cmd_elbow,"
      "hand_x,hand_y,hand_z,target_x,target_y,target_z,ee_x,ee_y,ee_z\n";
  for (const auto& r : log.steps) {
    std::vector<double> row{r.z};
    const Eigen::Vector4d obs = r.t < observed.size() ? observed[r.t].as_vector() : Eigen::Vector4d::Constant(NAN);
    for (int k = 0; k < 4; ++k) row.push_back(obs[k]);
    for (int k = 0; k < 4; ++k) row.push_back(r.command.as_vector()[k]);
    for (const Vec3* v : {&r.h_obs, &r.h_star, &r.fk_position}) {
      for (int k = 0; k < 3; ++k) row.push_back((*v)[k]);
    }
    out += std::to_string(r.t);
    for (const double v : row) out += "," + csv_number(v);
    out += "\n";
  }
  return out;
}

std::string error_histogram_csv(std::span<const double> errors, double bin_width) {
  if (!(bin_width > 0.0)) throw ContractError("bin width must be positive");
  std::string out = "bin_low_m,bin_high_m,count\n";
  if (errors.empty()) return out;
  const double top = *std::max_element(errors.begin(), errors.end());
  const auto bins = static_cast<std::size_t>(std::floor(top / bin_width)) + 1;
  std::vector<std::size_t> counts(bins, 0);
  for (const double e : errors) ++counts[std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, e) / bin_width))];
  for (std::size_t b = 0; b < bins; ++b) {
    out += csv_number(static_cast<double>(b) * bin_width) + "," + csv_number(static_cast<double>(b + 1) * bin_width) +
           "," + std::to_string(counts[b]) + "\n";
  }
  return out;
}

EndToEndResult run_end_to_end(const SyntheticConfig& data, const PipelineConfig& cfg, std::uint64_t split_seed,
                              const fs::path& work_dir) {
  const auto recordings = generate_synthetic_dataset(data);
  write_synthetic_dataset(recordings, work_dir / "raw");
  EndToEndResult result;
  result.manifest = prepare_dataset(work_dir / "raw", work_dir / "prepared", cfg, split_seed);
  const auto train = load_prepared(work_dir / "prepared", Split::Train);
  const auto test = load_prepared(work_dir / "prepared", Split::Test);
  if (test.empty()) throw PipelineError("test split is empty");

  const auto prior = fit_promp_from(train, cfg);
  const auto arm = fit_arm_model_from(train);
  result.training = train_predictor_from(train, cfg.predictor);
  const auto model = std::make_shared<const predictor::HandPredictor>(result.training.predictor);
  control::ControllerOptions options = cfg.controller;
  if (cfg.expected_length_from_data) options.blend.expected_length = median_length(train);

  for (const auto& t : test) result.logs.push_back(run_interaction(t.partner, prior, model, arm, options));
  result.summary = evaluate(result.logs);
  return result;
}

}  // namespace handshake::sim
