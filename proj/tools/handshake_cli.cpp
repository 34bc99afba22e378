#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "handshake/error.hpp"
#include "handshake/harness.hpp"
#include "handshake/io.hpp"
#include "handshake/synthetic.hpp"

namespace fs = std::filesystem;
using namespace handshake;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

sim::PipelineConfig load_config(const Globals& g) {
  if (g.config.empty()) return {};
  return sim::config_from_json(io::json::parse(io::read_text_file(g.config)));
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ContractError("--out is required");
  return g.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn and replay handshake reaching from skeleton recordings"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "Pipeline configuration (JSON)");
  app.add_option("--out", g.out, "Output directory (output file for train-predictor)");

  auto* synth = app.add_subcommand("synth-data", "Generate synthetic two-person handshakes");
  std::size_t count = 10;
  double noise = 0.005;
  std::size_t left_handed = 0;
  synth->add_option("--count", count, "Number of recordings");
  synth->add_option("--noise", noise, "Joint noise standard deviation, m");
  synth->add_option("--left-handed", left_handed, "How many of them are left-handed");

  auto* prepare = app.add_subcommand("prepare-data", "Segment recordings into cleaned trajectories");
  std::string input;
  prepare->add_option("--input", input, "Directory of .skeleton files")->required();

  auto* fit = app.add_subcommand("fit-promp", "Fit the movement primitive and arm model");
  std::string data;
  fit->add_option("--data", data, "Prepared dataset directory")->required();

  auto* train = app.add_subcommand("train-predictor", "Train the final-hand predictor");
  std::optional<std::size_t> epochs, batch_size;
  train->add_option("--data", data, "Prepared dataset directory")->required();
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--batch-size", batch_size, "Sequences per batch");

  auto* simulate = app.add_subcommand("simulate", "Replay held-out interactions");
  std::string promp_file, arm_file, predictor_file, split = "test";
  simulate->add_option("--data", data, "Prepared dataset directory")->required();
  simulate->add_option("--promp", promp_file, "Primitive file")->required();
  simulate->add_option("--arm", arm_file, "Arm model file")->required();
  simulate->add_option("--predictor", predictor_file, "Predictor weights file")->required();
  simulate->add_option("--split", split, "Which split to replay")->check(CLI::IsMember({"train", "test"}));

  auto* eval = app.add_subcommand("eval", "Summarise interaction logs");
  std::string logs_dir;
  eval->add_option("--logs", logs_dir, "Directory of interaction logs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const sim::PipelineConfig cfg = load_config(g);

    if (synth->parsed()) {
      sim::SyntheticConfig sc;
      sc.count = count;
      sc.seed = g.seed;
      sc.noise = noise;
      sc.left_handed_count = left_handed;
      sc.segmentation = cfg.segmentation;
      const auto recordings = sim::generate_synthetic_dataset(sc);
      sim::write_synthetic_dataset(recordings, require_out(g));
      std::cout << "wrote " << recordings.size() << " recordings to " << g.out << "\n";
    } else if (prepare->parsed()) {
      const auto manifest = sim::prepare_dataset(input, require_out(g), cfg, g.seed);
      std::cout << manifest.accepted() << " accepted, " << manifest.rejected() << " rejected ("
                << manifest.count(sim::Split::Train) << " train / " << manifest.count(sim::Split::Test) << " test)\n";
    } else if (fit->parsed()) {
      const fs::path out = require_out(g);
      const auto train_set = sim::load_prepared(data, sim::Split::Train);
      const auto prior = sim::fit_promp_from(train_set, cfg);
      const auto arm = sim::fit_arm_model_from(train_set);
      io::write_text_file(out / "promp.json", io::promp_to_json(prior).dump(2) + "\n");
      io::write_text_file(out / "arm_model.json", io::arm_model_to_json(arm).dump(2) + "\n");
      std::cout << "fitted on " << train_set.size() << " trajectories; median length "
                << sim::median_length(train_set) << " frames\n";
    } else if (train->parsed()) {
      const fs::path out = require_out(g);
      predictor::PredictorConfig pc = cfg.predictor;
      pc.seed = g.seed;
      if (epochs) pc.epochs = *epochs;
      if (batch_size) pc.batch_size = *batch_size;
      const auto train_set = sim::load_prepared(data, sim::Split::Train);
      const auto result = sim::train_predictor_from(train_set, pc);
      io::write_text_file(out, io::predictor_to_json(result.predictor).dump() + "\n");
      fs::path curve = out;
      curve.replace_extension(".loss.csv");
      io::write_text_file(curve, sim::loss_curve_csv(result.loss_curve));
      std::cout << "final training loss " << result.loss_curve.back() << " m^2\n";
    } else if (simulate->parsed()) {
      const fs::path out = require_out(g);
      const auto prior = io::promp_from_json(io::json::parse(io::read_text_file(promp_file)));
      const auto arm = io::arm_model_from_json(io::json::parse(io::read_text_file(arm_file)));
      const auto model = std::make_shared<const predictor::HandPredictor>(
          io::predictor_from_json(io::json::parse(io::read_text_file(predictor_file))));
      control::ControllerOptions options = cfg.controller;
      if (cfg.expected_length_from_data) {
        options.blend.expected_length = sim::median_length(sim::load_prepared(data, sim::Split::Train));
      }
      const auto trajectories = sim::load_prepared(data, split == "train" ? sim::Split::Train : sim::Split::Test);
      if (trajectories.empty()) throw PipelineError("the " + split + " split is empty");
      std::vector<control::InteractionLog> logs;
      for (const auto& t : trajectories) {
        logs.push_back(sim::run_interaction(t.partner, prior, model, arm, options));
        io::write_text_file(out / "logs" / (t.name + ".jsonl"), io::interaction_log_to_jsonl(logs.back()));
        io::write_text_file(out / "csv" / (t.name + ".csv"), sim::interaction_csv(logs.back(), t.angles));
      }
      const auto summary = sim::evaluate(logs);
      io::write_text_file(out / "summary.json", sim::summary_to_json(summary).dump(2) + "\n");
      std::cout << "replayed " << summary.count << " interactions: final reaching error " << summary.mean
                << " +- " << summary.std << " m\n";
    } else if (eval->parsed()) {
      const fs::path out = require_out(g);
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(logs_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<control::InteractionLog> logs;
      for (const auto& f : files) logs.push_back(io::interaction_log_from_jsonl(io::read_text_file(f)));
      const auto summary = sim::evaluate(logs);
      io::write_text_file(out / "evaluation.json", sim::summary_to_json(summary).dump(2) + "\n");
      io::write_text_file(out / "error_histogram.csv", sim::error_histogram_csv(summary.errors));
      std::cout << "count " << summary.count << ", mean " << summary.mean << " m, std " << summary.std
                << " m, non-converged steps " << summary.nonconverged_steps << "\n";
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyInputError& e) {
    std::cerr << "empty input: " << e.what() << "\n";
    return 2;
  } catch (const GeometryError& e) {
    std::cerr << "invalid geometry: " << e.what() << "\n";
    return 2;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline: " << e.what() << "\n";
    return 2;
  } catch (const io::json::exception& e) {
    std::cerr << "invalid JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
