#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trinet/checkpoint.hpp"
#include "trinet/config.hpp"
#include "trinet/data.hpp"
#include "trinet/diagnostics.hpp"
#include "trinet/pipeline.hpp"
#include "trinet/rng.hpp"

namespace {

constexpr std::size_t kCosineSamplePairs = 512;

/// Loads a config file, optionally replacing the experiment seed before the
/// document is interpreted so that a dataset seed left unpinned follows the
/// override exactly as it would follow the file's own seed.
trinet::ExperimentConfig load_config(const std::string& path, bool has_seed,
                                     std::uint64_t seed) {
  if (!has_seed) return trinet::load_experiment_config(path);
  std::ifstream in(path);
  if (!in) throw trinet::ConfigError("config: cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& error) {
    throw trinet::ConfigError(std::string("config: not valid JSON: ") + error.what());
  }
  if (!root.is_object()) throw trinet::ConfigError("config: root must be an object");
  root["seed"] = seed;
  return trinet::parse_experiment_config(root.dump());
}

int do_run(const trinet::ExperimentConfig& config) {
  const trinet::ExperimentSummary summary = trinet::run_experiment(config);
  std::cout << "mode: " << to_string(config.loss.mode) << "\n"
            << "seed: " << config.seed << "\n";
  if (trinet::needs_frozen_teacher(config.loss.mode)) {
    std::cout << "frozen teacher validation accuracy: " << summary.frozen_val_accuracy
              << "\n";
  }
  std::cout << "probe accuracy: " << summary.probe_accuracy << "\n"
            << "mean variance: " << summary.initial_metrics.mean_variance << " -> "
            << summary.final_metrics.mean_variance << "\n"
            << "effective rank: " << summary.initial_metrics.effective_rank << " -> "
            << summary.final_metrics.effective_rank << "\n"
            << "wall time: " << summary.total_wall_seconds << " s\n"
            << "artifacts: " << config.output_dir << "\n";
  return 0;
}

int do_probe(const trinet::ExperimentConfig& config, const std::string& checkpoint_path,
             std::size_t tap) {
  const trinet::Checkpoint checkpoint = trinet::load_checkpoint(checkpoint_path);
  const trinet::LabeledDataset dataset = trinet::prepare_dataset(config);
  const std::size_t chosen_tap = tap != 0 ? tap : config.resolved_probe_tap();
  const double accuracy =
      trinet::linear_probe(checkpoint.branches.student, dataset, config, chosen_tap);
  std::cout << "checkpoint step: " << checkpoint.step << "\n"
            << "probe tap: block " << chosen_tap << "\n"
            << "probe accuracy: " << accuracy << "\n";
  return 0;
}

int do_generate(const trinet::ExperimentConfig& config, std::string out_path) {
  if (out_path.empty()) out_path = config.output_dir + "/dataset.trin";
  const std::filesystem::path parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    if (ec) {
      throw std::runtime_error("generate-data: cannot create '" + parent.string() +
                               "': " + ec.message());
    }
  }
  trinet::LabeledDataset dataset = trinet::prepare_dataset(config);
  trinet::save(dataset, out_path);
  std::cout << "sequences: " << dataset.num_sequences << " x " << dataset.seq_len
            << " frames x " << dataset.feature_dim << " features\n"
            << "classes: " << dataset.num_classes << "\n"
            << "pretrain/finetune/eval: "
            << dataset.sequence_indices(trinet::Split::pretrain).size() << "/"
            << dataset.sequence_indices(trinet::Split::finetune).size() << "/"
            << dataset.sequence_indices(trinet::Split::eval).size() << "\n"
            << "wrote " << out_path << "\n";
  return 0;
}

int do_diag(const std::string& checkpoint_path, const std::string& plot_path) {
  const trinet::Checkpoint checkpoint = trinet::load_checkpoint(checkpoint_path);
  const trinet::ExperimentConfig config =
      trinet::parse_experiment_config(checkpoint.config_text);
  const trinet::LabeledDataset dataset = trinet::prepare_dataset(config);
  const trinet::Embeddings embeddings =
      trinet::capture_embeddings(checkpoint.branches.student, dataset, config,
                                 config.resolved_probe_tap(), trinet::Split::eval);

  trinet::Rng rng = trinet::derive_rng(config.seed, "diag-cli");
  const trinet::CollapseMetrics metrics =
      trinet::collapse_metrics(embeddings, checkpoint.step, kCosineSamplePairs, rng);
  std::cout << "checkpoint step: " << metrics.step << "\n"
            << "eval frames: " << embeddings.rows << " x " << embeddings.dim << "\n"
            << "mean per-dimension variance: " << metrics.mean_variance << "\n"
            << "effective rank: " << metrics.effective_rank << " (of "
            << embeddings.dim << ")\n"
            << "mean pairwise cosine: " << metrics.mean_pairwise_cosine << "\n"
            << "zero rows: " << metrics.zero_rows << "\n";

  if (!plot_path.empty()) {
    const std::vector<std::uint16_t> step_labels =
        trinet::downsample_labels(dataset, config.encoder.downsample_stride);
    const std::size_t steps_per_sequence =
        config.encoder.output_steps(dataset.seq_len);
    std::vector<int> labels;
    labels.reserve(embeddings.rows);
    for (std::size_t seq : dataset.sequence_indices(trinet::Split::eval)) {
      for (std::size_t t = 0; t < steps_per_sequence; ++t) {
        labels.push_back(step_labels[seq * steps_per_sequence + t]);
      }
    }
    trinet::export_embeddings(trinet::pca_project(embeddings, 2), labels, plot_path);
    std::cout << "wrote " << plot_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TriNet triple-branch self-supervised training"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  std::string out_path;
  std::uint64_t seed = 0;
  std::size_t tap = 0;

  CLI::App* run = app.add_subcommand("run", "Run the full experiment protocol");
  run->add_option("--config", config_path, "Experiment config file")->required();
  CLI::Option* run_seed = run->add_option("--seed", seed, "Override the config seed");

  CLI::App* probe =
      app.add_subcommand("probe", "Linear-probe a checkpoint's representations");
  probe->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  probe->add_option("--config", config_path, "Experiment config file")->required();
  CLI::Option* probe_seed = probe->add_option("--seed", seed, "Override the config seed");
  probe->add_option("--tap", tap, "Probe block (1-based; 0 = config default)");

  CLI::App* generate =
      app.add_subcommand("generate-data", "Generate and save the synthetic corpus");
  generate->add_option("--config", config_path, "Experiment config file")->required();
  CLI::Option* generate_seed =
      generate->add_option("--seed", seed, "Override the config seed");
  generate->add_option("--out", out_path, "Dataset path (default <output_dir>/dataset.trin)");

  CLI::App* diag = app.add_subcommand("diag", "Collapse diagnostics for a checkpoint");
  diag->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  diag->add_option("--plot", out_path, "Also write a 2D PCA projection CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    return app.exit(error);
  }

  try {
    if (app.got_subcommand(run)) {
      return do_run(load_config(config_path, run_seed->count() > 0, seed));
    }
    if (app.got_subcommand(probe)) {
      return do_probe(load_config(config_path, probe_seed->count() > 0, seed),
                      checkpoint_path, tap);
    }
    if (app.got_subcommand(generate)) {
      return do_generate(load_config(config_path, generate_seed->count() > 0, seed),
                         out_path);
    }
    if (app.got_subcommand(diag)) {
      return do_diag(checkpoint_path, out_path);
    }
  } catch (const trinet::ConfigError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 2;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
