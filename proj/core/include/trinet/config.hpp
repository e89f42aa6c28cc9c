#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "trinet/data.hpp"
#include "trinet/encoder.hpp"
#include "trinet/losses.hpp"
#include "trinet/model.hpp"
#include "trinet/optimizer.hpp"

namespace trinet {

/// Invalid or missing configuration. The message names the offending field;
/// the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Step counts, optimizer settings, masking, and schedule knobs for the three
/// training phases. Zero-valued fields marked "0 = derived" are resolved
/// against the rest of the experiment when the file is loaded.
struct TrainingConfig {
  std::size_t frozen_teacher_steps = 30;
  std::size_t pretrain_steps = 2000;
  std::size_t probe_steps = 500;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 100;
  double frozen_learning_rate = 1e-3;
  double probe_learning_rate = 1e-2;
  double mask_start_prob = 0.065;
  std::size_t mask_span = 10;
  double tau_start = 0.999;
  double tau_end = 0.9999;
  std::size_t tau_anneal_steps = 0;  // 0 = derived: pretrain_steps / 2
  std::size_t top_k = 0;             // 0 = derived: ceil((num_blocks - 1) / 2)
  std::size_t pseudo_classes = 0;    // 0 = derived: data.num_classes
  std::size_t diag_interval = 100;
  std::size_t checkpoint_interval = 0;  // 0 = final checkpoint only
  std::size_t probe_tap = 0;            // 0 = derived: num_blocks - 1 (1-based)
};

/// One experiment end to end: corpus, architecture, objective, and schedule.
/// Loaded from versioned JSON; every derived field is resolved and validated
/// before the struct is handed out.
struct ExperimentConfig {
  std::uint32_t version = 1;
  std::uint64_t seed = 1;
  std::string output_dir;
  EncoderConfig encoder;
  SynthConfig data;
  double pretrain_fraction = 0.8;
  double finetune_fraction = 0.1;
  double eval_fraction = 0.1;
  LossConfig loss;
  ModelOptions model;
  TrainingConfig training;

  /// Resolved values for the "0 = derived" training fields.
  std::size_t resolved_tau_anneal_steps() const;
  std::size_t resolved_top_k() const;
  std::size_t resolved_pseudo_classes() const;
  std::size_t resolved_probe_tap() const;

  /// Cross-field validation; throws ConfigError naming the failing field.
  void validate() const;
};

/// Parses and validates a config file. Unknown keys, wrong types, missing
/// mandatory fields (version, seed, output_dir), and invariant violations all
/// raise ConfigError naming the field.
ExperimentConfig load_experiment_config(const std::string& path);

/// Same contract on an in-memory JSON document.
ExperimentConfig parse_experiment_config(const std::string& text);

/// Serializes the fully resolved config back to JSON (stable key order), the
/// form embedded in checkpoints and echoed into run directories.
std::string to_json_text(const ExperimentConfig& config);

inline constexpr std::uint32_t kConfigVersion = 1;

}  // namespace trinet
