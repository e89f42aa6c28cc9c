#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trinet/checkpoint.hpp"
#include "trinet/config.hpp"
#include "trinet/data.hpp"
#include "trinet/diagnostics.hpp"
#include "trinet/losses.hpp"
#include "trinet/model.hpp"

namespace trinet {

/// One pretraining step as logged. Wall-clock cost goes to its own file so the
/// deterministic metric files stay bit-identical across reruns.
struct StepRecord {
  std::size_t step = 0;
  LossReport report;
  double tau = 0.0;
  double wall_ms = 0.0;
};

struct PretrainResult {
  std::vector<StepRecord> records;
  std::vector<CollapseMetrics> diagnostics;
  AdamState optimizer_state;
  std::size_t final_step = 0;
};

struct ExperimentSummary {
  /// NaN when the mode trains no frozen teacher (serialized as null).
  double frozen_val_accuracy = 0.0;
  double probe_accuracy = 0.0;
  CollapseMetrics initial_metrics;
  CollapseMetrics final_metrics;
  std::size_t pretrain_steps = 0;
  std::string checkpoint_path;
  double total_wall_seconds = 0.0;
};

/// True for the modes whose objective consumes frozen-teacher targets.
bool needs_frozen_teacher(LossMode mode);

/// Generates the corpus and assigns splits, both from config.data.seed.
LabeledDataset prepare_dataset(const ExperimentConfig& config);

/// Supervised frame classification on the finetune split (cross entropy on
/// majority-downsampled labels), then permanently freezes the result into
/// `branches`. Returns frame accuracy on the eval split; with zero steps the
/// teacher stays at initialization and lands near chance.
double train_frozen_teacher(BranchSet& branches, const LabeledDataset& dataset,
                            const ExperimentConfig& config);

/// Runs pretraining steps start_step+1 .. pretrain_steps: mask, three
/// forwards, total loss, backward, student update, EMA update, periodic
/// collapse diagnostics on a fixed probe batch. Pass the optimizer state from
/// a checkpoint to resume; per-step randomness is derived from (seed, step) so
/// a resumed run reproduces the unbroken loss sequence. A non-empty
/// checkpoint_dir receives interval checkpoints.
PretrainResult pretrain(BranchSet& branches, const LabeledDataset& dataset,
                        const ExperimentConfig& config, std::size_t start_step = 0,
                        const AdamState* resume_state = nullptr,
                        const std::string& checkpoint_dir = "");

/// Frozen-representation frame embeddings of one split at the given tap
/// (1-based block index), rows ordered sequence-major.
Embeddings capture_embeddings(const ParameterMap& encoder_params,
                              const LabeledDataset& dataset,
                              const ExperimentConfig& config, std::size_t tap,
                              Split split);

/// Trains a linear classifier on frozen tap representations of the finetune
/// split and returns frame accuracy on the eval split. The encoder parameters
/// are cloned without gradient tracking, so they cannot change.
double linear_probe(const ParameterMap& encoder_params, const LabeledDataset& dataset,
                    const ExperimentConfig& config, std::size_t tap);

/// Full protocol: frozen teacher, pretraining, probe. Writes config.json,
/// runlog.csv, diagnostics.csv, timing.csv, summary.json, and checkpoints into
/// config.output_dir.
ExperimentSummary run_experiment(const ExperimentConfig& config);

}  // namespace trinet
