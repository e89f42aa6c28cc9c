#include "trinet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "trinet/encoder.hpp"
#include "trinet/ops.hpp"
#include "trinet/optimizer.hpp"
#include "trinet/rng.hpp"

namespace trinet {

namespace {

/// Pair count for the Monte Carlo cosine estimate in periodic diagnostics.
constexpr std::size_t kDiagSamplePairs = 512;

std::string format_value(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::string format_optional(const std::optional<double>& value) {
  return value ? format_value(*value) : std::string();
}

/// One-hot frame targets for the chosen sequences, B x T x C.
Tensor one_hot_targets(const std::vector<std::uint16_t>& step_labels,
                       const std::vector<std::size_t>& sequences,
                       std::size_t steps_per_sequence, std::size_t classes) {
  const std::size_t batch = sequences.size();
  std::vector<double> values(batch * steps_per_sequence * classes, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps_per_sequence; ++t) {
      const std::uint16_t label = step_labels[sequences[b] * steps_per_sequence + t];
      values[(b * steps_per_sequence + t) * classes + label] = 1.0;
    }
  }
  return Tensor({batch, steps_per_sequence, classes}, std::move(values));
}

/// Mean cross entropy between softmax(logits) and one-hot targets over all
/// frames; logits and targets share a [..., C] shape.
Tensor mean_cross_entropy(const Tensor& logits, const Tensor& targets) {
  const double frames =
      static_cast<double>(logits.size()) / static_cast<double>(logits.dim(-1));
  Tensor picked = mul(targets, log_clamped(softmax(logits, -1)));
  return scale(sum_all(picked), -1.0 / frames);
}

/// Fraction of frames whose argmax logit matches the label.
double frame_accuracy(const std::vector<double>& logit_values, std::size_t frames,
                      std::size_t classes, const std::uint16_t* labels) {
  std::size_t correct = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double* row = logit_values.data() + f * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (best == labels[f]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(frames);
}

std::vector<std::uint16_t> gather_labels(const std::vector<std::uint16_t>& step_labels,
                                         const std::vector<std::size_t>& sequences,
                                         std::size_t steps_per_sequence) {
  std::vector<std::uint16_t> out;
  out.reserve(sequences.size() * steps_per_sequence);
  for (std::size_t seq : sequences) {
    const std::uint16_t* row = step_labels.data() + seq * steps_per_sequence;
    out.insert(out.end(), row, row + steps_per_sequence);
  }
  return out;
}

/// Frame accuracy of the frozen-teacher classifier head over the given
/// sequences, evaluated in batches with dropout off.
double classifier_accuracy(const ParameterMap& teacher, const LabeledDataset& dataset,
                           const ExperimentConfig& config,
                           const std::vector<std::size_t>& sequences,
                           const std::vector<std::uint16_t>& step_labels,
                           std::size_t steps_per_sequence) {
  const std::size_t classes = teacher.at("classifier.b").dim(0);
  Rng unused_rng(0);
  std::size_t total_frames = 0;
  double correct = 0.0;
  for (std::size_t offset = 0; offset < sequences.size();
       offset += config.training.batch_size) {
    const std::size_t end =
        std::min(offset + config.training.batch_size, sequences.size());
    const std::vector<std::size_t> chunk(sequences.begin() + offset,
                                         sequences.begin() + end);
    Tensor x = dataset.batch_features(chunk);
    LayerOutputs layers = encode_sequence(x, teacher, config.encoder, false, unused_rng);
    Tensor logits = add(matmul(layers.back(), teacher.at("classifier.w")),
                        teacher.at("classifier.b"));
    const std::vector<std::uint16_t> labels =
        gather_labels(step_labels, chunk, steps_per_sequence);
    const std::size_t frames = chunk.size() * steps_per_sequence;
    correct += frame_accuracy(logits.values(), frames, classes, labels.data()) *
               static_cast<double>(frames);
    total_frames += frames;
  }
  return correct / static_cast<double>(total_frames);
}

/// Runs the encoder on the given sequences with a gradient-free parameter
/// clone and returns the tap block's outputs as one embedding row per frame.
Embeddings tap_embeddings(const ParameterMap& encoder_params,
                          const LabeledDataset& dataset,
                          const ExperimentConfig& config, std::size_t tap,
                          const std::vector<std::size_t>& sequences) {
  if (tap < 1 || tap > config.encoder.num_blocks) {
    throw std::invalid_argument("tap must name a block in [1, num_blocks]");
  }
  const ParameterMap frozen = ParameterMap::clone(encoder_params, false);
  const std::size_t steps_per_sequence = config.encoder.output_steps(dataset.seq_len);
  Embeddings embeddings;
  embeddings.rows = sequences.size() * steps_per_sequence;
  embeddings.dim = config.encoder.hidden_dim;
  embeddings.values.reserve(embeddings.rows * embeddings.dim);
  Rng unused_rng(0);
  for (std::size_t offset = 0; offset < sequences.size();
       offset += config.training.batch_size) {
    const std::size_t end =
        std::min(offset + config.training.batch_size, sequences.size());
    const std::vector<std::size_t> chunk(sequences.begin() + offset,
                                         sequences.begin() + end);
    Tensor x = dataset.batch_features(chunk);
    LayerOutputs layers =
        encode_sequence(x, frozen, config.encoder, false, unused_rng, tap);
    const std::vector<double>& block = layers.back().values();
    embeddings.values.insert(embeddings.values.end(), block.begin(), block.end());
  }
  return embeddings;
}

std::vector<std::size_t> sample_batch(const std::vector<std::size_t>& pool,
                                      std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> chosen(batch_size);
  for (std::size_t& seq : chosen) seq = pool[rng.uniform_index(pool.size())];
  return chosen;
}

std::string abort_message(std::size_t step, const char* what,
                          const std::vector<CollapseMetrics>& diagnostics) {
  std::string message =
      "pretrain: aborted at step " + std::to_string(step) + ": " + what;
  if (!diagnostics.empty()) {
    const CollapseMetrics& last = diagnostics.back();
    message += "; last diagnostics (step " + std::to_string(last.step) +
               "): mean_variance=" + format_value(last.mean_variance) +
               ", effective_rank=" + format_value(last.effective_rank) +
               ", mean_pairwise_cosine=" + format_value(last.mean_pairwise_cosine);
  }
  return message;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("run_experiment: cannot write '" + path + "'");
  }
  return out;
}

void write_runlog(const std::string& path, const std::vector<StepRecord>& records) {
  std::ofstream out = open_output(path);
  out << "step,l_total,l_struc,l_regre,l_regul,masked_frames,tau\n";
  for (const StepRecord& record : records) {
    out << record.step << ',' << format_value(record.report.l_total) << ','
        << format_optional(record.report.l_struc) << ','
        << format_optional(record.report.l_regre) << ','
        << format_optional(record.report.l_regul) << ','
        << record.report.masked_frame_count << ',' << format_value(record.tau)
        << '\n';
  }
}

void write_diagnostics(const std::string& path,
                       const std::vector<CollapseMetrics>& diagnostics) {
  std::ofstream out = open_output(path);
  out << "step,mean_variance,effective_rank,mean_pairwise_cosine,zero_rows\n";
  for (const CollapseMetrics& metrics : diagnostics) {
    out << metrics.step << ',' << format_value(metrics.mean_variance) << ','
        << format_value(metrics.effective_rank) << ','
        << format_value(metrics.mean_pairwise_cosine) << ',' << metrics.zero_rows
        << '\n';
  }
}

void write_timing(const std::string& path, const std::vector<StepRecord>& records,
                  double total_wall_seconds) {
  std::ofstream out = open_output(path);
  out << "step,wall_ms\n";
  for (const StepRecord& record : records) {
    out << record.step << ',' << format_value(record.wall_ms) << '\n';
  }
  out << "total_seconds," << format_value(total_wall_seconds) << '\n';
}

nlohmann::ordered_json metrics_json(const CollapseMetrics& metrics) {
  nlohmann::ordered_json block;
  block["step"] = metrics.step;
  block["mean_variance"] = metrics.mean_variance;
  block["effective_rank"] = metrics.effective_rank;
  block["mean_pairwise_cosine"] = metrics.mean_pairwise_cosine;
  block["zero_rows"] = metrics.zero_rows;
  return block;
}

void write_summary(const std::string& path, const ExperimentConfig& config,
                   const ExperimentSummary& summary) {
  nlohmann::ordered_json root;
  root["mode"] = to_string(config.loss.mode);
  root["seed"] = config.seed;
  root["pretrain_steps"] = summary.pretrain_steps;
  root["frozen_val_accuracy"] = summary.frozen_val_accuracy;
  root["probe_accuracy"] = summary.probe_accuracy;
  root["initial"] = metrics_json(summary.initial_metrics);
  root["final"] = metrics_json(summary.final_metrics);
  root["checkpoint"] = summary.checkpoint_path;
  std::ofstream out = open_output(path);
  out << root.dump(2) << '\n';
}

}  // namespace

bool needs_frozen_teacher(LossMode mode) {
  return mode != LossMode::data2vec_baseline;
}

LabeledDataset prepare_dataset(const ExperimentConfig& config) {
  LabeledDataset dataset = generate(config.data);
  assign_splits(dataset, config.pretrain_fraction, config.finetune_fraction,
                config.eval_fraction, config.data.seed);
  return dataset;
}

double train_frozen_teacher(BranchSet& branches, const LabeledDataset& dataset,
                            const ExperimentConfig& config) {
  const std::vector<std::size_t> finetune = dataset.sequence_indices(Split::finetune);
  const std::vector<std::size_t> eval_set = dataset.sequence_indices(Split::eval);
  if (finetune.empty()) {
    throw std::runtime_error("train_frozen_teacher: finetune split is empty");
  }
  if (eval_set.empty()) {
    throw std::runtime_error("train_frozen_teacher: eval split is empty");
  }
  const std::size_t classes = config.resolved_pseudo_classes();
  const std::size_t steps_per_sequence =
      config.encoder.output_steps(dataset.seq_len);
  const std::vector<std::uint16_t> step_labels =
      downsample_labels(dataset, config.encoder.downsample_stride);

  ParameterMap working = ParameterMap::clone(branches.frozen_teacher, true);
  AdamConfig adam_config;
  adam_config.learning_rate = config.training.frozen_learning_rate;
  AdamOptimizer optimizer(adam_config);

  for (std::size_t step = 1; step <= config.training.frozen_teacher_steps; ++step) {
    Rng batch_rng = derive_rng(config.seed, "teacher-batch", step);
    const std::vector<std::size_t> chosen =
        sample_batch(finetune, config.training.batch_size, batch_rng);
    Tensor x = dataset.batch_features(chosen);
    Rng dropout_rng = derive_rng(config.seed, "teacher-dropout", step);
    LayerOutputs layers = encode_sequence(x, working, config.encoder, true, dropout_rng);
    Tensor logits = add(matmul(layers.back(), working.at("classifier.w")),
                        working.at("classifier.b"));
    Tensor targets = one_hot_targets(step_labels, chosen, steps_per_sequence, classes);
    Tensor loss = mean_cross_entropy(logits, targets);
    if (!std::isfinite(loss.item())) {
      throw std::runtime_error("train_frozen_teacher: non-finite loss at step " +
                               std::to_string(step));
    }
    backward(loss);
    optimizer.step(working);
  }

  branches.frozen_teacher = ParameterMap::clone(working, false);
  return classifier_accuracy(branches.frozen_teacher, dataset, config, eval_set,
                             step_labels, steps_per_sequence);
}

PretrainResult pretrain(BranchSet& branches, const LabeledDataset& dataset,
                        const ExperimentConfig& config, std::size_t start_step,
                        const AdamState* resume_state,
                        const std::string& checkpoint_dir) {
  const std::vector<std::size_t> pool = dataset.sequence_indices(Split::pretrain);
  if (pool.empty()) {
    throw std::runtime_error("pretrain: pretrain split is empty");
  }
  if (start_step > config.training.pretrain_steps) {
    throw std::runtime_error("pretrain: start step " + std::to_string(start_step) +
                             " is beyond the configured " +
                             std::to_string(config.training.pretrain_steps) +
                             " steps");
  }

  AdamConfig adam_config;
  adam_config.learning_rate = config.training.learning_rate;
  adam_config.warmup_steps = config.training.warmup_steps;
  AdamOptimizer optimizer(adam_config);
  if (resume_state != nullptr) optimizer.restore(*resume_state);

  const std::size_t tap = config.resolved_probe_tap();
  const std::size_t anneal = config.resolved_tau_anneal_steps();
  const std::vector<std::size_t> diag_batch(
      pool.begin(),
      pool.begin() +
          static_cast<std::ptrdiff_t>(std::min(config.training.batch_size, pool.size())));

  PretrainResult result;
  const auto snapshot = [&](std::size_t step) {
    Embeddings embeddings =
        tap_embeddings(branches.student, dataset, config, tap, diag_batch);
    Rng diag_rng = derive_rng(config.seed, "diag", step);
    result.diagnostics.push_back(
        collapse_metrics(embeddings, step, kDiagSamplePairs, diag_rng));
  };
  if (start_step == 0) snapshot(0);

  for (std::size_t step = start_step + 1; step <= config.training.pretrain_steps;
       ++step) {
    const auto started = std::chrono::steady_clock::now();
    StepRecord record;
    record.step = step;
    try {
      Rng batch_rng = derive_rng(config.seed, "pretrain-batch", step);
      const std::vector<std::size_t> chosen =
          sample_batch(pool, config.training.batch_size, batch_rng);
      Tensor x = dataset.batch_features(chosen);

      Tensor fill = mask_fill_vector(branches, config.model, config.encoder.input_dim);
      Rng mask_rng = derive_rng(config.seed, "mask", step);
      auto [x_corrupt, plan] = mask_spans(x, config.training.mask_start_prob,
                                          config.training.mask_span, mask_rng, fill);

      Rng dropout_rng = derive_rng(config.seed, "dropout", step);
      StudentPrediction prediction =
          student_forward(x_corrupt, branches, config.encoder, config.model, dropout_rng);

      LossInputs inputs;
      inputs.z_prime = prediction.z_prime;
      inputs.y_prime = prediction.y_prime;
      inputs.z_struc = build_struc_target(x, branches, config.encoder, config.model);
      if (needs_frozen_teacher(config.loss.mode)) {
        inputs.y_regul = frozen_teacher_targets(x, branches, config.encoder);
      }
      inputs.mask = downsample_mask(plan, config.encoder.downsample_stride);

      auto [total, report] = total_loss(inputs, config.loss);
      record.report = report;
      backward(total);
      optimizer.step(branches.student);
    } catch (const std::runtime_error& error) {
      throw std::runtime_error(abort_message(step, error.what(), result.diagnostics));
    }

    record.tau = tau_schedule(step - 1, config.training.tau_start,
                              config.training.tau_end, anneal);
    ema_update(branches, record.tau);
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - started)
                         .count();
    result.records.push_back(record);

    if (step % config.training.diag_interval == 0 ||
        step == config.training.pretrain_steps) {
      snapshot(step);
    }
    if (!checkpoint_dir.empty() && config.training.checkpoint_interval != 0 &&
        step % config.training.checkpoint_interval == 0 &&
        step != config.training.pretrain_steps) {
      Checkpoint checkpoint{to_json_text(config), step, branches, optimizer.state()};
      save_checkpoint(checkpoint, checkpoint_dir + "/checkpoint_step" +
                                      std::to_string(step) + ".trck");
    }
  }

  result.optimizer_state = optimizer.state();
  result.final_step = config.training.pretrain_steps;
  return result;
}

Embeddings capture_embeddings(const ParameterMap& encoder_params,
                              const LabeledDataset& dataset,
                              const ExperimentConfig& config, std::size_t tap,
                              Split split) {
  const std::vector<std::size_t> sequences = dataset.sequence_indices(split);
  if (sequences.empty()) {
    throw std::runtime_error("capture_embeddings: split holds no sequences");
  }
  return tap_embeddings(encoder_params, dataset, config, tap, sequences);
}

double linear_probe(const ParameterMap& encoder_params, const LabeledDataset& dataset,
                    const ExperimentConfig& config, std::size_t tap) {
  const std::vector<std::size_t> finetune = dataset.sequence_indices(Split::finetune);
  const std::vector<std::size_t> eval_set = dataset.sequence_indices(Split::eval);
  if (finetune.empty()) {
    throw std::runtime_error("linear_probe: finetune split is empty");
  }
  if (eval_set.empty()) {
    throw std::runtime_error("linear_probe: eval split is empty");
  }

  const std::size_t hidden = config.encoder.hidden_dim;
  const std::size_t classes = dataset.num_classes;
  const std::size_t steps_per_sequence =
      config.encoder.output_steps(dataset.seq_len);
  const std::vector<std::uint16_t> step_labels =
      downsample_labels(dataset, config.encoder.downsample_stride);

  Embeddings train_reps = tap_embeddings(encoder_params, dataset, config, tap, finetune);
  Embeddings eval_reps = tap_embeddings(encoder_params, dataset, config, tap, eval_set);
  const std::vector<std::uint16_t> train_labels =
      gather_labels(step_labels, finetune, steps_per_sequence);
  const std::vector<std::uint16_t> eval_labels =
      gather_labels(step_labels, eval_set, steps_per_sequence);

  Tensor features({train_reps.rows, hidden}, std::move(train_reps.values));
  std::vector<double> one_hot(train_reps.rows * classes, 0.0);
  for (std::size_t r = 0; r < train_reps.rows; ++r) {
    one_hot[r * classes + train_labels[r]] = 1.0;
  }
  Tensor targets({train_reps.rows, classes}, std::move(one_hot));

  Rng init_rng = derive_rng(config.seed, "probe-init");
  ParameterMap probe;
  probe.insert("probe.w",
               Tensor::randn({hidden, classes}, init_rng,
                             1.0 / std::sqrt(static_cast<double>(hidden)), true));
  probe.insert("probe.b", Tensor::zeros({classes}, true));

  AdamConfig adam_config;
  adam_config.learning_rate = config.training.probe_learning_rate;
  AdamOptimizer optimizer(adam_config);

  for (std::size_t step = 1; step <= config.training.probe_steps; ++step) {
    Tensor logits = add(matmul(features, probe.at("probe.w")), probe.at("probe.b"));
    Tensor loss = mean_cross_entropy(logits, targets);
    if (!std::isfinite(loss.item())) {
      throw std::runtime_error("linear_probe: non-finite loss at step " +
                               std::to_string(step));
    }
    backward(loss);
    optimizer.step(probe);
  }

  Tensor eval_features({eval_reps.rows, hidden}, std::move(eval_reps.values));
  Tensor eval_logits =
      add(matmul(eval_features, probe.at("probe.w")), probe.at("probe.b"));
  return frame_accuracy(eval_logits.values(), eval_reps.rows, classes,
                        eval_labels.data());
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) {
    throw std::runtime_error("run_experiment: cannot create output directory '" +
                             config.output_dir + "': " + ec.message());
  }

  const std::string config_echo = to_json_text(config);
  {
    std::ofstream out = open_output(config.output_dir + "/config.json");
    out << config_echo;
  }

  LabeledDataset dataset = prepare_dataset(config);
  Rng student_rng = derive_rng(config.seed, "student-init");
  Rng frozen_rng = derive_rng(config.seed, "frozen-init");
  BranchSet branches =
      init_branch_set(config.encoder, config.resolved_pseudo_classes(),
                      config.resolved_top_k(), student_rng, frozen_rng);
  branches.ema_decay = config.training.tau_start;

  ExperimentSummary summary;
  summary.pretrain_steps = config.training.pretrain_steps;
  summary.frozen_val_accuracy = std::numeric_limits<double>::quiet_NaN();
  if (needs_frozen_teacher(config.loss.mode)) {
    summary.frozen_val_accuracy = train_frozen_teacher(branches, dataset, config);
  }

  PretrainResult outcome =
      pretrain(branches, dataset, config, 0, nullptr, config.output_dir);
  summary.initial_metrics = outcome.diagnostics.front();
  summary.final_metrics = outcome.diagnostics.back();

  summary.checkpoint_path = config.output_dir + "/checkpoint_final.trck";
  Checkpoint final_state{config_echo, outcome.final_step, branches,
                         outcome.optimizer_state};
  save_checkpoint(final_state, summary.checkpoint_path);

  summary.probe_accuracy =
      linear_probe(branches.student, dataset, config, config.resolved_probe_tap());

  write_runlog(config.output_dir + "/runlog.csv", outcome.records);
  write_diagnostics(config.output_dir + "/diagnostics.csv", outcome.diagnostics);
  summary.total_wall_seconds = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - started)
                                   .count();
  write_timing(config.output_dir + "/timing.csv", outcome.records,
               summary.total_wall_seconds);
  write_summary(config.output_dir + "/summary.json", config, summary);
  return summary;
}

}  // namespace trinet
