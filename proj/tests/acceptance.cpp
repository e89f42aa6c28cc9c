// Acceptance gate: one pass/fail line per criterion, exit 0 only if all pass.
// Heavy training runs are built once and shared; each criterion's reported
// time includes the full build cost of every run it depends on, so a shared
// run counts toward every criterion that needs it.
//
// Usage: trinet_acceptance [criterion ...]   (default: all nine)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "trinet/checkpoint.hpp"
#include "trinet/config.hpp"
#include "trinet/data.hpp"
#include "trinet/diagnostics.hpp"
#include "trinet/encoder.hpp"
#include "trinet/losses.hpp"
#include "trinet/model.hpp"
#include "trinet/ops.hpp"
#include "trinet/pipeline.hpp"
#include "trinet/rng.hpp"

namespace {

using namespace trinet;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeedTriplet[3] = {1, 2, 3};
const std::string kScratchDir = "acceptance_out";

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format(double value, const char* spec = "%.3g") {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, spec, value);
  return buffer;
}

struct CriterionResult {
  int id = 0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

void progress(const std::string& message) {
  std::cerr << "  .. " << message << "\n" << std::flush;
}

// ---------------------------------------------------------------------------
// Shared training workload
// ---------------------------------------------------------------------------

/// The desk-scale recipe with an explicitly pinned EMA anneal horizon so that
/// chunked runs resolve the same schedule as unbroken ones.
ExperimentConfig default_recipe(std::uint64_t seed) {
  ExperimentConfig config;
  config.seed = seed;
  config.data.seed = seed;
  config.output_dir = kScratchDir;
  config.training.tau_anneal_steps = config.training.pretrain_steps / 2;
  return config;
}

BranchSet init_branches(const ExperimentConfig& config) {
  Rng student_rng = derive_rng(config.seed, "student-init");
  Rng frozen_rng = derive_rng(config.seed, "frozen-init");
  return init_branch_set(config.encoder, config.resolved_pseudo_classes(),
                         config.resolved_top_k(), student_rng, frozen_rng);
}

struct TrainedRun {
  std::vector<StepRecord> records;
  std::vector<CollapseMetrics> diagnostics;
  double teacher_accuracy = std::numeric_limits<double>::quiet_NaN();
  double probe_accuracy = std::numeric_limits<double>::quiet_NaN();
  double random_init_probe = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps_run = 0;
  double build_seconds = 0.0;
};

/// Builds and caches the heavy runs. Keys name the variant and seed; a cache
/// hit still charges the run's full build time to the requesting criterion.
class RunCache {
 public:
  const TrainedRun& full_run(const std::string& variant, std::uint64_t seed,
                             double& charged_seconds) {
    const std::string key = variant + "/" + std::to_string(seed);
    auto it = runs_.find(key);
    if (it == runs_.end()) {
      it = runs_.emplace(key, build(variant, seed)).first;
    }
    charged_seconds += it->second.build_seconds;
    return it->second;
  }

 private:
  static ExperimentConfig variant_config(const std::string& variant,
                                         std::uint64_t seed) {
    ExperimentConfig config = default_recipe(seed);
    if (variant == "trinet") {
    } else if (variant == "ablated_regre") {
      config.loss.mode = LossMode::trinet_ablated_regre;
    } else if (variant == "ablation") {
      config.model.ablate_high_block = true;
    } else if (variant == "destabilized") {
      config.loss.mode = LossMode::data2vec_baseline;
      config.model.disable_stop_gradient = true;
    } else {
      throw std::logic_error("unknown variant " + variant);
    }
    return config;
  }

  static TrainedRun build(const std::string& variant, std::uint64_t seed) {
    const auto start = Clock::now();
    const ExperimentConfig config = variant_config(variant, seed);
    const LabeledDataset dataset = prepare_dataset(config);
    BranchSet branches = init_branches(config);

    TrainedRun run;
    if (variant == "destabilized") {
      build_collapse_run(branches, dataset, config, run);
    } else {
      if (variant == "trinet") {
        run.random_init_probe = linear_probe(branches.student, dataset, config,
                                             config.resolved_probe_tap());
      }
      if (needs_frozen_teacher(config.loss.mode)) {
        run.teacher_accuracy = train_frozen_teacher(branches, dataset, config);
      }
      PretrainResult result = pretrain(branches, dataset, config);
      run.records = std::move(result.records);
      run.diagnostics = std::move(result.diagnostics);
      run.steps_run = result.final_step;
      run.probe_accuracy =
          linear_probe(branches.student, dataset, config, config.resolved_probe_tap());
    }
    run.build_seconds = seconds_since(start);
    progress(variant + " seed " + std::to_string(seed) + ": " +
             std::to_string(run.steps_run) + " steps in " +
             format(run.build_seconds, "%.1f") + " s");
    return run;
  }

  /// Chunked pretraining that stops as soon as the mean per-dimension
  /// variance falls below 1e-3 of its initial value. Chunk resumption is
  /// bit-exact, so the observed sequence equals an unbroken run's prefix.
  static void build_collapse_run(BranchSet& branches, const LabeledDataset& dataset,
                                 const ExperimentConfig& config, TrainedRun& run) {
    constexpr std::size_t kChunk = 200;
    const std::size_t total = config.training.pretrain_steps;
    AdamState state;
    std::size_t done = 0;
    double initial_variance = 0.0;
    bool collapsed = false;
    while (done < total && !collapsed) {
      ExperimentConfig chunk = config;
      chunk.training.pretrain_steps = std::min(done + kChunk, total);
      PretrainResult result =
          pretrain(branches, dataset, chunk, done, done == 0 ? nullptr : &state);
      state = result.optimizer_state;
      for (StepRecord& record : result.records) run.records.push_back(std::move(record));
      for (const CollapseMetrics& metrics : result.diagnostics) {
        if (metrics.step == 0) initial_variance = metrics.mean_variance;
        run.diagnostics.push_back(metrics);
        if (metrics.step > 0 && metrics.mean_variance < 1e-3 * initial_variance) {
          collapsed = true;
        }
      }
      done = chunk.training.pretrain_steps;
    }
    run.steps_run = done;
  }

  std::map<std::string, TrainedRun> runs_;
};

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite
// ---------------------------------------------------------------------------

CriterionResult criterion_gradients() {
  const auto start = Clock::now();
  double max_rel = 0.0;
  std::size_t graphs = 0;

  for (std::uint64_t g = 0; g < 24; ++g) {
    Rng leaf_rng = derive_rng(40, "acceptance-graph-leaves", g);
    const std::vector<Tensor> leaves = testing::random_graph_leaves(leaf_rng);
    const auto build = [g](const std::vector<Tensor>& probe) {
      Rng op_rng = derive_rng(41, "acceptance-graph-ops", g);
      return testing::random_graph(probe, op_rng);
    };
    const auto check = testing::max_fd_relative_error(build, leaves);
    max_rel = std::max(max_rel, check.max_rel_err);
    ++graphs;
  }

  Rng loss_rng = derive_rng(42, "acceptance-loss-leaves");
  const Tensor z_prime = Tensor::randn({2, 3, 4}, loss_rng, 0.8, true);
  const Tensor z_struc = Tensor::randn({2, 3, 4}, loss_rng, 0.8, false);
  const Tensor y_prime = Tensor::randn({2, 3, 5}, loss_rng, 0.8, true);
  const Tensor y_regul = Tensor::randn({2, 3, 5}, loss_rng, 0.8, false);
  const Tensor mask({2, 3}, {1, 0, 1, 0, 1, 0});

  struct NamedLoss {
    const char* name;
    testing::GraphBuilder build;
    std::vector<Tensor> leaves;
  };
  const std::vector<NamedLoss> losses = {
      {"struc",
       [&](const std::vector<Tensor>& probe) {
         return loss_struc(probe[0], z_struc, mask, LossPositions::masked_only);
       },
       {z_prime}},
      {"regre",
       [&](const std::vector<Tensor>& probe) {
         return loss_regre(probe[0], y_regul, mask, LossPositions::all_frames);
       },
       {y_prime}},
      {"regul",
       [&](const std::vector<Tensor>& probe) {
         return loss_regul(probe[0], y_regul, mask, LossPositions::masked_only, 1.0);
       },
       {y_prime}},
      {"regul-tempered",
       [&](const std::vector<Tensor>& probe) {
         return loss_regul(probe[0], y_regul, mask, LossPositions::all_frames, 4.0);
       },
       {y_prime}},
  };
  for (const NamedLoss& loss : losses) {
    const auto check = testing::max_fd_relative_error(loss.build, loss.leaves);
    max_rel = std::max(max_rel, check.max_rel_err);
  }

  const double elapsed = seconds_since(start);
  CriterionResult result;
  result.id = 1;
  result.pass = max_rel < 1e-4 && elapsed < 30.0;
  result.seconds = elapsed;
  result.detail = std::to_string(graphs) + " random graphs + " +
                  std::to_string(losses.size()) +
                  " loss objectives vs central differences, max relative error " +
                  format(max_rel) + " (limit 1e-4)";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 2: loss value oracles
// ---------------------------------------------------------------------------

CriterionResult criterion_loss_oracles() {
  const auto start = Clock::now();

  const Tensor z_prime({1, 1, 4}, {1.0, 1.0, 1.0, 1.0}, false);
  const Tensor z_struc({1, 1, 4}, {0.0, 0.0, 0.0, 0.0}, false);
  const Tensor one_frame({1, 1}, {1.0});
  const double struc =
      loss_struc(z_prime, z_struc, one_frame, LossPositions::masked_only).item();
  const double struc_err = std::abs(struc - 2.0);

  const Tensor uniform({1, 1, 4}, {0.0, 0.0, 0.0, 0.0}, false);
  const double regul =
      loss_regul(uniform, uniform, one_frame, LossPositions::masked_only, 1.0).item();
  const double regul_err = std::abs(regul - 0.5 * std::log(4.0));

  CriterionResult result;
  result.id = 2;
  result.pass = struc_err < 1e-10 && regul_err < 1e-10;
  result.seconds = seconds_since(start);
  result.detail = "unit-difference oracle error " + format(struc_err) +
                  ", uniform-entropy oracle error " + format(regul_err) +
                  " (limit 1e-10)";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 3: EMA algebra
// ---------------------------------------------------------------------------

CriterionResult criterion_ema() {
  const auto start = Clock::now();
  ExperimentConfig config = default_recipe(5);
  config.encoder.input_dim = 8;
  config.encoder.hidden_dim = 16;
  config.encoder.num_blocks = 2;
  config.encoder.num_heads = 2;
  config.data.feature_dim = 8;

  const std::string probe_name = "frontend.proj.b";
  double worst = 0.0;
  bool boundaries_exact = true;

  {
    BranchSet branches = init_branches(config);
    const double student = branches.student.at(probe_name).values()[0];
    const double teacher = branches.ema_teacher.at(probe_name).values()[0];
    ema_update(branches, 0.999);
    const double expected = 0.999 * teacher + 0.001 * student;
    worst = std::max(worst,
                     std::abs(branches.ema_teacher.at(probe_name).values()[0] - expected));
  }
  {
    BranchSet branches = init_branches(config);
    const double student = branches.student.at(probe_name).values()[0];
    const double teacher = branches.ema_teacher.at(probe_name).values()[0];
    const double tau = 0.97;
    for (int k = 0; k < 10; ++k) ema_update(branches, tau);
    const double decay = std::pow(tau, 10);
    const double expected = decay * teacher + (1.0 - decay) * student;
    worst = std::max(worst,
                     std::abs(branches.ema_teacher.at(probe_name).values()[0] - expected));
  }
  {
    BranchSet branches = init_branches(config);
    ema_update(branches, 0.0);
    boundaries_exact = boundaries_exact &&
                       branches.ema_teacher.at(probe_name).values() ==
                           branches.student.at(probe_name).values();
  }
  {
    BranchSet branches = init_branches(config);
    const std::vector<double> before = branches.ema_teacher.at(probe_name).values();
    ema_update(branches, 1.0);
    boundaries_exact =
        boundaries_exact && branches.ema_teacher.at(probe_name).values() == before;
  }

  CriterionResult result;
  result.id = 3;
  result.pass = worst <= 1e-12 && boundaries_exact;
  result.seconds = seconds_since(start);
  result.detail = "single-step and 10-step closed forms off by " + format(worst) +
                  " (limit 1e-12); decay 0 and 1 " +
                  (boundaries_exact ? "bitwise exact" : "NOT exact");
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 4: stop-gradient topology on the two-block smoke model
// ---------------------------------------------------------------------------

double grad_l1(const Tensor& tensor) {
  double total = 0.0;
  for (double g : tensor.grad()) total += std::abs(g);
  return total;
}

CriterionResult criterion_stop_gradient() {
  const auto start = Clock::now();
  ExperimentConfig config = default_recipe(6);
  config.encoder.input_dim = 8;
  config.encoder.hidden_dim = 16;
  config.encoder.num_blocks = 2;
  config.encoder.num_heads = 2;
  config.data.feature_dim = 8;
  config.data.seq_len = 32;

  const LabeledDataset dataset = prepare_dataset(config);
  BranchSet branches = init_branches(config);
  const std::vector<std::size_t> batch = {0, 1};
  const Tensor x = dataset.batch_features(batch);

  std::uint64_t masked_attempt = 0;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng mask_rng = derive_rng(6, "acceptance-mask", attempt);
    Tensor fill = mask_fill_vector(branches, config.model, config.encoder.input_dim);
    auto [corrupt, candidate] = mask_spans(x, 0.15, 3, mask_rng, fill);
    if (candidate.masked_count() > 0) {
      masked_attempt = attempt;
      break;
    }
  }
  const auto corrupt_input = [&]() {
    Rng mask_rng = derive_rng(6, "acceptance-mask", masked_attempt);
    Tensor fill = mask_fill_vector(branches, config.model, config.encoder.input_dim);
    return mask_spans(x, 0.15, 3, mask_rng, fill);
  };

  Rng dropout_rng(0);
  bool teacher_parameters_untracked = true;
  for (const auto& [name, tensor] : branches.ema_teacher) {
    teacher_parameters_untracked = teacher_parameters_untracked && !tensor.requires_grad();
  }
  for (const auto& [name, tensor] : branches.frozen_teacher) {
    teacher_parameters_untracked = teacher_parameters_untracked && !tensor.requires_grad();
  }

  auto [x_corrupt, plan] = corrupt_input();
  StudentPrediction prediction =
      student_forward(x_corrupt, branches, config.encoder, config.model, dropout_rng);
  LossInputs inputs;
  inputs.z_prime = prediction.z_prime;
  inputs.y_prime = prediction.y_prime;
  inputs.z_struc = build_struc_target(x, branches, config.encoder, config.model);
  inputs.y_regul = frozen_teacher_targets(x, branches, config.encoder);
  inputs.mask = downsample_mask(plan, config.encoder.downsample_stride);
  auto [total, report] = total_loss(inputs, config.loss);
  backward(total);
  const bool targets_detached =
      !inputs.z_struc.requires_grad() && !inputs.y_regul.requires_grad();
  const bool student_learns = grad_l1(branches.student.at("frontend.proj.w")) > 0.0;

  branches.student.zero_grads();
  auto [x_again, plan_again] = corrupt_input();
  StudentPrediction fresh =
      student_forward(x_again, branches, config.encoder, config.model, dropout_rng);
  Tensor struc_only = loss_struc(
      fresh.z_prime, build_struc_target(x, branches, config.encoder, config.model),
      downsample_mask(plan_again, config.encoder.downsample_stride),
      config.loss.positions);
  backward(struc_only);
  const double high_block = grad_l1(branches.student.at("block1.attn.wq")) +
                            grad_l1(branches.student.at("block1.ffn.w1")) +
                            grad_l1(branches.student.at("proj.high.w"));
  const double low_path = grad_l1(branches.student.at("block0.attn.wq")) +
                          grad_l1(branches.student.at("proj.mid.w")) +
                          grad_l1(branches.student.at("frontend.proj.w"));

  CriterionResult result;
  result.id = 4;
  result.pass = teacher_parameters_untracked && targets_detached && student_learns &&
                high_block == 0.0 && low_path > 0.0;
  result.seconds = seconds_since(start);
  result.detail =
      std::string("teacher branches carry no gradient state (") +
      (teacher_parameters_untracked && targets_detached ? "verified" : "VIOLATED") +
      "); structural loss gradient on the dedicated high block " + format(high_block) +
      " (exactly 0 required), on the shared low path " + format(low_path) + " (> 0)";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 5: collapse reproduction
// ---------------------------------------------------------------------------

CriterionResult criterion_collapse(RunCache& cache) {
  double charged = 0.0;
  const std::uint64_t seed = kSeedTriplet[0];
  const TrainedRun& destabilized = cache.full_run("destabilized", seed, charged);
  const TrainedRun& healthy = cache.full_run("trinet", seed, charged);
  const auto analysis_start = Clock::now();

  double initial_variance = 0.0;
  double collapsed_variance = std::numeric_limits<double>::infinity();
  std::size_t collapsed_step = 0;
  for (const CollapseMetrics& metrics : destabilized.diagnostics) {
    if (metrics.step == 0) initial_variance = metrics.mean_variance;
    if (metrics.step > 0 && metrics.mean_variance < collapsed_variance) {
      collapsed_variance = metrics.mean_variance;
      collapsed_step = metrics.step;
    }
  }
  const bool baseline_collapses = collapsed_variance < 1e-3 * initial_variance;

  const CollapseMetrics& first = healthy.diagnostics.front();
  const CollapseMetrics& last = healthy.diagnostics.back();
  const double retention = last.mean_variance / first.mean_variance;
  const double rank_floor = 0.25 * 64.0;
  const bool trinet_healthy =
      retention >= 0.10 && last.effective_rank >= rank_floor && last.step == 2000;

  CriterionResult result;
  result.id = 5;
  result.seconds = charged + seconds_since(analysis_start);
  result.pass = baseline_collapses && trinet_healthy && result.seconds < 900.0;
  result.detail =
      "destabilized baseline variance ratio " +
      format(collapsed_variance / initial_variance) + " at step " +
      std::to_string(collapsed_step) + " (< 1e-3 required); trinet retention " +
      format(retention) + " (>= 0.10), effective rank " +
      format(last.effective_rank, "%.1f") + " (>= " + format(rank_floor, "%.0f") + ")";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 6: probe accuracy ordering
// ---------------------------------------------------------------------------

CriterionResult criterion_probe_ordering(RunCache& cache) {
  double charged = 0.0;
  double mean_trinet = 0.0;
  double mean_ablated = 0.0;
  double mean_random = 0.0;
  int beats_teacher = 0;
  std::string per_seed;
  for (std::uint64_t seed : kSeedTriplet) {
    const TrainedRun& tri = cache.full_run("trinet", seed, charged);
    const TrainedRun& abl = cache.full_run("ablated_regre", seed, charged);
    mean_trinet += tri.probe_accuracy / 3.0;
    mean_ablated += abl.probe_accuracy / 3.0;
    mean_random += tri.random_init_probe / 3.0;
    if (tri.probe_accuracy > tri.teacher_accuracy) ++beats_teacher;
    per_seed += " s" + std::to_string(seed) + ":" + format(tri.probe_accuracy, "%.3f") +
                "/" + format(abl.probe_accuracy, "%.3f") + "/" +
                format(tri.teacher_accuracy, "%.3f");
  }

  CriterionResult result;
  result.id = 6;
  result.seconds = charged;
  result.pass = mean_trinet >= mean_ablated && mean_trinet > mean_random &&
                beats_teacher >= 2 && result.seconds < 2700.0;
  result.detail = "mean probe accuracy trinet " + format(mean_trinet, "%.3f") +
                  " vs ablated " + format(mean_ablated, "%.3f") + " vs random init " +
                  format(mean_random, "%.3f") + "; beats frozen teacher on " +
                  std::to_string(beats_teacher) + "/3 seeds (trinet/ablated/teacher:" +
                  per_seed + ")";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 7: ablation instability
// ---------------------------------------------------------------------------

double first_difference_variance(const std::vector<StepRecord>& records,
                                 std::size_t from_step, std::size_t to_step) {
  std::vector<double> diffs;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    if (records[i].step >= from_step && records[i + 1].step <= to_step) {
      diffs.push_back(records[i + 1].report.l_total - records[i].report.l_total);
    }
  }
  if (diffs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double variance = 0.0;
  for (double d : diffs) variance += (d - mean) * (d - mean);
  return variance / static_cast<double>(diffs.size() - 1);
}

CriterionResult criterion_ablation_instability(RunCache& cache) {
  double charged = 0.0;
  int unstable_seeds = 0;
  std::string per_seed;
  for (std::uint64_t seed : kSeedTriplet) {
    const TrainedRun& tri = cache.full_run("trinet", seed, charged);
    const TrainedRun& abl = cache.full_run("ablation", seed, charged);
    const double tri_var = first_difference_variance(tri.records, 500, 2000);
    const double abl_var = first_difference_variance(abl.records, 500, 2000);
    if (abl_var > tri_var) ++unstable_seeds;
    per_seed += " s" + std::to_string(seed) + ":" + format(abl_var) + ">" +
                format(tri_var) + "?";
  }

  CriterionResult result;
  result.id = 7;
  result.seconds = charged;
  result.pass = unstable_seeds == 3;
  result.detail = "ablation-mode loss first-difference variance exceeds trinet's on " +
                  std::to_string(unstable_seeds) + "/3 matched seeds (ablation>trinet:" +
                  per_seed + ")";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 8: determinism and persistence
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ExperimentConfig smoke_recipe() {
  ExperimentConfig config = default_recipe(9);
  config.output_dir = kScratchDir + "/replica";
  config.encoder.input_dim = 8;
  config.encoder.hidden_dim = 16;
  config.encoder.num_blocks = 2;
  config.encoder.num_heads = 2;
  config.encoder.ffn_multiplier = 2;
  config.data.feature_dim = 8;
  config.data.seq_len = 32;
  config.data.num_sequences = 64;
  config.training.frozen_teacher_steps = 40;
  config.training.pretrain_steps = 50;
  config.training.probe_steps = 80;
  config.training.batch_size = 8;
  config.training.warmup_steps = 10;
  config.training.mask_start_prob = 0.1;
  config.training.mask_span = 4;
  config.training.tau_anneal_steps = 25;
  config.training.diag_interval = 10;
  return config;
}

CriterionResult criterion_determinism() {
  const auto start = Clock::now();
  const ExperimentConfig config = smoke_recipe();

  run_experiment(config);
  const std::string runlog = read_file(config.output_dir + "/runlog.csv");
  const std::string diagnostics = read_file(config.output_dir + "/diagnostics.csv");
  const std::string summary = read_file(config.output_dir + "/summary.json");
  run_experiment(config);
  const bool files_identical =
      runlog == read_file(config.output_dir + "/runlog.csv") &&
      diagnostics == read_file(config.output_dir + "/diagnostics.csv") &&
      summary == read_file(config.output_dir + "/summary.json");

  const LabeledDataset dataset = prepare_dataset(config);
  BranchSet unbroken = init_branches(config);
  train_frozen_teacher(unbroken, dataset, config);
  const PretrainResult full = pretrain(unbroken, dataset, config);

  ExperimentConfig half = config;
  half.training.pretrain_steps = 25;
  BranchSet resumed = init_branches(config);
  train_frozen_teacher(resumed, dataset, config);
  const PretrainResult first_half = pretrain(resumed, dataset, half);
  const std::string checkpoint_path = config.output_dir + "/resume.trck";
  save_checkpoint(Checkpoint{to_json_text(config), 25, resumed,
                             first_half.optimizer_state},
                  checkpoint_path);
  Checkpoint restored = load_checkpoint(checkpoint_path);
  const PretrainResult second_half =
      pretrain(restored.branches, dataset, config, 25, &restored.optimizer_state);

  bool resume_identical = second_half.records.size() == 25;
  for (std::size_t i = 0; resume_identical && i < second_half.records.size(); ++i) {
    resume_identical = second_half.records[i].report.l_total ==
                       full.records[25 + i].report.l_total;
  }
  resume_identical =
      resume_identical &&
      max_abs_difference(restored.branches.student, unbroken.student) == 0.0;

  CriterionResult result;
  result.id = 8;
  result.pass = files_identical && resume_identical;
  result.seconds = seconds_since(start);
  result.detail = std::string("repeated run metric files ") +
                  (files_identical ? "bit-identical" : "DIFFER") +
                  "; checkpoint resume loss sequence " +
                  (resume_identical ? "exactly reproduced" : "DIVERGED");
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 9: diagnostics correctness
// ---------------------------------------------------------------------------

CriterionResult criterion_diagnostics() {
  const auto start = Clock::now();

  Embeddings rank_one;
  rank_one.rows = 5;
  rank_one.dim = 4;
  const double direction[4] = {0.5, -0.5, 0.5, -0.5};
  for (int r = 1; r <= 5; ++r) {
    for (double d : direction) rank_one.values.push_back(r * d);
  }
  const double rank_err = std::abs(effective_rank(rank_one) - 1.0);

  Embeddings constant;
  constant.rows = 4;
  constant.dim = 3;
  for (int r = 0; r < 4; ++r) {
    constant.values.insert(constant.values.end(), {1.0, 2.0, -3.0});
  }
  const std::vector<double> variance = per_dim_variance(constant);
  bool variance_zero = true;
  for (double v : variance) variance_zero = variance_zero && v == 0.0;
  Rng rng(3);
  const CosineStat cosine = mean_pairwise_cosine(constant, 64, rng);
  const double cosine_err = std::abs(cosine.mean_cosine - 1.0);

  CriterionResult result;
  result.id = 9;
  result.pass = rank_err < 1e-6 && variance_zero && cosine_err < 1e-12;
  result.seconds = seconds_since(start);
  result.detail = "rank-1 embeddings: effective rank error " + format(rank_err) +
                  " (limit 1e-6); identical rows: variance " +
                  (variance_zero ? "exactly 0" : "NONZERO") + ", cosine error " +
                  format(cosine_err) + " (limit 1e-12)";
  return result;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  std::filesystem::create_directories(kScratchDir);
  RunCache cache;
  std::vector<CriterionResult> results;
  const auto suite_start = Clock::now();

  for (int id : wanted) {
    progress("criterion " + std::to_string(id));
    try {
      switch (id) {
        case 1: results.push_back(criterion_gradients()); break;
        case 2: results.push_back(criterion_loss_oracles()); break;
        case 3: results.push_back(criterion_ema()); break;
        case 4: results.push_back(criterion_stop_gradient()); break;
        case 5: results.push_back(criterion_collapse(cache)); break;
        case 6: results.push_back(criterion_probe_ordering(cache)); break;
        case 7: results.push_back(criterion_ablation_instability(cache)); break;
        case 8: results.push_back(criterion_determinism()); break;
        case 9: results.push_back(criterion_diagnostics()); break;
        default:
          std::cerr << "unknown criterion " << id << "\n";
          return 2;
      }
    } catch (const std::exception& error) {
      CriterionResult failed;
      failed.id = id;
      failed.pass = false;
      failed.detail = std::string("threw: ") + error.what();
      results.push_back(failed);
    }
  }

  std::error_code ec;
  std::filesystem::remove_all(kScratchDir, ec);

  int failures = 0;
  for (const CriterionResult& result : results) {
    if (!result.pass) ++failures;
    std::cout << "criterion " << result.id << ": " << (result.pass ? "PASS" : "FAIL")
              << "  " << result.detail << "  [" << format(result.seconds, "%.1f")
              << " s]\n";
  }
  std::cout << "acceptance: " << (results.size() - failures) << "/" << results.size()
            << " criteria passed, total wall " << format(seconds_since(suite_start), "%.1f")
            << " s\n";
  return failures == 0 ? 0 : 1;
}
