#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "trinet/encoder.hpp"
#include "trinet/params.hpp"
#include "trinet/rng.hpp"
#include "trinet/tensor.hpp"

namespace trinet {

/// Per-frame boolean mask at input frame rate, plus the sampling parameters
/// that produced it.
struct MaskPlan {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::vector<std::uint8_t> mask;  // batch * frames entries, row-major
  std::size_t span_length = 0;
  double mask_start_prob = 0.0;

  bool masked(std::size_t b, std::size_t t) const { return mask[b * frames + t] != 0; }
  std::size_t masked_count() const;
};

enum class MaskFill { learned_embedding, zeros };

struct ModelOptions {
  /// Drops the reserved final block and the mid projection: the student runs
  /// the mid-level stack only and both prediction heads read its top block.
  bool ablate_high_block = false;
  /// Builds the structural target from the student's own parameters without
  /// stop_gradient (deliberate destabilization for collapse studies).
  bool disable_stop_gradient = false;
  MaskFill mask_fill = MaskFill::learned_embedding;
};

/// The three parameter sets plus projection heads. `student` holds the encoder
/// weights, the mask embedding, and both projections; `ema_teacher` mirrors
/// only the encoder weights; `frozen_teacher` holds encoder weights plus a
/// linear classifier and never receives gradients.
struct BranchSet {
  ParameterMap student;
  ParameterMap ema_teacher;
  ParameterMap frozen_teacher;
  double ema_decay = 0.999;
  std::size_t top_k = 1;
};

struct StudentPrediction {
  Tensor z_prime;  // B x T x H mid-level prediction
  Tensor y_prime;  // B x T x C high-level prediction
  LayerOutputs layers;
};

/// Initializes all three branches. The EMA teacher starts as a copy of the
/// student encoder; the frozen teacher is drawn from its own stream and is
/// expected to be trained (then frozen) by the pipeline.
BranchSet init_branch_set(const EncoderConfig& config, std::size_t pseudo_classes,
                          std::size_t top_k, Rng& student_rng, Rng& frozen_rng);

/// Samples span starts per frame with probability p, extends each by M frames
/// (clipped at the end), and replaces masked frames with `fill` (an F-vector).
/// Rejects p*M >= 1, where a frame is masked in expectation.
std::pair<Tensor, MaskPlan> mask_spans(const Tensor& x, double p, std::size_t m,
                                       Rng& rng, const Tensor& fill);

/// Mask embedding or zero vector for mask_spans, taken from the student.
Tensor mask_fill_vector(const BranchSet& branches, const ModelOptions& options,
                        std::size_t input_dim);

/// Downsamples the frame-rate mask to encoder steps: a step is masked when any
/// frame in its stride window is masked. Returns a B x T tensor of 0/1.
Tensor downsample_mask(const MaskPlan& plan, std::size_t stride);

/// Student branch on corrupted input, dropout active.
StudentPrediction student_forward(const Tensor& x_corrupt, const BranchSet& branches,
                                  const EncoderConfig& config,
                                  const ModelOptions& options, Rng& dropout_rng);

/// Layer-normalizes each of the last `k` layer outputs per frame and averages
/// them (no gradient stop here).
Tensor summarize_top_k(const LayerOutputs& layers, std::size_t k);

/// summarize_top_k over the teacher's eligible layer outputs, under
/// stop_gradient. Eligible layers are the mid-level stack; the reserved
/// high-level block never feeds the target. With disable_stop_gradient the
/// student's own parameters produce the target and the gradient is left
/// flowing.
Tensor build_struc_target(const Tensor& x_intact, const BranchSet& branches,
                          const EncoderConfig& config, const ModelOptions& options);

/// Frozen-teacher logits on intact input, under stop_gradient, dropout off.
Tensor frozen_teacher_targets(const Tensor& x_intact, const BranchSet& branches,
                              const EncoderConfig& config);

/// In-place EMA blend over every EMA-tracked parameter:
/// teacher <- tau * teacher + (1 - tau) * student.
void ema_update(BranchSet& branches, double tau);

/// Linear interpolation from tau_start to tau_end over anneal_steps, then
/// constant tau_end.
double tau_schedule(std::size_t step, double tau_start, double tau_end,
                    std::size_t anneal_steps);

/// Names of the student parameters mirrored by the EMA teacher.
bool is_ema_tracked(const std::string& name);

}  // namespace trinet
