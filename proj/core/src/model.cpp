#include "trinet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trinet {

namespace {

/// Encoder weights live under these prefixes; projections, the mask embedding,
/// and classifier heads do not participate in EMA tracking.
constexpr const char* kEncoderPrefixes[] = {"frontend.", "block"};

Rng& dummy_rng() {
  static Rng rng(0);
  return rng;
}

ParameterMap encoder_subset(const ParameterMap& params, bool requires_grad) {
  ParameterMap out;
  for (const auto& [name, tensor] : params) {
    if (is_ema_tracked(name)) {
      out.insert(name, Tensor(tensor.shape(), tensor.values(), requires_grad));
    }
  }
  return out;
}

}  // namespace

bool is_ema_tracked(const std::string& name) {
  for (const char* prefix : kEncoderPrefixes) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

std::size_t MaskPlan::masked_count() const {
  std::size_t count = 0;
  for (std::uint8_t v : mask) count += v != 0 ? 1 : 0;
  return count;
}

BranchSet init_branch_set(const EncoderConfig& config, std::size_t pseudo_classes,
                          std::size_t top_k, Rng& student_rng, Rng& frozen_rng) {
  config.validate();
  if (pseudo_classes == 0) {
    throw std::invalid_argument("model: pseudo_classes must be positive");
  }
  if (top_k < 1 || top_k > config.num_blocks - 1) {
    throw std::invalid_argument("model: top_k must lie in [1, num_blocks - 1]");
  }
  const std::size_t h = config.hidden_dim;
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(h));

  BranchSet branches;
  branches.top_k = top_k;
  branches.student = init_encoder_params(config, student_rng, true);
  branches.student.insert("mask.embedding",
                          Tensor::randn({config.input_dim}, student_rng, 0.1, true));
  branches.student.insert("proj.mid.w", Tensor::randn({h, h}, student_rng, proj_scale, true));
  branches.student.insert("proj.mid.b", Tensor::zeros({h}, true));
  branches.student.insert("proj.high.w",
                          Tensor::randn({h, pseudo_classes}, student_rng, proj_scale, true));
  branches.student.insert("proj.high.b", Tensor::zeros({pseudo_classes}, true));

  branches.ema_teacher = encoder_subset(branches.student, false);

  branches.frozen_teacher = init_encoder_params(config, frozen_rng, false);
  branches.frozen_teacher.insert(
      "classifier.w", Tensor::randn({h, pseudo_classes}, frozen_rng, proj_scale, false));
  branches.frozen_teacher.insert("classifier.b",
                                 Tensor::zeros({pseudo_classes}, false));
  return branches;
}

Tensor mask_fill_vector(const BranchSet& branches, const ModelOptions& options,
                        std::size_t input_dim) {
  if (options.mask_fill == MaskFill::learned_embedding) {
    return branches.student.at("mask.embedding");
  }
  return Tensor::zeros({input_dim});
}

std::pair<Tensor, MaskPlan> mask_spans(const Tensor& x, double p, std::size_t m,
                                       Rng& rng, const Tensor& fill) {
  if (x.rank() != 3) {
    throw std::invalid_argument("mask_spans: input must be B x T x F, got " +
                                shape_to_string(x.shape()));
  }
  if (p <= 0.0 || p >= 1.0) {
    throw std::invalid_argument("mask_spans: mask_start_prob must lie in (0, 1)");
  }
  const std::size_t frames = x.dim(1);
  if (m < 1 || m > frames) {
    throw std::invalid_argument("mask_spans: span_length must lie in [1, T_in]");
  }
  if (p * static_cast<double>(m) >= 1.0) {
    throw std::invalid_argument(
        "mask_spans: mask_start_prob * span_length >= 1 masks everything in "
        "expectation");
  }
  if (fill.shape() != Shape{x.dim(2)}) {
    throw std::invalid_argument("mask_spans: fill vector must have the feature dim");
  }

  MaskPlan plan;
  plan.batch = x.dim(0);
  plan.frames = frames;
  plan.span_length = m;
  plan.mask_start_prob = p;
  plan.mask.assign(plan.batch * frames, 0);
  for (std::size_t b = 0; b < plan.batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      if (rng.bernoulli(p)) {
        const std::size_t end = std::min(frames, t + m);
        for (std::size_t u = t; u < end; ++u) plan.mask[b * frames + u] = 1;
      }
    }
  }

  std::vector<double> keep(plan.batch * frames), drop(plan.batch * frames);
  for (std::size_t i = 0; i < plan.mask.size(); ++i) {
    keep[i] = plan.mask[i] ? 0.0 : 1.0;
    drop[i] = plan.mask[i] ? 1.0 : 0.0;
  }
  Tensor keep_t({plan.batch, frames, 1}, std::move(keep));
  Tensor drop_t({plan.batch, frames, 1}, std::move(drop));
  Tensor corrupted = add(mul(x, keep_t), mul(drop_t, fill));
  return {corrupted, plan};
}

Tensor downsample_mask(const MaskPlan& plan, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("downsample_mask: stride must be positive");
  const std::size_t steps = (plan.frames + stride - 1) / stride;
  std::vector<double> values(plan.batch * steps, 0.0);
  for (std::size_t b = 0; b < plan.batch; ++b) {
    for (std::size_t t = 0; t < plan.frames; ++t) {
      if (plan.mask[b * plan.frames + t]) values[b * steps + t / stride] = 1.0;
    }
  }
  return Tensor({plan.batch, steps}, std::move(values));
}

StudentPrediction student_forward(const Tensor& x_corrupt, const BranchSet& branches,
                                  const EncoderConfig& config,
                                  const ModelOptions& options, Rng& dropout_rng) {
  StudentPrediction out;
  const std::size_t n = config.num_blocks;
  if (options.ablate_high_block) {
    out.layers =
        encode_sequence(x_corrupt, branches.student, config, true, dropout_rng, n - 1);
    Tensor top = out.layers.back();
    out.z_prime = top;
    out.y_prime = add(matmul(top, branches.student.at("proj.high.w")),
                      branches.student.at("proj.high.b"));
  } else {
    out.layers =
        encode_sequence(x_corrupt, branches.student, config, true, dropout_rng);
    Tensor mid = out.layers[n - 2];
    out.z_prime = add(matmul(mid, branches.student.at("proj.mid.w")),
                      branches.student.at("proj.mid.b"));
    Tensor high = out.layers[n - 1];
    out.y_prime = add(matmul(high, branches.student.at("proj.high.w")),
                      branches.student.at("proj.high.b"));
  }
  return out;
}

Tensor summarize_top_k(const LayerOutputs& layers, std::size_t k) {
  if (layers.empty() || k < 1 || k > layers.size()) {
    throw std::invalid_argument("summarize_top_k: k must lie in [1, num_layers]");
  }
  Tensor accum;
  for (std::size_t i = layers.size() - k; i < layers.size(); ++i) {
    Tensor normed = layer_norm(layers[i]);
    accum = accum.defined() ? add(accum, normed) : normed;
  }
  return scale(accum, 1.0 / static_cast<double>(k));
}

Tensor build_struc_target(const Tensor& x_intact, const BranchSet& branches,
                          const EncoderConfig& config, const ModelOptions& options) {
  const std::size_t eligible = config.num_blocks - 1;
  const std::size_t k = std::min(branches.top_k, eligible);

  const ParameterMap& source =
      options.disable_stop_gradient ? branches.student : branches.ema_teacher;
  LayerOutputs layers =
      encode_sequence(x_intact, source, config, false, dummy_rng(), eligible);

  Tensor target = summarize_top_k(layers, k);
  return options.disable_stop_gradient ? target : stop_gradient(target);
}

Tensor frozen_teacher_targets(const Tensor& x_intact, const BranchSet& branches,
                              const EncoderConfig& config) {
  if (!branches.frozen_teacher.contains("classifier.w")) {
    throw std::runtime_error("frozen_teacher_targets: frozen teacher absent");
  }
  LayerOutputs layers =
      encode_sequence(x_intact, branches.frozen_teacher, config, false, dummy_rng());
  Tensor logits = add(matmul(layers.back(), branches.frozen_teacher.at("classifier.w")),
                      branches.frozen_teacher.at("classifier.b"));
  return stop_gradient(logits);
}

void ema_update(BranchSet& branches, double tau) {
  if (tau < 0.0 || tau > 1.0) {
    throw std::invalid_argument("ema_update: tau must lie in [0, 1]");
  }
  for (const auto& name : branches.ema_teacher.names()) {
    const auto& teacher = branches.ema_teacher.at(name).values();
    const auto& student = branches.student.at(name).values();
    std::vector<double> blended(teacher.size());
    for (std::size_t i = 0; i < blended.size(); ++i) {
      blended[i] = tau * teacher[i] + (1.0 - tau) * student[i];
    }
    branches.ema_teacher.replace(
        name, Tensor(branches.ema_teacher.at(name).shape(), std::move(blended), false));
  }
}

double tau_schedule(std::size_t step, double tau_start, double tau_end,
                    std::size_t anneal_steps) {
  if (tau_start < 0.0 || tau_start > tau_end || tau_end > 1.0) {
    throw std::invalid_argument("tau_schedule: need 0 <= tau_start <= tau_end <= 1");
  }
  if (anneal_steps == 0 || step >= anneal_steps) return tau_end;
  const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return tau_start + (tau_end - tau_start) * frac;
}

}  // namespace trinet
