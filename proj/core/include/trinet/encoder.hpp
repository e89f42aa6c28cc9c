#pragma once

#include <cstddef>
#include <vector>

#include "trinet/ops.hpp"
#include "trinet/params.hpp"
#include "trinet/rng.hpp"
#include "trinet/tensor.hpp"

namespace trinet {

struct EncoderConfig {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t num_blocks = 4;
  std::size_t num_heads = 4;
  std::size_t ffn_multiplier = 4;
  std::size_t downsample_stride = 4;
  double dropout_rate = 0.1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Encoder steps produced from T_in input frames: ceil(T_in / stride).
  std::size_t output_steps(std::size_t input_frames) const;
};

/// Block outputs in depth order, each B x T x H.
using LayerOutputs = std::vector<Tensor>;

/// Parameter names used by init_encoder_params, in depth order:
///   frontend.proj.w  (F*S x H)   frontend.proj.b  (H)
///   frontend.ln.g/b  (H)
///   block<i>.ln1.g/b, block<i>.attn.{wq,bq,wk,bk,wv,bv,wo,bo},
///   block<i>.ln2.g/b, block<i>.ffn.{w1,b1,w2,b2}, block<i>.ln3.g/b
/// for i in [0, num_blocks).
ParameterMap init_encoder_params(const EncoderConfig& config, Rng& rng,
                                 bool requires_grad);

/// Stacks `downsample_stride` consecutive frames (zero-padding the trailing
/// partial window), projects F*S -> H, and layer-normalizes each step.
Tensor frontend(const Tensor& x, const ParameterMap& params,
                const EncoderConfig& config);

/// Runs the block stack on frontend output `h` (B x T x H) with sinusoidal
/// positional encoding added first. Returns one tensor per block. `dropout_rng`
/// is consumed only when dropout_on and dropout_rate > 0. `max_blocks` (0 =
/// all) stops early when only a prefix of the stack is needed. When
/// `attention_sink` is given, every head's B x T x T attention weights are
/// appended to it in block-then-head order.
LayerOutputs encode(const Tensor& h, const ParameterMap& params,
                    const EncoderConfig& config, bool dropout_on, Rng& dropout_rng,
                    std::size_t max_blocks = 0,
                    std::vector<Tensor>* attention_sink = nullptr);

/// frontend + encode in one call on raw input x (B x T_in x F).
LayerOutputs encode_sequence(const Tensor& x, const ParameterMap& params,
                             const EncoderConfig& config, bool dropout_on,
                             Rng& dropout_rng, std::size_t max_blocks = 0,
                             std::vector<Tensor>* attention_sink = nullptr);

/// Deterministic sinusoidal position table, T x H.
Tensor positional_encoding(std::size_t steps, std::size_t hidden_dim);

}  // namespace trinet
