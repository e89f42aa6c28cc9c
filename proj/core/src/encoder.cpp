#include "trinet/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trinet {

namespace {

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (auto& v : mask) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor linear(const Tensor& x, const ParameterMap& params, const std::string& prefix) {
  return add(matmul(x, params.at(prefix + ".w")), params.at(prefix + ".b"));
}

Tensor affine_norm(const Tensor& x, const ParameterMap& params,
                   const std::string& prefix) {
  return layer_norm(x, params.at(prefix + ".g"), params.at(prefix + ".b"));
}

Tensor self_attention(const Tensor& x, const ParameterMap& params,
                      const std::string& prefix, std::size_t num_heads,
                      std::vector<Tensor>* attention_sink) {
  const std::size_t hidden = x.dim(-1);
  const std::size_t head_dim = hidden / num_heads;
  const double scaling = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor q = add(matmul(x, params.at(prefix + ".wq")), params.at(prefix + ".bq"));
  Tensor k = add(matmul(x, params.at(prefix + ".wk")), params.at(prefix + ".bk"));
  Tensor v = add(matmul(x, params.at(prefix + ".wv")), params.at(prefix + ".bv"));

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    Tensor qh = slice(q, -1, h * head_dim, head_dim);
    Tensor kh = slice(k, -1, h * head_dim, head_dim);
    Tensor vh = slice(v, -1, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose_last(kh)), scaling);
    Tensor weights = softmax(scores, -1);
    if (attention_sink) attention_sink->push_back(weights);
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = num_heads == 1 ? head_outputs[0] : concat(head_outputs, -1);
  return add(matmul(merged, params.at(prefix + ".wo")), params.at(prefix + ".bo"));
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("encoder.input_dim must be positive");
  if (hidden_dim == 0) throw std::invalid_argument("encoder.hidden_dim must be positive");
  if (num_blocks < 2) throw std::invalid_argument("encoder.num_blocks must be at least 2");
  if (num_heads == 0 || hidden_dim % num_heads != 0) {
    throw std::invalid_argument(
        "encoder.num_heads must be positive and divide hidden_dim");
  }
  if (ffn_multiplier == 0) {
    throw std::invalid_argument("encoder.ffn_multiplier must be positive");
  }
  if (downsample_stride == 0) {
    throw std::invalid_argument("encoder.downsample_stride must be positive");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("encoder.dropout_rate must lie in [0, 1)");
  }
}

std::size_t EncoderConfig::output_steps(std::size_t input_frames) const {
  return (input_frames + downsample_stride - 1) / downsample_stride;
}

ParameterMap init_encoder_params(const EncoderConfig& config, Rng& rng,
                                 bool requires_grad) {
  config.validate();
  const std::size_t f = config.input_dim;
  const std::size_t h = config.hidden_dim;
  const std::size_t s = config.downsample_stride;
  const std::size_t ffn = h * config.ffn_multiplier;

  ParameterMap params;
  auto weight = [&](const std::string& name, Shape shape, std::size_t fan_in) {
    params.insert(name, Tensor::randn(std::move(shape), rng,
                                      1.0 / std::sqrt(static_cast<double>(fan_in)),
                                      requires_grad));
  };
  auto constant = [&](const std::string& name, Shape shape, double value) {
    params.insert(name, Tensor::full(std::move(shape), value, requires_grad));
  };

  weight("frontend.proj.w", {f * s, h}, f * s);
  constant("frontend.proj.b", {h}, 0.0);
  constant("frontend.ln.g", {h}, 1.0);
  constant("frontend.ln.b", {h}, 0.0);

  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    constant(p + "ln1.g", {h}, 1.0);
    constant(p + "ln1.b", {h}, 0.0);
    weight(p + "attn.wq", {h, h}, h);
    constant(p + "attn.bq", {h}, 0.0);
    weight(p + "attn.wk", {h, h}, h);
    constant(p + "attn.bk", {h}, 0.0);
    weight(p + "attn.wv", {h, h}, h);
    constant(p + "attn.bv", {h}, 0.0);
    weight(p + "attn.wo", {h, h}, h);
    constant(p + "attn.bo", {h}, 0.0);
    constant(p + "ln2.g", {h}, 1.0);
    constant(p + "ln2.b", {h}, 0.0);
    weight(p + "ffn.w1", {h, ffn}, h);
    constant(p + "ffn.b1", {ffn}, 0.0);
    weight(p + "ffn.w2", {ffn, h}, ffn);
    constant(p + "ffn.b2", {h}, 0.0);
    constant(p + "ln3.g", {h}, 1.0);
    constant(p + "ln3.b", {h}, 0.0);
  }
  return params;
}

Tensor positional_encoding(std::size_t steps, std::size_t hidden_dim) {
  std::vector<double> values(steps * hidden_dim);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < hidden_dim; ++i) {
      const double exponent =
          static_cast<double>(2 * (i / 2)) / static_cast<double>(hidden_dim);
      const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
      values[t * hidden_dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({steps, hidden_dim}, std::move(values));
}

Tensor frontend(const Tensor& x, const ParameterMap& params,
                const EncoderConfig& config) {
  if (x.rank() != 3) {
    throw std::invalid_argument("frontend: input must be B x T x F, got " +
                                shape_to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t t_in = x.dim(1);
  const std::size_t feat = x.dim(2);
  if (feat != config.input_dim) {
    throw std::invalid_argument("frontend: feature dim " + std::to_string(feat) +
                                " does not match configured " +
                                std::to_string(config.input_dim));
  }
  if (t_in == 0) throw std::invalid_argument("frontend: empty sequence");
  if (t_in < config.downsample_stride) {
    throw std::invalid_argument("frontend: sequence shorter than one stride window");
  }

  const std::size_t s = config.downsample_stride;
  const std::size_t t_out = config.output_steps(t_in);
  Tensor padded = x;
  if (t_out * s != t_in) {
    Tensor pad = Tensor::zeros({batch, t_out * s - t_in, feat});
    padded = concat({x, pad}, 1);
  }
  Tensor stacked = reshape(padded, {batch, t_out, s * feat});
  Tensor projected = linear(stacked, params, "frontend.proj");
  return affine_norm(projected, params, "frontend.ln");
}

LayerOutputs encode(const Tensor& h, const ParameterMap& params,
                    const EncoderConfig& config, bool dropout_on, Rng& dropout_rng,
                    std::size_t max_blocks, std::vector<Tensor>* attention_sink) {
  if (h.rank() != 3 || h.dim(-1) != config.hidden_dim) {
    throw std::invalid_argument("encode: input must be B x T x hidden_dim, got " +
                                shape_to_string(h.shape()));
  }
  const std::size_t blocks =
      max_blocks == 0 ? config.num_blocks : std::min(max_blocks, config.num_blocks);
  const bool use_dropout = dropout_on && config.dropout_rate > 0.0;

  Tensor state = add(h, positional_encoding(h.dim(1), config.hidden_dim));
  LayerOutputs outputs;
  outputs.reserve(blocks);
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    Tensor attn_in = affine_norm(state, params, p + "ln1");
    Tensor attn_out =
        self_attention(attn_in, params, p + "attn", config.num_heads, attention_sink);
    if (use_dropout) attn_out = dropout(attn_out, config.dropout_rate, dropout_rng);
    state = add(state, attn_out);

    Tensor ffn_in = affine_norm(state, params, p + "ln2");
    Tensor ffn_hidden =
        gelu(add(matmul(ffn_in, params.at(p + "ffn.w1")), params.at(p + "ffn.b1")));
    Tensor ffn_out =
        add(matmul(ffn_hidden, params.at(p + "ffn.w2")), params.at(p + "ffn.b2"));
    if (use_dropout) ffn_out = dropout(ffn_out, config.dropout_rate, dropout_rng);
    state = add(state, ffn_out);

    state = affine_norm(state, params, p + "ln3");
    outputs.push_back(state);
  }
  return outputs;
}

LayerOutputs encode_sequence(const Tensor& x, const ParameterMap& params,
                             const EncoderConfig& config, bool dropout_on,
                             Rng& dropout_rng, std::size_t max_blocks,
                             std::vector<Tensor>* attention_sink) {
  Tensor h = frontend(x, params, config);
  return encode(h, params, config, dropout_on, dropout_rng, max_blocks,
                attention_sink);
}

}  // namespace trinet
