#include <benchmark/benchmark.h>

#include "trinet/data.hpp"
#include "trinet/diagnostics.hpp"
#include "trinet/encoder.hpp"
#include "trinet/losses.hpp"
#include "trinet/model.hpp"
#include "trinet/ops.hpp"
#include "trinet/optimizer.hpp"
#include "trinet/rng.hpp"

namespace {

using namespace trinet;

EncoderConfig bench_encoder() {
  EncoderConfig config;
  config.input_dim = 16;
  config.hidden_dim = 64;
  config.num_blocks = 4;
  config.num_heads = 4;
  config.ffn_multiplier = 4;
  config.downsample_stride = 4;
  return config;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  const Tensor a = Tensor::randn({n, n}, rng);
  const Tensor b = Tensor::randn({n, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_EncoderForward(benchmark::State& state) {
  const EncoderConfig config = bench_encoder();
  Rng rng(7);
  const ParameterMap params = init_encoder_params(config, rng, false);
  const Tensor x = Tensor::randn({16, 64, config.input_dim}, rng);
  Rng dropout_rng(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_sequence(x, params, config, false, dropout_rng));
  }
}
BENCHMARK(BM_EncoderForward);

void BM_TrainingStep(benchmark::State& state) {
  const EncoderConfig encoder = bench_encoder();
  const ModelOptions options;
  Rng student_rng = derive_rng(1, "student-init");
  Rng frozen_rng = derive_rng(1, "frozen-init");
  BranchSet branches = init_branch_set(encoder, 8, 2, student_rng, frozen_rng);
  AdamConfig adam_config;
  AdamOptimizer optimizer(adam_config);
  Rng data_rng(3);
  const Tensor x = Tensor::randn({16, 64, encoder.input_dim}, data_rng);
  LossConfig loss_config;

  std::size_t step = 0;
  for (auto _ : state) {
    ++step;
    Tensor fill = mask_fill_vector(branches, options, encoder.input_dim);
    Rng mask_rng = derive_rng(1, "mask", step);
    auto [x_corrupt, plan] = mask_spans(x, 0.065, 10, mask_rng, fill);
    Rng dropout_rng = derive_rng(1, "dropout", step);
    StudentPrediction prediction =
        student_forward(x_corrupt, branches, encoder, options, dropout_rng);
    LossInputs inputs;
    inputs.z_prime = prediction.z_prime;
    inputs.y_prime = prediction.y_prime;
    inputs.z_struc = build_struc_target(x, branches, encoder, options);
    inputs.y_regul = frozen_teacher_targets(x, branches, encoder);
    inputs.mask = downsample_mask(plan, encoder.downsample_stride);
    auto [total, report] = total_loss(inputs, loss_config);
    backward(total);
    optimizer.step(branches.student);
    ema_update(branches, 0.999);
    benchmark::DoNotOptimize(report.l_total);
  }
}
BENCHMARK(BM_TrainingStep);

void BM_EffectiveRank(benchmark::State& state) {
  const std::size_t rows = 512;
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  Embeddings embeddings;
  embeddings.rows = rows;
  embeddings.dim = dim;
  embeddings.values.reserve(rows * dim);
  for (std::size_t i = 0; i < rows * dim; ++i) {
    embeddings.values.push_back(rng.normal());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(effective_rank(embeddings));
  }
}
BENCHMARK(BM_EffectiveRank)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
