#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "trinet/rng.hpp"
#include "trinet/tensor.hpp"

namespace trinet {

/// Emission noise giving the default corpus a nearest-mean (Bayes-optimal)
/// frame accuracy of roughly 0.9; calibrated against that oracle and frozen.
inline constexpr double kDefaultEmissionNoiseStd = 0.35;

struct SynthConfig {
  std::size_t num_classes = 8;
  std::size_t feature_dim = 16;
  std::size_t seq_len = 64;
  std::size_t num_sequences = 256;
  double emission_noise_std = kDefaultEmissionNoiseStd;
  /// Self-transition probability of the default sticky Markov chain; ignored
  /// when transition_matrix is set explicitly.
  double transition_stickiness = 0.9;
  /// Row-stochastic C x C matrix; empty selects the sticky default.
  std::vector<double> transition_matrix;
  /// C x F class means; empty selects fixed orthonormal defaults.
  std::vector<double> class_means;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<double> resolved_transition_matrix() const;
  std::vector<double> resolved_class_means() const;
};

enum class Split : std::uint8_t { pretrain = 0, finetune = 1, eval = 2 };

struct LabeledDataset {
  std::size_t num_sequences = 0;
  std::size_t seq_len = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;        // num_sequences * seq_len * feature_dim
  std::vector<std::uint16_t> labels;   // num_sequences * seq_len
  std::vector<std::uint8_t> split_tags;  // one Split per sequence

  std::vector<std::size_t> sequence_indices(Split split) const;
  /// Features of the given sequences as a B x T_in x F tensor.
  Tensor batch_features(const std::vector<std::size_t>& sequences) const;
};

/// Markov per-frame labels, Gaussian emissions around class means.
/// Deterministic given config.seed; sequence s draws from its own derived
/// stream so generation order is immaterial.
LabeledDataset generate(const SynthConfig& config);

/// Seed-deterministic disjoint exhaustive split assignment by sequence.
/// Fractions must be nonnegative and sum to 1.
void assign_splits(LabeledDataset& dataset, double pretrain_fraction,
                   double finetune_fraction, double eval_fraction,
                   std::uint64_t seed);

/// Binary format: magic "TRIN", u32 version, u64 dims, split tags, u16
/// labels, little-endian f64 features (layout documented in the repo).
void save(const LabeledDataset& dataset, const std::string& path);
LabeledDataset load(const std::string& path);

/// Majority label per stride window (ties to the smallest class index), the
/// frame-rate labels used by probes. Returns num_sequences * ceil(T/stride)
/// entries.
std::vector<std::uint16_t> downsample_labels(const LabeledDataset& dataset,
                                             std::size_t stride);

/// Frame accuracy of the nearest-class-mean classifier, the Bayes-optimal
/// reference for isotropic Gaussian emissions with equal priors.
double nearest_mean_accuracy(const LabeledDataset& dataset,
                             const std::vector<double>& class_means);

}  // namespace trinet
