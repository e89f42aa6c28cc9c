#include "trinet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace trinet {

namespace {

constexpr char kMagic[4] = {'T', 'R', 'I', 'N'};
constexpr std::uint32_t kFormatVersion = 1;
// Class means are a pure function of (num_classes, feature_dim); this stream
// seed is part of the format, not of any experiment's seed.
constexpr std::uint64_t kClassMeanSeed = 0x7213740c1a55ULL;

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 8);
}

void write_u16(std::ofstream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  write_bytes(out, b, 2);
}

void write_f64(std::ofstream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw std::runtime_error(std::string("load: truncated dataset file (") + what + ")");
  }
}

std::uint32_t read_u32(std::ifstream& in, const char* what) {
  unsigned char b[4];
  read_bytes(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::ifstream& in, const char* what) {
  unsigned char b[8];
  read_bytes(in, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint16_t read_u16(std::ifstream& in, const char* what) {
  unsigned char b[2];
  read_bytes(in, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

double read_f64(std::ifstream& in, const char* what) {
  return std::bit_cast<double>(read_u64(in, what));
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("data.num_classes must be at least 2");
  if (feature_dim == 0) throw std::invalid_argument("data.feature_dim must be positive");
  if (seq_len == 0) throw std::invalid_argument("data.seq_len must be positive");
  if (num_sequences == 0) {
    throw std::invalid_argument("data.num_sequences must be positive");
  }
  if (!(emission_noise_std > 0.0)) {
    throw std::invalid_argument("data.emission_noise_std must be positive");
  }
  if (transition_stickiness < 0.0 || transition_stickiness > 1.0) {
    throw std::invalid_argument("data.transition_stickiness must lie in [0, 1]");
  }
  if (!transition_matrix.empty()) {
    if (transition_matrix.size() != num_classes * num_classes) {
      throw std::invalid_argument("data.transition_matrix must be C x C");
    }
    for (std::size_t r = 0; r < num_classes; ++r) {
      double row_sum = 0.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double v = transition_matrix[r * num_classes + c];
        if (v < 0.0) {
          throw std::invalid_argument("data.transition_matrix entries must be >= 0");
        }
        row_sum += v;
      }
      if (std::abs(row_sum - 1.0) > 1e-12) {
        throw std::invalid_argument("data.transition_matrix row " + std::to_string(r) +
                                    " does not sum to 1");
      }
    }
  }
  if (!class_means.empty()) {
    if (class_means.size() != num_classes * feature_dim) {
      throw std::invalid_argument("data.class_means must be C x F");
    }
    for (std::size_t a = 0; a < num_classes; ++a) {
      for (std::size_t b = a + 1; b < num_classes; ++b) {
        double diff = 0.0;
        for (std::size_t f = 0; f < feature_dim; ++f) {
          const double d =
              class_means[a * feature_dim + f] - class_means[b * feature_dim + f];
          diff += d * d;
        }
        if (diff == 0.0) {
          throw std::invalid_argument("data.class_means rows " + std::to_string(a) +
                                      " and " + std::to_string(b) + " coincide");
        }
      }
    }
  }
}

std::vector<double> SynthConfig::resolved_transition_matrix() const {
  if (!transition_matrix.empty()) return transition_matrix;
  std::vector<double> t(num_classes * num_classes);
  const double off = num_classes > 1
                         ? (1.0 - transition_stickiness) / (num_classes - 1)
                         : 0.0;
  for (std::size_t r = 0; r < num_classes; ++r) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      t[r * num_classes + c] = r == c ? transition_stickiness : off;
    }
  }
  return t;
}

std::vector<double> SynthConfig::resolved_class_means() const {
  if (!class_means.empty()) return class_means;
  Rng rng(kClassMeanSeed);
  std::vector<double> means(num_classes * feature_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double* row = means.data() + c * feature_dim;
    for (std::size_t f = 0; f < feature_dim; ++f) row[f] = rng.normal();
    // Gram-Schmidt while directions remain; classes beyond feature_dim stay
    // plain random unit vectors (distinct almost surely).
    if (c < feature_dim) {
      for (std::size_t p = 0; p < c; ++p) {
        const double* other = means.data() + p * feature_dim;
        double dot = 0.0;
        for (std::size_t f = 0; f < feature_dim; ++f) dot += row[f] * other[f];
        for (std::size_t f = 0; f < feature_dim; ++f) row[f] -= dot * other[f];
      }
    }
    double norm = 0.0;
    for (std::size_t f = 0; f < feature_dim; ++f) norm += row[f] * row[f];
    norm = std::sqrt(norm);
    for (std::size_t f = 0; f < feature_dim; ++f) row[f] /= norm;
  }
  return means;
}

std::vector<std::size_t> LabeledDataset::sequence_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < num_sequences; ++s) {
    if (split_tags[s] == static_cast<std::uint8_t>(split)) out.push_back(s);
  }
  return out;
}

Tensor LabeledDataset::batch_features(const std::vector<std::size_t>& sequences) const {
  const std::size_t stride = seq_len * feature_dim;
  std::vector<double> values;
  values.reserve(sequences.size() * stride);
  for (std::size_t s : sequences) {
    if (s >= num_sequences) {
      throw std::out_of_range("batch_features: sequence index out of range");
    }
    values.insert(values.end(), features.begin() + s * stride,
                  features.begin() + (s + 1) * stride);
  }
  return Tensor({sequences.size(), seq_len, feature_dim}, std::move(values));
}

LabeledDataset generate(const SynthConfig& config) {
  config.validate();
  const std::vector<double> transition = config.resolved_transition_matrix();
  const std::vector<double> means = config.resolved_class_means();
  const std::size_t c_count = config.num_classes;
  const std::size_t f = config.feature_dim;
  const std::size_t t = config.seq_len;

  LabeledDataset dataset;
  dataset.num_sequences = config.num_sequences;
  dataset.seq_len = t;
  dataset.feature_dim = f;
  dataset.num_classes = c_count;
  dataset.features.resize(config.num_sequences * t * f);
  dataset.labels.resize(config.num_sequences * t);
  dataset.split_tags.assign(config.num_sequences,
                            static_cast<std::uint8_t>(Split::pretrain));

  for (std::size_t s = 0; s < config.num_sequences; ++s) {
    Rng rng = derive_rng(config.seed, "data", s);
    std::size_t label = rng.uniform_index(c_count);
    for (std::size_t step = 0; step < t; ++step) {
      if (step > 0) {
        const double u = rng.uniform();
        double cumulative = 0.0;
        std::size_t next = c_count - 1;
        for (std::size_t c = 0; c < c_count; ++c) {
          cumulative += transition[label * c_count + c];
          if (u < cumulative) {
            next = c;
            break;
          }
        }
        label = next;
      }
      dataset.labels[s * t + step] = static_cast<std::uint16_t>(label);
      double* frame = dataset.features.data() + (s * t + step) * f;
      const double* mean = means.data() + label * f;
      for (std::size_t d = 0; d < f; ++d) {
        frame[d] = mean[d] + config.emission_noise_std * rng.normal();
      }
    }
  }
  return dataset;
}

void assign_splits(LabeledDataset& dataset, double pretrain_fraction,
                   double finetune_fraction, double eval_fraction,
                   std::uint64_t seed) {
  if (pretrain_fraction < 0.0 || finetune_fraction < 0.0 || eval_fraction < 0.0) {
    throw std::invalid_argument("split fractions must be nonnegative");
  }
  const double total = pretrain_fraction + finetune_fraction + eval_fraction;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }

  const std::size_t n = dataset.num_sequences;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = derive_rng(seed, "split");
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  const auto n_pretrain =
      static_cast<std::size_t>(std::llround(pretrain_fraction * static_cast<double>(n)));
  const auto n_finetune = std::min(
      n - n_pretrain,
      static_cast<std::size_t>(std::llround(finetune_fraction * static_cast<double>(n))));

  for (std::size_t i = 0; i < n; ++i) {
    Split tag = Split::eval;
    if (i < n_pretrain) {
      tag = Split::pretrain;
    } else if (i < n_pretrain + n_finetune) {
      tag = Split::finetune;
    }
    dataset.split_tags[order[i]] = static_cast<std::uint8_t>(tag);
  }
}

void save(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save: cannot write '" + path + "'");
  write_bytes(out, kMagic, 4);
  write_u32(out, kFormatVersion);
  write_u64(out, dataset.num_sequences);
  write_u64(out, dataset.seq_len);
  write_u64(out, dataset.feature_dim);
  write_u64(out, dataset.num_classes);
  write_bytes(out, dataset.split_tags.data(), dataset.split_tags.size());
  for (std::uint16_t label : dataset.labels) write_u16(out, label);
  for (double v : dataset.features) write_f64(out, v);
  if (!out) throw std::runtime_error("save: write failed for '" + path + "'");
}

LabeledDataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load: cannot read '" + path + "'");

  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw std::runtime_error("load: '" + path + "' is not a TRIN dataset file");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kFormatVersion) {
    throw std::runtime_error("load: unsupported dataset version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kFormatVersion) + ")");
  }

  LabeledDataset dataset;
  dataset.num_sequences = read_u64(in, "num_sequences");
  dataset.seq_len = read_u64(in, "seq_len");
  dataset.feature_dim = read_u64(in, "feature_dim");
  dataset.num_classes = read_u64(in, "num_classes");
  if (dataset.num_sequences == 0 || dataset.seq_len == 0 || dataset.feature_dim == 0) {
    throw std::runtime_error("load: corrupt dataset header in '" + path + "'");
  }

  dataset.split_tags.resize(dataset.num_sequences);
  read_bytes(in, dataset.split_tags.data(), dataset.split_tags.size(), "split tags");

  dataset.labels.resize(dataset.num_sequences * dataset.seq_len);
  for (auto& label : dataset.labels) {
    label = read_u16(in, "labels");
    if (label >= dataset.num_classes) {
      throw std::runtime_error("load: label out of range in '" + path + "'");
    }
  }
  dataset.features.resize(dataset.num_sequences * dataset.seq_len *
                          dataset.feature_dim);
  for (auto& v : dataset.features) v = read_f64(in, "features");

  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) {
    throw std::runtime_error("load: trailing bytes in '" + path + "'");
  }
  return dataset;
}

std::vector<std::uint16_t> downsample_labels(const LabeledDataset& dataset,
                                             std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("downsample_labels: stride must be positive");
  const std::size_t steps = (dataset.seq_len + stride - 1) / stride;
  std::vector<std::uint16_t> out(dataset.num_sequences * steps);
  std::vector<std::size_t> counts(dataset.num_classes);
  for (std::size_t s = 0; s < dataset.num_sequences; ++s) {
    for (std::size_t w = 0; w < steps; ++w) {
      std::fill(counts.begin(), counts.end(), 0);
      const std::size_t begin = w * stride;
      const std::size_t end = std::min(dataset.seq_len, begin + stride);
      for (std::size_t t = begin; t < end; ++t) {
        ++counts[dataset.labels[s * dataset.seq_len + t]];
      }
      std::size_t best = 0;
      for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] > counts[best]) best = c;
      }
      out[s * steps + w] = static_cast<std::uint16_t>(best);
    }
  }
  return out;
}

double nearest_mean_accuracy(const LabeledDataset& dataset,
                             const std::vector<double>& class_means) {
  if (class_means.size() != dataset.num_classes * dataset.feature_dim) {
    throw std::invalid_argument("nearest_mean_accuracy: class_means must be C x F");
  }
  std::size_t correct = 0;
  const std::size_t frames = dataset.num_sequences * dataset.seq_len;
  for (std::size_t i = 0; i < frames; ++i) {
    const double* x = dataset.features.data() + i * dataset.feature_dim;
    std::size_t best = 0;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
      const double* mean = class_means.data() + c * dataset.feature_dim;
      double dist = 0.0;
      for (std::size_t f = 0; f < dataset.feature_dim; ++f) {
        const double d = x[f] - mean[f];
        dist += d * d;
      }
      if (c == 0 || dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    correct += best == dataset.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(frames);
}

}  // namespace trinet
