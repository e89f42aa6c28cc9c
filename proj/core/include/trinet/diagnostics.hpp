#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trinet/rng.hpp"

namespace trinet {

/// Row-major n x D matrix of frame embeddings, detached from any tape.
struct Embeddings {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
};

struct CollapseMetrics {
  std::vector<double> per_dim_variance;
  double mean_variance = 0.0;
  double effective_rank = 1.0;
  double mean_pairwise_cosine = 0.0;
  std::size_t zero_rows = 0;
  std::size_t step = 0;
};

struct CosineStat {
  double mean_cosine = 0.0;
  std::size_t zero_rows = 0;
  std::size_t pairs_sampled = 0;
};

/// Unbiased sample variance per dimension; requires rows >= 2.
std::vector<double> per_dim_variance(const Embeddings& embeddings);

/// exp of the entropy of the normalized singular values of the mean-centered
/// matrix. All-zero centered data is defined as 1.
double effective_rank(const Embeddings& embeddings);

/// Monte-Carlo mean cosine over sampled distinct row pairs. Zero-norm rows are
/// excluded and counted; throws when fewer than 2 nonzero rows remain.
CosineStat mean_pairwise_cosine(const Embeddings& embeddings,
                                std::size_t sample_pairs, Rng& rng);

/// Centered-covariance PCA projection to `dims` components, eigenvalue
/// descending, each component's sign fixed so its largest-magnitude loading is
/// positive.
Embeddings pca_project(const Embeddings& embeddings, std::size_t dims = 2);

/// CSV dump: header e0..e{D-1},label then one row per embedding at full f64
/// round-trip precision.
void export_embeddings(const Embeddings& embeddings, const std::vector<int>& labels,
                       const std::string& path);

/// Reads a file written by export_embeddings.
std::pair<Embeddings, std::vector<int>> import_embeddings(const std::string& path);

/// Convenience bundle of the collapse indicators at one training step.
CollapseMetrics collapse_metrics(const Embeddings& embeddings, std::size_t step,
                                 std::size_t sample_pairs, Rng& rng);

/// Eigendecomposition of a symmetric m x m matrix by cyclic Jacobi rotations
/// (tolerance 1e-8). Returns eigenvalues and matching unit eigenvectors as
/// matrix columns, unordered.
void symmetric_eigen(const std::vector<double>& matrix, std::size_t m,
                     std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

}  // namespace trinet
