#include "trinet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace trinet {

namespace {

void require_matrix(const Embeddings& e, std::size_t min_rows, const char* op) {
  if (e.rows < min_rows) {
    throw std::invalid_argument(std::string(op) + ": need at least " +
                                std::to_string(min_rows) + " rows, got " +
                                std::to_string(e.rows));
  }
  if (e.dim == 0 || e.values.size() != e.rows * e.dim) {
    throw std::invalid_argument(std::string(op) + ": inconsistent embedding shape");
  }
}

std::vector<double> column_means(const Embeddings& e) {
  std::vector<double> mean(e.dim, 0.0);
  for (std::size_t r = 0; r < e.rows; ++r) {
    for (std::size_t c = 0; c < e.dim; ++c) mean[c] += e.at(r, c);
  }
  for (auto& v : mean) v /= static_cast<double>(e.rows);
  return mean;
}

std::vector<double> centered(const Embeddings& e) {
  std::vector<double> mean = column_means(e);
  std::vector<double> out(e.values.size());
  for (std::size_t r = 0; r < e.rows; ++r) {
    for (std::size_t c = 0; c < e.dim; ++c) {
      out[r * e.dim + c] = e.at(r, c) - mean[c];
    }
  }
  return out;
}

}  // namespace

void symmetric_eigen(const std::vector<double>& matrix, std::size_t m,
                     std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
  if (matrix.size() != m * m) {
    throw std::invalid_argument("symmetric_eigen: matrix size mismatch");
  }
  std::vector<double> a = matrix;
  eigenvectors.assign(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) eigenvectors[i * m + i] = 1.0;

  constexpr double kTol = 1e-8;
  constexpr int kMaxSweeps = 100;
  double norm = 0.0;
  for (double v : a) norm += v * v;
  norm = std::sqrt(norm);
  const double threshold = std::max(kTol * norm, 1e-300);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) off += 2.0 * a[p * m + q] * a[p * m + q];
    }
    if (std::sqrt(off) <= threshold) break;

    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        const double apq = a[p * m + q];
        if (std::abs(apq) <= threshold / static_cast<double>(m * m)) continue;
        const double app = a[p * m + p];
        const double aqq = a[q * m + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < m; ++k) {
          const double akp = a[k * m + p];
          const double akq = a[k * m + q];
          a[k * m + p] = c * akp - s * akq;
          a[k * m + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < m; ++k) {
          const double apk = a[p * m + k];
          const double aqk = a[q * m + k];
          a[p * m + k] = c * apk - s * aqk;
          a[q * m + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < m; ++k) {
          const double vkp = eigenvectors[k * m + p];
          const double vkq = eigenvectors[k * m + q];
          eigenvectors[k * m + p] = c * vkp - s * vkq;
          eigenvectors[k * m + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) eigenvalues[i] = a[i * m + i];
}

std::vector<double> per_dim_variance(const Embeddings& embeddings) {
  require_matrix(embeddings, 2, "per_dim_variance");
  const std::vector<double> mean = column_means(embeddings);
  std::vector<double> var(embeddings.dim, 0.0);
  for (std::size_t r = 0; r < embeddings.rows; ++r) {
    for (std::size_t c = 0; c < embeddings.dim; ++c) {
      const double d = embeddings.at(r, c) - mean[c];
      var[c] += d * d;
    }
  }
  for (auto& v : var) v /= static_cast<double>(embeddings.rows - 1);
  return var;
}

double effective_rank(const Embeddings& embeddings) {
  require_matrix(embeddings, 2, "effective_rank");
  const std::vector<double> x = centered(embeddings);
  const std::size_t n = embeddings.rows;
  const std::size_t d = embeddings.dim;

  // Singular values of X come from the eigenvalues of the smaller Gram matrix.
  const std::size_t m = std::min(n, d);
  std::vector<double> gram(m * m, 0.0);
  if (d <= n) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += x[r * d + i] * x[r * d + j];
        gram[i * d + j] = s;
        gram[j * d + i] = s;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += x[i * d + c] * x[j * d + c];
        gram[i * n + j] = s;
        gram[j * n + i] = s;
      }
    }
  }

  std::vector<double> eigenvalues, eigenvectors;
  symmetric_eigen(gram, m, eigenvalues, eigenvectors);

  std::vector<double> sigma(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sigma[i] = std::sqrt(std::max(eigenvalues[i], 0.0));
    total += sigma[i];
  }
  if (total <= 0.0) return 1.0;

  double entropy = 0.0;
  for (double s : sigma) {
    const double p = s / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

CosineStat mean_pairwise_cosine(const Embeddings& embeddings,
                                std::size_t sample_pairs, Rng& rng) {
  require_matrix(embeddings, 2, "mean_pairwise_cosine");
  if (sample_pairs == 0) {
    throw std::invalid_argument("mean_pairwise_cosine: sample_pairs must be positive");
  }

  std::vector<std::size_t> nonzero;
  std::vector<double> norms(embeddings.rows, 0.0);
  for (std::size_t r = 0; r < embeddings.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < embeddings.dim; ++c) {
      s += embeddings.at(r, c) * embeddings.at(r, c);
    }
    norms[r] = std::sqrt(s);
    if (norms[r] > 0.0) nonzero.push_back(r);
  }

  CosineStat stat;
  stat.zero_rows = embeddings.rows - nonzero.size();
  if (nonzero.size() < 2) {
    throw std::invalid_argument(
        "mean_pairwise_cosine: fewer than 2 nonzero rows");
  }

  double sum = 0.0;
  for (std::size_t k = 0; k < sample_pairs; ++k) {
    const std::size_t i = nonzero[rng.uniform_index(nonzero.size())];
    std::size_t j = i;
    while (j == i) j = nonzero[rng.uniform_index(nonzero.size())];
    double dot = 0.0;
    for (std::size_t c = 0; c < embeddings.dim; ++c) {
      dot += embeddings.at(i, c) * embeddings.at(j, c);
    }
    sum += dot / (norms[i] * norms[j]);
  }
  stat.mean_cosine = sum / static_cast<double>(sample_pairs);
  stat.pairs_sampled = sample_pairs;
  return stat;
}

Embeddings pca_project(const Embeddings& embeddings, std::size_t dims) {
  require_matrix(embeddings, 2, "pca_project");
  if (dims == 0 || dims > embeddings.dim) {
    throw std::invalid_argument("pca_project: dims must lie in [1, D]");
  }
  const std::size_t n = embeddings.rows;
  const std::size_t d = embeddings.dim;
  const std::vector<double> x = centered(embeddings);

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += x[r * d + i] * x[r * d + j];
      s /= static_cast<double>(n - 1);
      cov[i * d + j] = s;
      cov[j * d + i] = s;
    }
  }

  std::vector<double> eigenvalues, eigenvectors;
  symmetric_eigen(cov, d, eigenvalues, eigenvectors);

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return eigenvalues[a] > eigenvalues[b]; });

  Embeddings out;
  out.rows = n;
  out.dim = dims;
  out.values.assign(n * dims, 0.0);
  for (std::size_t k = 0; k < dims; ++k) {
    const std::size_t col = order[k];
    std::vector<double> component(d);
    double best = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      component[i] = eigenvectors[i * d + col];
      if (std::abs(component[i]) > std::abs(best)) best = component[i];
    }
    if (best < 0.0) {
      for (auto& v : component) v = -v;
    }
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += x[r * d + i] * component[i];
      out.values[r * dims + k] = s;
    }
  }
  return out;
}

void export_embeddings(const Embeddings& embeddings, const std::vector<int>& labels,
                       const std::string& path) {
  require_matrix(embeddings, 1, "export_embeddings");
  if (labels.size() != embeddings.rows) {
    throw std::invalid_argument("export_embeddings: labels length must equal rows");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_embeddings: cannot write '" + path + "'");

  for (std::size_t c = 0; c < embeddings.dim; ++c) out << "e" << c << ",";
  out << "label\n";
  char buf[32];
  for (std::size_t r = 0; r < embeddings.rows; ++r) {
    for (std::size_t c = 0; c < embeddings.dim; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", embeddings.at(r, c));
      out << buf << ',';
    }
    out << labels[r] << '\n';
  }
  if (!out) throw std::runtime_error("export_embeddings: write failed for '" + path + "'");
}

std::pair<Embeddings, std::vector<int>> import_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_embeddings: cannot read '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("import_embeddings: empty file '" + path + "'");
  }
  std::size_t dim = 0;
  for (std::size_t pos = 0; (pos = header.find(',', pos)) != std::string::npos; ++pos) {
    ++dim;
  }

  Embeddings embeddings;
  embeddings.dim = dim;
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    for (std::size_t c = 0; c < dim; ++c) {
      if (!std::getline(row, cell, ',')) {
        throw std::runtime_error("import_embeddings: short row in '" + path + "'");
      }
      embeddings.values.push_back(std::stod(cell));
    }
    if (!std::getline(row, cell)) {
      throw std::runtime_error("import_embeddings: missing label in '" + path + "'");
    }
    labels.push_back(std::stoi(cell));
    ++embeddings.rows;
  }
  return {std::move(embeddings), std::move(labels)};
}

CollapseMetrics collapse_metrics(const Embeddings& embeddings, std::size_t step,
                                 std::size_t sample_pairs, Rng& rng) {
  CollapseMetrics metrics;
  metrics.step = step;
  metrics.per_dim_variance = per_dim_variance(embeddings);
  double total = 0.0;
  for (double v : metrics.per_dim_variance) total += v;
  metrics.mean_variance = total / static_cast<double>(metrics.per_dim_variance.size());
  metrics.effective_rank = effective_rank(embeddings);
  try {
    const CosineStat cosine = mean_pairwise_cosine(embeddings, sample_pairs, rng);
    metrics.mean_pairwise_cosine = cosine.mean_cosine;
    metrics.zero_rows = cosine.zero_rows;
  } catch (const std::invalid_argument&) {
    // Fewer than two nonzero rows: the cosine is undefined, not zero.
    metrics.mean_pairwise_cosine = std::nan("");
    metrics.zero_rows = embeddings.rows;
  }
  return metrics;
}

}  // namespace trinet
