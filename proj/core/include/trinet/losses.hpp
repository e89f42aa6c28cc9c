#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "trinet/ops.hpp"
#include "trinet/tensor.hpp"

namespace trinet {

enum class LossMode { trinet, trinet_ablated_regre, data2vec_baseline };
enum class LossPositions { masked_only, all_frames };

LossMode loss_mode_from_string(const std::string& name);
std::string to_string(LossMode mode);
LossPositions loss_positions_from_string(const std::string& name);
std::string to_string(LossPositions positions);

struct LossConfig {
  LossMode mode = LossMode::trinet;
  LossPositions positions = LossPositions::masked_only;
  double regul_temperature = 1.0;
};

/// Scalar terms for one step. Terms a mode does not compute stay absent.
struct LossReport {
  std::optional<double> l_struc;
  std::optional<double> l_regre;
  std::optional<double> l_regul;
  double l_total = 0.0;
  std::size_t masked_frame_count = 0;
  bool empty_selection = false;
};

struct LossInputs {
  Tensor z_prime;  // B x T x D
  Tensor y_prime;  // B x T x C
  Tensor z_struc;  // B x T x D, gradient-free unless deliberately destabilized
  Tensor y_regul;  // B x T x C, gradient-free
  Tensor mask;     // B x T of 0/1 at encoder frame rate
};

/// (1/sqrt(D)) * sum over selected elements of (z' - z_struc)^2.
Tensor loss_struc(const Tensor& z_prime, const Tensor& z_struc, const Tensor& mask,
                  LossPositions positions);

/// Same form in the pseudo-class space: (1/sqrt(C)) * sum (y' - y_regul)^2.
Tensor loss_regre(const Tensor& y_prime, const Tensor& y_regul, const Tensor& mask,
                  LossPositions positions);

/// (1/sqrt(C)) * sum over selected frames of
/// CE(softmax(y'), softmax(y_regul / temperature)).
Tensor loss_regul(const Tensor& y_prime, const Tensor& y_regul, const Tensor& mask,
                  LossPositions positions, double temperature);

/// Combines the mode's active terms and reports each as evaluated.
std::pair<Tensor, LossReport> total_loss(const LossInputs& inputs,
                                         const LossConfig& config);

}  // namespace trinet
