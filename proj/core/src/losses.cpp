#include "trinet/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace trinet {

namespace {

void check_pair(const char* op, const Tensor& pred, const Tensor& target,
                const Tensor& mask) {
  if (pred.rank() != 3 || !shapes_equal(pred.shape(), target.shape())) {
    throw std::invalid_argument(std::string(op) + ": prediction " +
                                shape_to_string(pred.shape()) + " and target " +
                                shape_to_string(target.shape()) +
                                " must be equal B x T x D shapes");
  }
  if (mask.rank() != 2 || mask.dim(0) != pred.dim(0) || mask.dim(1) != pred.dim(1)) {
    throw std::invalid_argument(std::string(op) + ": mask must be B x T");
  }
}

Tensor select_and_sum(const Tensor& per_element, const Tensor& mask,
                      LossPositions positions) {
  if (positions == LossPositions::all_frames) return sum_all(per_element);
  Tensor mask3 = reshape(mask, {mask.dim(0), mask.dim(1), 1});
  return sum_all(mul(per_element, mask3));
}

Tensor squared_error_loss(const char* op, const Tensor& pred, const Tensor& target,
                          const Tensor& mask, LossPositions positions) {
  check_pair(op, pred, target, mask);
  const std::size_t d = pred.dim(-1);
  Tensor sq = square(sub(pred, target));
  return scale(select_and_sum(sq, mask, positions),
               1.0 / std::sqrt(static_cast<double>(d)));
}

}  // namespace

LossMode loss_mode_from_string(const std::string& name) {
  if (name == "trinet") return LossMode::trinet;
  if (name == "trinet_ablated_regre") return LossMode::trinet_ablated_regre;
  if (name == "data2vec_baseline") return LossMode::data2vec_baseline;
  throw std::invalid_argument("loss.mode: unknown mode '" + name + "'");
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::trinet: return "trinet";
    case LossMode::trinet_ablated_regre: return "trinet_ablated_regre";
    case LossMode::data2vec_baseline: return "data2vec_baseline";
  }
  return "unknown";
}

LossPositions loss_positions_from_string(const std::string& name) {
  if (name == "masked_only") return LossPositions::masked_only;
  if (name == "all_frames") return LossPositions::all_frames;
  throw std::invalid_argument("loss.positions: unknown selection '" + name + "'");
}

std::string to_string(LossPositions positions) {
  return positions == LossPositions::masked_only ? "masked_only" : "all_frames";
}

Tensor loss_struc(const Tensor& z_prime, const Tensor& z_struc, const Tensor& mask,
                  LossPositions positions) {
  return squared_error_loss("loss_struc", z_prime, z_struc, mask, positions);
}

Tensor loss_regre(const Tensor& y_prime, const Tensor& y_regul, const Tensor& mask,
                  LossPositions positions) {
  return squared_error_loss("loss_regre", y_prime, y_regul, mask, positions);
}

Tensor loss_regul(const Tensor& y_prime, const Tensor& y_regul, const Tensor& mask,
                  LossPositions positions, double temperature) {
  check_pair("loss_regul", y_prime, y_regul, mask);
  if (temperature <= 0.0) {
    throw std::invalid_argument("loss_regul: temperature must be positive");
  }
  const std::size_t c = y_prime.dim(-1);
  Tensor q = softmax(y_prime, -1);
  Tensor p = softmax(scale(y_regul, 1.0 / temperature), -1);
  Tensor cross = mul(p, log_clamped(q));
  return scale(select_and_sum(cross, mask, positions),
               -1.0 / std::sqrt(static_cast<double>(c)));
}

std::pair<Tensor, LossReport> total_loss(const LossInputs& inputs,
                                         const LossConfig& config) {
  LossReport report;
  const auto& mask_values = inputs.mask.values();
  for (double v : mask_values) report.masked_frame_count += v != 0.0 ? 1 : 0;
  report.empty_selection = config.positions == LossPositions::masked_only &&
                           report.masked_frame_count == 0;

  Tensor struc = loss_struc(inputs.z_prime, inputs.z_struc, inputs.mask,
                            config.positions);
  report.l_struc = struc.item();

  Tensor total = struc;
  switch (config.mode) {
    case LossMode::trinet: {
      Tensor regul = loss_regul(inputs.y_prime, inputs.y_regul, inputs.mask,
                                config.positions, config.regul_temperature);
      report.l_regul = regul.item();
      total = add(total, regul);
      break;
    }
    case LossMode::trinet_ablated_regre: {
      Tensor regre = loss_regre(inputs.y_prime, inputs.y_regul, inputs.mask,
                                config.positions);
      report.l_regre = regre.item();
      total = add(total, regre);
      break;
    }
    case LossMode::data2vec_baseline:
      break;
  }
  report.l_total = total.item();
  if (!std::isfinite(report.l_total)) {
    throw std::runtime_error("total_loss: non-finite loss");
  }
  return {total, report};
}

}  // namespace trinet
