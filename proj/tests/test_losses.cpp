#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "trinet/losses.hpp"
#include "trinet/ops.hpp"
#include "trinet/rng.hpp"

using namespace trinet;
using trinet::testing::max_fd_relative_error;

namespace {

Tensor full_mask(std::size_t batch, std::size_t steps) {
  return Tensor::full({batch, steps}, 1.0);
}

}  // namespace

TEST_SUITE_BEGIN("objectives");

TEST_CASE("mode and position names round trip") {
  for (LossMode mode : {LossMode::trinet, LossMode::trinet_ablated_regre,
                        LossMode::data2vec_baseline}) {
    CHECK(loss_mode_from_string(to_string(mode)) == mode);
  }
  for (LossPositions positions : {LossPositions::masked_only, LossPositions::all_frames}) {
    CHECK(loss_positions_from_string(to_string(positions)) == positions);
  }
  CHECK_THROWS_WITH_AS(loss_mode_from_string("banana"), doctest::Contains("banana"),
                       std::invalid_argument);
  CHECK_THROWS_AS(loss_positions_from_string("sometimes"), std::invalid_argument);
}

TEST_CASE("matching predictions give exactly zero regression loss") {
  Rng rng(51);
  Tensor z = Tensor::randn({2, 3, 4}, rng);
  Tensor same({2, 3, 4}, z.values());
  Tensor mask = full_mask(2, 3);
  CHECK(loss_struc(z, same, mask, LossPositions::all_frames).item() == 0.0);
  CHECK(loss_regre(z, same, mask, LossPositions::masked_only).item() == 0.0);
}

TEST_CASE("unit differences over four dimensions sum to two") {
  Tensor z_prime({1, 1, 4}, {1.0, 1.0, 1.0, 1.0});
  Tensor z_struc = Tensor::zeros({1, 1, 4});
  Tensor mask = full_mask(1, 1);
  const double loss =
      loss_struc(z_prime, z_struc, mask, LossPositions::masked_only).item();
  CHECK(std::abs(loss - 2.0) < 1e-10);
}

TEST_CASE("doubling the width scales the unit-difference loss by sqrt(2)") {
  Tensor z4({1, 1, 4}, std::vector<double>(4, 1.0));
  Tensor z8({1, 1, 8}, std::vector<double>(8, 1.0));
  Tensor mask = full_mask(1, 1);
  const double loss4 =
      loss_struc(z4, Tensor::zeros({1, 1, 4}), mask, LossPositions::all_frames).item();
  const double loss8 =
      loss_struc(z8, Tensor::zeros({1, 1, 8}), mask, LossPositions::all_frames).item();
  CHECK(std::abs(loss8 / loss4 - std::sqrt(2.0)) < 1e-12);
}

TEST_CASE("single unit error in four classes costs one half") {
  Tensor y_prime({1, 1, 4}, {1.0, 0.0, 0.0, 0.0});
  Tensor y_regul = Tensor::zeros({1, 1, 4});
  Tensor mask = full_mask(1, 1);
  const double loss =
      loss_regre(y_prime, y_regul, mask, LossPositions::all_frames).item();
  CHECK(std::abs(loss - 0.5) < 1e-12);
}

TEST_CASE("regression loss depends only on the difference") {
  Rng rng(52);
  Tensor y = Tensor::randn({2, 3, 4}, rng);
  Tensor t = Tensor::randn({2, 3, 4}, rng);
  Tensor mask = full_mask(2, 3);
  const double base = loss_regre(y, t, mask, LossPositions::all_frames).item();

  std::vector<double> y_shift = y.values();
  std::vector<double> t_shift = t.values();
  for (double& v : y_shift) v += 5.25;
  for (double& v : t_shift) v += 5.25;
  const double shifted = loss_regre(Tensor({2, 3, 4}, y_shift), Tensor({2, 3, 4}, t_shift),
                                    mask, LossPositions::all_frames)
                             .item();
  CHECK(std::abs(base - shifted) < 1e-10);
}

TEST_CASE("anchoring loss at matching uniform logits equals scaled entropy") {
  Tensor y_prime({1, 1, 4}, {0.7, 0.7, 0.7, 0.7});
  Tensor y_regul({1, 1, 4}, {0.7, 0.7, 0.7, 0.7});
  Tensor mask = full_mask(1, 1);
  const double loss =
      loss_regul(y_prime, y_regul, mask, LossPositions::all_frames, 1.0).item();
  CHECK(std::abs(loss - 0.5 * std::log(4.0)) < 1e-10);
}

TEST_CASE("anchoring loss vanishes in the one-hot limit") {
  Tensor logits({1, 1, 4}, {60.0, 0.0, 0.0, 0.0});
  Tensor mask = full_mask(1, 1);
  const double loss =
      loss_regul(logits, logits, mask, LossPositions::all_frames, 1.0).item();
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-10);
}

TEST_CASE("anchoring loss is shift invariant per frame") {
  Rng rng(53);
  Tensor y = Tensor::randn({2, 3, 4}, rng);
  Tensor t = Tensor::randn({2, 3, 4}, rng);
  Tensor mask = full_mask(2, 3);
  const double base = loss_regul(y, t, mask, LossPositions::all_frames, 1.0).item();

  std::vector<double> y_shift = y.values();
  std::vector<double> t_shift = t.values();
  for (double& v : y_shift) v += 3.0;
  for (double& v : t_shift) v -= 1.5;
  const double shifted =
      loss_regul(Tensor({2, 3, 4}, y_shift), Tensor({2, 3, 4}, t_shift), mask,
                 LossPositions::all_frames, 1.0)
          .item();
  CHECK(std::abs(base - shifted) < 1e-10);
}

TEST_CASE("cross entropy is minimized when the prediction matches the target") {
  Rng rng(54);
  Tensor mask = full_mask(1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor target = Tensor::randn({1, 1, 6}, rng);
    Tensor off = Tensor::randn({1, 1, 6}, rng);
    const double matched =
        loss_regul(target, target, mask, LossPositions::all_frames, 1.0).item();
    const double mismatched =
        loss_regul(off, target, mask, LossPositions::all_frames, 1.0).item();
    CHECK(mismatched >= matched - 1e-12);
  }
}

TEST_CASE("temperature sharpens or flattens the target distribution") {
  Tensor y_prime({1, 1, 3}, {0.0, 0.0, 0.0});
  Tensor y_regul({1, 1, 3}, {4.0, 0.0, -4.0});
  Tensor mask = full_mask(1, 1);
  const double hot =
      loss_regul(y_prime, y_regul, mask, LossPositions::all_frames, 100.0).item();
  CHECK(std::abs(hot - std::log(3.0) / std::sqrt(3.0)) < 1e-6);
  CHECK_THROWS_AS(loss_regul(y_prime, y_regul, mask, LossPositions::all_frames, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(loss_regul(y_prime, y_regul, mask, LossPositions::all_frames, -1.0),
                  std::invalid_argument);
}

TEST_CASE("masked selection ignores unmasked frames bit for bit") {
  Rng rng(55);
  Tensor z_struc = Tensor::randn({1, 4, 3}, rng);
  Tensor y_regul = Tensor::randn({1, 4, 5}, rng);
  Tensor mask({1, 4}, {1.0, 0.0, 1.0, 0.0});

  Tensor z_prime = Tensor::randn({1, 4, 3}, rng);
  Tensor y_prime = Tensor::randn({1, 4, 5}, rng);
  std::vector<double> z_perturbed = z_prime.values();
  std::vector<double> y_perturbed = y_prime.values();
  for (std::size_t t : {1, 3}) {
    for (std::size_t d = 0; d < 3; ++d) z_perturbed[(0 * 4 + t) * 3 + d] += 100.0;
    for (std::size_t d = 0; d < 5; ++d) y_perturbed[(0 * 4 + t) * 5 + d] -= 7.0;
  }

  LossInputs a{z_prime, y_prime, z_struc, y_regul, mask};
  LossInputs b{Tensor({1, 4, 3}, z_perturbed), Tensor({1, 4, 5}, y_perturbed), z_struc,
               y_regul, mask};
  LossConfig config;
  auto [total_a, report_a] = total_loss(a, config);
  auto [total_b, report_b] = total_loss(b, config);
  CHECK(total_a.item() == total_b.item());
  CHECK(report_a.masked_frame_count == 2);

  LossConfig all = config;
  all.positions = LossPositions::all_frames;
  auto [total_c, report_c] = total_loss(a, all);
  auto [total_d, report_d] = total_loss(b, all);
  CHECK(total_c.item() != total_d.item());
}

TEST_CASE("an empty mask selects nothing and flags it") {
  Rng rng(56);
  LossInputs inputs{Tensor::randn({1, 3, 4}, rng), Tensor::randn({1, 3, 2}, rng),
                    Tensor::randn({1, 3, 4}, rng), Tensor::randn({1, 3, 2}, rng),
                    Tensor::zeros({1, 3})};
  LossConfig config;
  auto [total, report] = total_loss(inputs, config);
  CHECK(total.item() == 0.0);
  CHECK(report.empty_selection);
  CHECK(report.masked_frame_count == 0);
  CHECK(report.l_struc.value() == 0.0);
  CHECK(report.l_regul.value() == 0.0);
}

TEST_CASE("each mode evaluates exactly its own terms") {
  Rng rng(57);
  LossInputs inputs{Tensor::randn({2, 3, 4}, rng), Tensor::randn({2, 3, 5}, rng),
                    Tensor::randn({2, 3, 4}, rng), Tensor::randn({2, 3, 5}, rng),
                    Tensor({2, 3}, {1, 0, 1, 0, 1, 1})};

  LossConfig config;
  config.mode = LossMode::data2vec_baseline;
  auto [base_total, base_report] = total_loss(inputs, config);
  CHECK(base_report.l_struc.has_value());
  CHECK_FALSE(base_report.l_regre.has_value());
  CHECK_FALSE(base_report.l_regul.has_value());
  CHECK(base_total.item() == base_report.l_struc.value());

  config.mode = LossMode::trinet;
  auto [tri_total, tri_report] = total_loss(inputs, config);
  CHECK(tri_report.l_struc.has_value());
  CHECK(tri_report.l_regul.has_value());
  CHECK_FALSE(tri_report.l_regre.has_value());
  CHECK(std::abs(tri_total.item() -
                 (tri_report.l_struc.value() + tri_report.l_regul.value())) < 1e-12);
  CHECK(tri_report.l_struc.value() == base_report.l_struc.value());

  config.mode = LossMode::trinet_ablated_regre;
  auto [abl_total, abl_report] = total_loss(inputs, config);
  CHECK(abl_report.l_regre.has_value());
  CHECK_FALSE(abl_report.l_regul.has_value());
  CHECK(std::abs(abl_total.item() -
                 (abl_report.l_struc.value() + abl_report.l_regre.value())) < 1e-12);
}

TEST_CASE("loss gradients agree with finite differences") {
  Rng rng(58);
  Tensor z_struc = Tensor::randn({1, 3, 4}, rng);
  Tensor y_regul = Tensor::randn({1, 3, 4}, rng);
  Tensor mask({1, 3}, {1.0, 0.0, 1.0});

  SUBCASE("structural term") {
    std::vector<Tensor> leaves{Tensor::randn({1, 3, 4}, rng, 1.0, true)};
    auto build = [&](const std::vector<Tensor>& l) {
      return loss_struc(l[0], z_struc, mask, LossPositions::masked_only);
    };
    CHECK(max_fd_relative_error(build, leaves).max_rel_err < 1e-4);
  }
  SUBCASE("pseudo-class regression term") {
    std::vector<Tensor> leaves{Tensor::randn({1, 3, 4}, rng, 1.0, true)};
    auto build = [&](const std::vector<Tensor>& l) {
      return loss_regre(l[0], y_regul, mask, LossPositions::all_frames);
    };
    CHECK(max_fd_relative_error(build, leaves).max_rel_err < 1e-4);
  }
  SUBCASE("anchoring term at unit temperature") {
    std::vector<Tensor> leaves{Tensor::randn({1, 3, 4}, rng, 1.0, true)};
    auto build = [&](const std::vector<Tensor>& l) {
      return loss_regul(l[0], y_regul, mask, LossPositions::masked_only, 1.0);
    };
    CHECK(max_fd_relative_error(build, leaves).max_rel_err < 1e-4);
  }
  SUBCASE("anchoring term at high temperature") {
    std::vector<Tensor> leaves{Tensor::randn({1, 3, 4}, rng, 1.0, true)};
    auto build = [&](const std::vector<Tensor>& l) {
      return loss_regul(l[0], y_regul, mask, LossPositions::all_frames, 4.0);
    };
    CHECK(max_fd_relative_error(build, leaves).max_rel_err < 1e-4);
  }
}

TEST_CASE("combined gradient is the sum of the component gradients") {
  Rng rng(59);
  Tensor z_struc = Tensor::randn({1, 3, 4}, rng);
  Tensor y_regul = Tensor::randn({1, 3, 4}, rng);
  Tensor mask({1, 3}, {1.0, 1.0, 0.0});
  Tensor z_prime = Tensor::randn({1, 3, 4}, rng, 1.0, true);
  Tensor y_prime = Tensor::randn({1, 3, 4}, rng, 1.0, true);

  LossInputs inputs{z_prime, y_prime, z_struc, y_regul, mask};
  LossConfig config;
  auto [total, report] = total_loss(inputs, config);
  backward(total);
  std::vector<double> z_total_grad = z_prime.grad();
  std::vector<double> y_total_grad = y_prime.grad();

  z_prime.zero_grad();
  y_prime.zero_grad();
  backward(loss_struc(z_prime, z_struc, mask, LossPositions::masked_only));
  std::vector<double> z_struc_grad = z_prime.grad();

  z_prime.zero_grad();
  y_prime.zero_grad();
  backward(loss_regul(y_prime, y_regul, mask, LossPositions::masked_only, 1.0));
  std::vector<double> y_regul_grad = y_prime.grad();

  for (std::size_t i = 0; i < z_total_grad.size(); ++i) {
    CHECK(std::abs(z_total_grad[i] - z_struc_grad[i]) < 1e-10);
  }
  for (std::size_t i = 0; i < y_total_grad.size(); ++i) {
    CHECK(std::abs(y_total_grad[i] - y_regul_grad[i]) < 1e-10);
  }
}

TEST_CASE("non-finite totals are rejected") {
  Tensor huge({1, 1, 2}, {1e200, -1e200});
  LossInputs inputs{huge, Tensor::zeros({1, 1, 2}), scale(huge, -1.0),
                    Tensor::zeros({1, 1, 2}), full_mask(1, 1)};
  LossConfig config;
  CHECK_THROWS_AS(total_loss(inputs, config), std::runtime_error);
}

TEST_SUITE_END();
