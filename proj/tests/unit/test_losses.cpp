#include "siriib/error.hpp"
#include "siriib/losses.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace siriib {
namespace {

using siriib::testing::finite_difference_gradient;
using siriib::testing::relative_error;

TEST(LossSvd, ZeroOnIdenticalInputs) {
  torch::manual_seed(1);
  auto x = torch::rand({3, 3, 8, 8});
  EXPECT_LE(loss_svd(x, x).item<double>(), 1e-6);
  auto d = torch::rand({2, 3, 6, 6}, torch::kFloat64);
  EXPECT_LE(loss_svd(d, d).item<double>(), 1e-10);
}

TEST(LossSvd, DoubledInputMatchesOracle) {
  torch::manual_seed(2);
  auto clean = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  // Oracle: sigma norm from the Gram eigenvalues plus the pixel Frobenius norm.
  double expected = 0.0;
  for (int64_t c = 0; c < 3; ++c) {
    auto m = siriib::testing::to_eigen(clean[0][c]);
    double s2 = 0.0;
    for (double s : siriib::testing::singular_values_via_gram(m)) s2 += s * s;
    expected += std::sqrt(s2) + m.norm();
  }
  EXPECT_NEAR(loss_svd(2.0 * clean, clean).item<double>(), expected, 1e-6 * expected);
}

TEST(LossSvd, NonNegativeAndSignFlipInvariant) {
  torch::manual_seed(3);
  auto a = torch::rand({2, 3, 6, 6}, torch::kFloat64);
  auto b = torch::rand({2, 3, 6, 6}, torch::kFloat64);
  const double ab = loss_svd(a, b).item<double>();
  EXPECT_GT(ab, 0.0);
  // Rebuilding b from sign-flipped factor pairs changes nothing.
  auto [u, s, vt] = torch::linalg_svd(b, false);
  auto flip = torch::ones({6}, torch::kFloat64);
  flip[0] = -1.0;
  flip[3] = -1.0;
  auto b2 = torch::matmul(u * flip * s.unsqueeze(-2), vt * flip.unsqueeze(-1));
  EXPECT_NEAR(loss_svd(a, b2).item<double>(), ab, 1e-9);
}

TEST(LossSvd, BatchMeanReduction) {
  torch::manual_seed(4);
  auto a = torch::rand({2, 3, 6, 6}, torch::kFloat64);
  auto b = torch::rand({2, 3, 6, 6}, torch::kFloat64);
  const double l0 = loss_svd(a.slice(0, 0, 1), b.slice(0, 0, 1)).item<double>();
  const double l1 = loss_svd(a.slice(0, 1, 2), b.slice(0, 1, 2)).item<double>();
  EXPECT_NEAR(loss_svd(a, b).item<double>(), 0.5 * (l0 + l1), 1e-12);
}

TEST(LossSvd, GradientMatchesFiniteDifferences) {
  torch::manual_seed(5);
  auto clean = torch::rand({1, 3, 6, 6}, torch::kFloat64);
  auto x = torch::rand({1, 3, 6, 6}, torch::kFloat64);
  auto gaps = torch::linalg_svdvals(x);
  ASSERT_GT((gaps.narrow(-1, 0, 5) - gaps.narrow(-1, 1, 5)).min().item<double>(), 1e-3);
  auto v = x.clone().requires_grad_(true);
  loss_svd(v, clean).backward();
  auto fd = finite_difference_gradient(
      [&](const torch::Tensor& t) { return loss_svd(t, clean).item<double>(); }, x);
  EXPECT_LE(relative_error(v.grad(), fd), 1e-3);
}

TEST(LossSvd, CleanBranchGetsNoGradient) {
  auto a = torch::rand({1, 3, 6, 6}, torch::kFloat64).requires_grad_(true);
  auto c = torch::rand({1, 3, 6, 6}, torch::kFloat64).requires_grad_(true);
  loss_svd(a, c).backward();
  EXPECT_TRUE(a.grad().defined());
  EXPECT_FALSE(c.grad().defined());
}

TEST(LossSvd, DegenerateSpectrumStaysFinite) {
  auto eye = torch::eye(6, torch::kFloat64).expand({1, 3, 6, 6}).clone().requires_grad_(true);
  auto clean = torch::rand({1, 3, 6, 6}, torch::kFloat64);
  auto l = loss_svd(eye, clean);
  l.backward();
  EXPECT_TRUE(std::isfinite(l.item<double>()));
  EXPECT_TRUE(torch::isfinite(eye.grad()).all().item<bool>());
}

TEST(LossSvd, Errors) {
  EXPECT_THROW(loss_svd(torch::rand({1, 3, 6, 6}), torch::rand({1, 3, 5, 5})), Error);
  auto bad = torch::rand({1, 3, 6, 6});
  bad[0][0][0][0] = std::nanf("");
  try {
    loss_svd(bad, torch::rand({1, 3, 6, 6}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(LossInfo, ClosedForms) {
  auto f = torch::rand({1, 4, 5, 5}, torch::kFloat64);
  EXPECT_EQ(loss_info({f}, {f}).item<double>(), 0.0);
  const double c = 0.3;
  const double n = 100.0;
  EXPECT_NEAR(loss_info({f + c}, {f}).item<double>(), std::sqrt(n * c * c), 1e-12);
  auto g = torch::rand({1, 2, 3, 3}, torch::kFloat64);
  EXPECT_NEAR(loss_info({f + c, g - 1.0}, {f, g}).item<double>(), std::sqrt(n * c * c) + std::sqrt(18.0),
              1e-12);
}

TEST(LossInfo, GradientMatchesFiniteDifferences) {
  torch::manual_seed(6);
  auto f1 = torch::rand({2, 3, 4, 4}, torch::kFloat64);
  auto f2 = torch::rand({2, 5, 2, 2}, torch::kFloat64);
  auto c1 = torch::rand({2, 3, 4, 4}, torch::kFloat64);
  auto c2 = torch::rand({2, 5, 2, 2}, torch::kFloat64);
  auto v = f1.clone().requires_grad_(true);
  loss_info({v, f2}, {c1, c2}).backward();
  auto fd = finite_difference_gradient(
      [&](const torch::Tensor& t) { return loss_info({t, f2}, {c1, c2}).item<double>(); }, f1);
  EXPECT_LE(relative_error(v.grad(), fd), 1e-3);
}

TEST(LossInfo, ListMismatchThrows) {
  auto f = torch::rand({1, 2, 2, 2});
  EXPECT_THROW(loss_info({f, f}, {f}), Error);
  EXPECT_THROW(loss_info({f}, {torch::rand({1, 3, 2, 2})}), Error);
}

TEST(TotalLoss, Arithmetic) {
  auto s = [](double v) { return torch::tensor(v, torch::kFloat64); };
  EXPECT_NEAR(total_loss(s(1.0), s(0.5), s(0.25), s(8.0), LossWeights{}).item<double>(), 16.0008,
              1e-12);
  EXPECT_EQ(total_loss(s(1.5), s(0.5), s(0.25), s(8.0), LossWeights{0.0, 0.0}).item<double>(), 1.5);
  LossWeights defaults;
  EXPECT_EQ(defaults.lambda1, 20.0);
  EXPECT_EQ(defaults.lambda2, 1e-4);
  EXPECT_THROW((LossWeights{-1.0, 0.0}.validate()), Error);
  EXPECT_THROW((LossWeights{0.0, std::nan("")}.validate()), Error);
}

}  // namespace
}  // namespace siriib
