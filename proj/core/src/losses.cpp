#include "siriib/losses.hpp"

#include "siriib/error.hpp"

#include <cmath>
#include <string>

namespace siriib {

void LossWeights::validate() const {
  require(std::isfinite(lambda1) && lambda1 >= 0.0 && std::isfinite(lambda2) && lambda2 >= 0.0,
          ErrorCode::kInvalidArgument, "loss weights must be finite and non-negative");
}

namespace {

// Splits (near-)repeated singular values, where the SVD gradient is undefined.
torch::Tensor jitter_degenerate(const torch::Tensor& x) {
  torch::Tensor needs_jitter;
  {
    torch::NoGradGuard no_grad;
    auto s = torch::linalg_svdvals(x.detach());
    auto gaps = s.narrow(-1, 0, s.size(-1) - 1) - s.narrow(-1, 1, s.size(-1) - 1);
    needs_jitter = std::get<0>(gaps.min(-1)) < kSvdGapThreshold;
  }
  if (!needs_jitter.any().item<bool>()) return x;
  const int64_t n = x.size(-1);
  auto ramp = torch::arange(n, 0, -1, x.options()) / static_cast<double>(n);
  auto jitter = torch::diag_embed(ramp * kSvdJitter);
  return x + jitter * needs_jitter.to(x.scalar_type()).unsqueeze(-1).unsqueeze(-1);
}

// Singular values and polar factor U·Vt of a batch of square matrices. The
// backward pass uses the closed-form polar derivative, whose 1/(s_i + s_j)
// factors stay bounded on clustered spectra where differentiating U and V
// separately (1/(s_i^2 - s_j^2)) blows up.
struct SvdPolar : torch::autograd::Function<SvdPolar> {
  static torch::autograd::variable_list forward(torch::autograd::AutogradContext* ctx,
                                                const torch::Tensor& a) {
    auto [u, s, vt] = torch::linalg_svd(a, /*full_matrices=*/false);
    ctx->save_for_backward({u, s, vt});
    return {s, torch::matmul(u, vt)};
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto& u = saved[0];
    const auto& s = saved[1];
    const auto& vt = saved[2];
    auto inner = torch::zeros_like(u);
    if (grads[0].defined()) inner = inner + torch::diag_embed(grads[0]);
    if (grads[1].defined()) {
      auto m = torch::matmul(torch::matmul(u.transpose(-2, -1), grads[1]), vt.transpose(-2, -1));
      auto pair_sums = (s.unsqueeze(-1) + s.unsqueeze(-2)).clamp_min(kPolarFloor);
      inner = inner + (m - m.transpose(-2, -1)) / pair_sums;
    }
    return {torch::matmul(torch::matmul(u, inner), vt)};
  }
};

}  // namespace

torch::Tensor loss_svd(const torch::Tensor& x_avg, const torch::Tensor& x_clean) {
  require(x_avg.sizes() == x_clean.sizes(), ErrorCode::kInvalidShape,
          "loss_svd: x_avg and x_clean shapes differ");
  require(x_avg.dim() == 4 && x_avg.size(2) == x_avg.size(3), ErrorCode::kInvalidShape,
          "loss_svd: expected [B, C, n, n]");
  require(torch::isfinite(x_avg).all().item<bool>() &&
              torch::isfinite(x_clean).all().item<bool>(),
          ErrorCode::kNonFinite, "loss_svd: non-finite input");

  auto a = x_avg.to(torch::kFloat64);
  auto c = x_clean.detach().to(torch::kFloat64);

  const auto factors = SvdPolar::apply(jitter_degenerate(a));
  const auto& sa = factors[0];
  const auto& polar_a = factors[1];
  torch::Tensor sc, polar_c;
  {
    torch::NoGradGuard no_grad;
    auto [uc, s, vtc] = torch::linalg_svd(c, /*full_matrices=*/false);
    sc = s;
    polar_c = torch::matmul(uc, vtc);
  }

  auto sigma_term = torch::linalg_vector_norm(sa - sc, 2, {-1});
  auto vector_term =
      torch::linalg_matrix_norm(polar_a - polar_c, "fro", {-2, -1});
  auto pixel_term = torch::linalg_matrix_norm(a - c, "fro", {-2, -1});
  auto per_sample = (sigma_term + vector_term + pixel_term).sum(-1);
  return per_sample.mean().to(x_avg.scalar_type());
}

torch::Tensor loss_info(const std::vector<torch::Tensor>& f_adv,
                        const std::vector<torch::Tensor>& f_clean) {
  require(f_adv.size() == f_clean.size(), ErrorCode::kInvalidShape,
          "loss_info: feature lists have different lengths (" + std::to_string(f_adv.size()) +
              " vs " + std::to_string(f_clean.size()) + ")");
  require(!f_adv.empty(), ErrorCode::kInvalidShape, "loss_info: empty feature lists");
  torch::Tensor per_sample;
  for (size_t i = 0; i < f_adv.size(); ++i) {
    require(f_adv[i].sizes() == f_clean[i].sizes(), ErrorCode::kInvalidShape,
            "loss_info: feature " + std::to_string(i) + " shapes differ");
    auto diff = (f_adv[i] - f_clean[i].detach()).flatten(1);
    auto norms = torch::linalg_vector_norm(diff, 2, {1});
    per_sample = per_sample.defined() ? per_sample + norms : norms;
  }
  return per_sample.mean();
}

torch::Tensor total_loss(const torch::Tensor& loss_ori, const torch::Tensor& loss_svd,
                         const torch::Tensor& loss_info, const torch::Tensor& r_tau,
                         const LossWeights& weights) {
  weights.validate();
  return loss_ori + weights.lambda1 * (loss_svd + loss_info) + weights.lambda2 * r_tau;
}

}  // namespace siriib
