#pragma once

#include <torch/torch.h>

#include <vector>

namespace siriib {

struct LossWeights {
  double lambda1 = 20.0;  // weight of L_svd + L_info
  double lambda2 = 1e-4;  // weight of R_tau

  void validate() const;
};

/// Spectrum gap below which a diagonal jitter is added before the
/// differentiable SVD in loss_svd.
inline constexpr double kSvdGapThreshold = 1e-6;
inline constexpr double kSvdJitter = 1e-6;
/// Lower bound on s_i + s_j in the polar-factor gradient.
inline constexpr double kPolarFloor = 1e-6;

/// Per sample and channel,
///   ||sigma_avg - sigma_clean||_2 + ||U_avg Vt_avg - U_clean Vt_clean||_F
///     + ||x_avg - x_clean||_F,
/// summed over channels and averaged over the batch. Computed in float64;
/// gradients flow into x_avg only.
torch::Tensor loss_svd(const torch::Tensor& x_avg, const torch::Tensor& x_clean);

/// sum_i ||f_i - f_i_clean||_F per sample, averaged over the batch. The clean
/// features are treated as constants.
torch::Tensor loss_info(const std::vector<torch::Tensor>& f_adv,
                        const std::vector<torch::Tensor>& f_clean);

/// L_ori + lambda1 (L_svd + L_info) + lambda2 R_tau.
torch::Tensor total_loss(const torch::Tensor& loss_ori, const torch::Tensor& loss_svd,
                         const torch::Tensor& loss_info, const torch::Tensor& r_tau,
                         const LossWeights& weights);

}  // namespace siriib
