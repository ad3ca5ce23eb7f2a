#pragma once

// Per-channel singular value analysis of images.
//
// Images are tensors of shape [C, n, n] (or, where noted, any [..., n, n]
// stack of square matrices). All factorizations run in float64 regardless of
// the input precision.

#include <torch/torch.h>

#include <vector>

namespace siriib::spectral {

/// SVD of one square channel: channel = u * diag(sigma) * vt.
struct ChannelFactors {
  torch::Tensor u;      // [n, n], orthogonal
  torch::Tensor sigma;  // [n], non-negative, non-increasing
  torch::Tensor vt;     // [n, n], orthogonal (rows are right singular vectors)
};

struct SvdFactors {
  std::vector<ChannelFactors> channels;
};

enum class ClipMode { kRaw, kUnitInterval };

/// Decomposes every channel of a [C, n, n] image. Throws kInvalidShape for
/// non-square channels and kNonFinite for NaN/Inf input.
SvdFactors decompose(const torch::Tensor& image);

/// Inverse of decompose. Returns a float64 [C, n, n] image.
torch::Tensor reconstruct(const SvdFactors& factors, ClipMode clip = ClipMode::kRaw);

/// U_adv * diag(sigma_clean) * Vt_adv for every trailing square matrix.
/// Accepts [..., n, n]; both arguments must have identical shapes. The result
/// has the dtype of `adv`.
torch::Tensor swap_singular_values(const torch::Tensor& adv, const torch::Tensor& clean,
                                   ClipMode clip = ClipMode::kRaw);

/// (a - b) rescaled so its minimum maps to 0 and maximum to 1. A constant
/// difference maps to 0.5 everywhere.
torch::Tensor difference_map(const torch::Tensor& a, const torch::Tensor& b);

/// Relative energy mismatch |sum sigma^2 - (1/nm) sum |G|^2| / sum sigma^2 per
/// channel, with G the unnormalized forward 2-D DFT. All-zero channels give 0.
std::vector<double> parseval_residual(const torch::Tensor& image);

}  // namespace siriib::spectral
