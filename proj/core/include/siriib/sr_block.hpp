#pragma once

// Singular Regularization (SR) block.
//
// Two parallel branches over a 3-channel image:
//   * an orthogonality-constrained 1x1 channel transform (acts on singular
//     vectors, leaves singular values alone when W^T W = I), and
//   * a per-frequency complex scaling of the 2-D Fourier coefficients (acts on
//     the spectrum),
// fused by a 1x1 convolution and batch normalization.

#include <torch/torch.h>

namespace siriib {

/// k x c matrix applied as a bias-free 1x1 convolution across channels.
class OrthogonalTransformImpl : public torch::nn::Module {
 public:
  OrthogonalTransformImpl(int64_t in_channels, int64_t out_channels);

  torch::Tensor forward(const torch::Tensor& x);

  /// ||W^T W - I||_F^2.
  torch::Tensor penalty() const;

  /// The [k, c] weight matrix (a view; writes go through).
  torch::Tensor matrix() const { return weight_; }

  int64_t in_channels() const { return weight_.size(1); }
  int64_t out_channels() const { return weight_.size(0); }

 private:
  torch::Tensor weight_;
};
TORCH_MODULE(OrthogonalTransform);

/// Learnable complex scale on the half spectrum (rfft2 layout) of each
/// channel. Conjugate frequency pairs share one weight, so the inverse
/// transform is exactly real. Initialized to the identity.
class FourierModulatorImpl : public torch::nn::Module {
 public:
  FourierModulatorImpl(int64_t channels, int64_t resolution);

  torch::Tensor forward(const torch::Tensor& x);

  /// Real and imaginary parts, each [C, n, n/2 + 1].
  torch::Tensor scale_real() const { return scale_real_; }
  torch::Tensor scale_imag() const { return scale_imag_; }

  int64_t resolution() const { return resolution_; }

 private:
  int64_t resolution_;
  torch::Tensor scale_real_;
  torch::Tensor scale_imag_;
};
TORCH_MODULE(FourierModulator);

struct SRBlockOptions {
  int64_t channels = 3;
  int64_t orthogonal_channels = 12;
  int64_t resolution = 32;
};

class SRBlockImpl : public torch::nn::Module {
 public:
  explicit SRBlockImpl(const SRBlockOptions& options);

  /// concat(orthogonal(x), fourier(x)) -> 1x1 fusion conv -> batch norm.
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor orthogonality_penalty() const { return orthogonal->penalty(); }

  /// Multiply-adds of the convolutions and the spectral scaling for one image.
  int64_t multiply_adds() const;

  const SRBlockOptions& options() const { return options_; }

  OrthogonalTransform orthogonal{nullptr};
  FourierModulator fourier{nullptr};
  torch::nn::Conv2d fusion{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};

 private:
  SRBlockOptions options_;
};
TORCH_MODULE(SRBlock);

/// Free-function form of the orthogonality penalty for an arbitrary [k, c]
/// matrix.
torch::Tensor orthogonality_penalty(const torch::Tensor& w);

}  // namespace siriib
