#include "siriib/sr_block.hpp"

#include "siriib/error.hpp"

#include <string>

namespace siriib {

torch::Tensor orthogonality_penalty(const torch::Tensor& w) {
  require(w.dim() == 2, ErrorCode::kInvalidShape, "orthogonality_penalty: expected a matrix");
  auto gram = torch::matmul(w.transpose(0, 1), w);
  auto eye = torch::eye(w.size(1), w.options());
  return (gram - eye).square().sum();
}

OrthogonalTransformImpl::OrthogonalTransformImpl(int64_t in_channels, int64_t out_channels) {
  require(out_channels >= in_channels, ErrorCode::kInvalidArgument,
          "OrthogonalTransform: needs at least as many outputs as inputs for orthonormal columns");
  // Orthonormal columns from the reduced QR of a Gaussian matrix.
  auto q = std::get<0>(torch::linalg_qr(torch::randn({out_channels, in_channels}), "reduced"));
  weight_ = register_parameter("weight", q.contiguous());
}

torch::Tensor OrthogonalTransformImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == in_channels(), ErrorCode::kInvalidShape,
          "OrthogonalTransform: expected [B, " + std::to_string(in_channels()) + ", H, W] input");
  return torch::conv2d(x, weight_.view({out_channels(), in_channels(), 1, 1}));
}

torch::Tensor OrthogonalTransformImpl::penalty() const { return orthogonality_penalty(weight_); }

FourierModulatorImpl::FourierModulatorImpl(int64_t channels, int64_t resolution)
    : resolution_(resolution) {
  require(resolution > 0 && channels > 0, ErrorCode::kInvalidArgument,
          "FourierModulator: channels and resolution must be positive");
  const int64_t half = resolution / 2 + 1;
  scale_real_ = register_parameter("scale_real", torch::ones({channels, resolution, half}));
  scale_imag_ = register_parameter("scale_imag", torch::zeros({channels, resolution, half}));
}

torch::Tensor FourierModulatorImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4, ErrorCode::kInvalidShape, "FourierModulator: expected [B, C, n, n] input");
  require(x.size(2) == x.size(3), ErrorCode::kInvalidShape,
          "FourierModulator: spatial dimensions must be square");
  require(x.size(2) == resolution_ && x.size(1) == scale_real_.size(0), ErrorCode::kInvalidShape,
          "FourierModulator: built for " + std::to_string(scale_real_.size(0)) + " channels at " +
              std::to_string(resolution_) + "x" + std::to_string(resolution_));
  auto spectrum = torch::fft::rfft2(x);
  auto scale = torch::complex(scale_real_, scale_imag_);
  return torch::fft::irfft2(spectrum * scale, std::vector<int64_t>{resolution_, resolution_});
}

SRBlockImpl::SRBlockImpl(const SRBlockOptions& options) : options_(options) {
  orthogonal = register_module(
      "orthogonal", OrthogonalTransform(options.channels, options.orthogonal_channels));
  fourier = register_module("fourier", FourierModulator(options.channels, options.resolution));
  fusion = register_module(
      "fusion", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                      options.orthogonal_channels + options.channels,
                                      options.channels, 1)
                                      .stride(1)));
  norm = register_module("norm", torch::nn::BatchNorm2d(options.channels));
}

torch::Tensor SRBlockImpl::forward(const torch::Tensor& x) {
  auto branches = torch::cat({orthogonal->forward(x), fourier->forward(x)}, 1);
  return norm->forward(fusion->forward(branches));
}

int64_t SRBlockImpl::multiply_adds() const {
  const int64_t pixels = options_.resolution * options_.resolution;
  const int64_t half_spectrum = options_.resolution * (options_.resolution / 2 + 1);
  const int64_t orth = options_.orthogonal_channels * options_.channels * pixels;
  const int64_t fuse = (options_.orthogonal_channels + options_.channels) * options_.channels * pixels;
  // one complex multiply = 4 real multiply-adds
  const int64_t modulate = 4 * options_.channels * half_spectrum;
  return orth + fuse + modulate;
}

}  // namespace siriib
