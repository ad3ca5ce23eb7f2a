#pragma once

#include <torch/torch.h>

#include <array>
#include <map>
#include <vector>

namespace siriib {

/// Channel-first feature shape of one image.
struct FeatureShape {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;

  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

// CIFAR-10 training-set statistics.
inline constexpr std::array<double, 3> kCifarMean{0.4914, 0.4822, 0.4465};
inline constexpr std::array<double, 3> kCifarStd{0.2471, 0.2435, 0.2616};

struct BackboneOptions {
  int64_t num_classes = 10;
  int64_t base_width = 64;
  int64_t input_resolution = 32;
  std::array<double, 3> mean = kCifarMean;
  std::array<double, 3> stddev = kCifarStd;
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in_planes, int64_t planes, int64_t stride);

  torch::Tensor forward(const torch::Tensor& x);

  int64_t multiply_adds(int64_t in_resolution) const;

 private:
  int64_t in_planes_;
  int64_t planes_;
  int64_t stride_;
  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::BatchNorm2d bn2{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Per-tap additive terms, keyed by tap index.
using TapAdditions = std::map<int, torch::Tensor>;

struct BackboneOutput {
  torch::Tensor logits;
  std::vector<torch::Tensor> taps;  // depth order, after any injection
};

/// CIFAR-style ResNet-18: 3x3 stem without max-pool, four stages of two basic
/// blocks, global average pooling and a linear head. Inputs are raw [0, 1]
/// pixels; per-channel normalization is the first operation.
///
/// Taps: 0 = stem output (conv, BN, ReLU), 1..4 = outputs of stages 1..4.
class ResidualBackboneImpl : public torch::nn::Module {
 public:
  explicit ResidualBackboneImpl(const BackboneOptions& options = {});

  BackboneOutput forward_with_taps(const torch::Tensor& x, const TapAdditions& additions = {});

  torch::Tensor forward(const torch::Tensor& x) { return forward_with_taps(x).logits; }

  static constexpr int kNumTaps = 5;

  /// Shape of tap `index` for the configured input resolution.
  FeatureShape tap_shape(int index) const;

  int64_t multiply_adds() const;

  const BackboneOptions& options() const { return options_; }

 private:
  BackboneOptions options_;
  torch::Tensor mean_;
  torch::Tensor stddev_;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  std::array<torch::nn::Sequential, 4> stages_;
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ResidualBackbone);

}  // namespace siriib
