#pragma once

// Multiscale singular regularization with additive skip connections into a
// residual backbone.
//
//   x_avg = 1/S * sum_s up(sigmoid(SR_s(down_s(x))))
//   f_i   = p_i(c(x_avg))
//
// and f_i is added to backbone tap plan[i].

#include "siriib/backbone.hpp"
#include "siriib/sr_block.hpp"

#include <torch/torch.h>

#include <vector>

namespace siriib {

struct MultiScaleConfig {
  /// Side lengths, native resolution first, strictly decreasing.
  std::vector<int64_t> resolutions{32, 24, 16, 8};

  void validate(int64_t native_resolution) const;
};

/// Bilinear resampling with corner alignment disabled.
torch::Tensor resample(const torch::Tensor& x, int64_t height, int64_t width);

/// Maximum number of projections; deeper configurations do not converge.
inline constexpr int kMaxProjections = 3;

struct InjectionEntry {
  int tap = 0;
  int projection = 0;

  friend bool operator==(const InjectionEntry&, const InjectionEntry&) = default;
};

/// (tap, projection) pairs ordered by tap depth. Tap 0 is the stem output.
struct FeatureInjectionPlan {
  std::vector<InjectionEntry> entries;

  /// Taps 0..n-1 wired to projections 0..n-1.
  static FeatureInjectionPlan shallowest(int n);

  void validate(int num_taps) const;

  friend bool operator==(const FeatureInjectionPlan&, const FeatureInjectionPlan&) = default;
};

/// The SR front end alone: one independent SR block per scale, Sigmoid,
/// upsampling and averaging.
class MultiScaleSrImpl : public torch::nn::Module {
 public:
  explicit MultiScaleSrImpl(MultiScaleConfig config, int64_t channels = 3,
                            int64_t orthogonal_channels = 12);

  /// x_avg; every entry lies strictly inside (0, 1).
  torch::Tensor forward(const torch::Tensor& x);

  /// Sum of R_tau over all scales.
  torch::Tensor orthogonality_penalty() const;

  int64_t multiply_adds() const;

  const MultiScaleConfig& config() const { return config_; }
  const std::vector<SRBlock>& blocks() const { return blocks_; }

 private:
  MultiScaleConfig config_;
  std::vector<SRBlock> blocks_;
};
TORCH_MODULE(MultiScaleSr);

struct SiriibOptions {
  MultiScaleConfig scales;
  std::vector<int64_t> extractor_channels{16, 32, 64};
  /// Shape each projection must produce, in projection order.
  std::vector<FeatureShape> projection_targets;
  /// Zero-initialize the projections so the host model starts unchanged.
  bool zero_init_projections = true;
};

struct SiriibOutput {
  torch::Tensor x_avg;
  std::vector<torch::Tensor> features;  // f_1..f_k
};

class SiriibModuleImpl : public torch::nn::Module {
 public:
  explicit SiriibModuleImpl(const SiriibOptions& options);

  SiriibOutput forward(const torch::Tensor& x);

  torch::Tensor compute_x_avg(const torch::Tensor& x) { return front_end->forward(x); }

  /// c(x_avg): three padded 3x3 convolutions, each with BN and ReLU.
  torch::Tensor extract_features(const torch::Tensor& x_avg);

  /// p_i(deep), zero-based index; resamples first when the target is smaller.
  torch::Tensor project_feature(const torch::Tensor& deep, int index);

  torch::Tensor orthogonality_penalty() const { return front_end->orthogonality_penalty(); }

  int num_projections() const { return static_cast<int>(projections_.size()); }

  int64_t multiply_adds() const;

  const SiriibOptions& options() const { return options_; }

  MultiScaleSr front_end{nullptr};
  torch::nn::Sequential extractor{nullptr};

 private:
  SiriibOptions options_;
  std::vector<torch::nn::Conv2d> projections_;
};
TORCH_MODULE(SiriibModule);

/// Adds f to a backbone feature; shapes must match exactly.
torch::Tensor inject_feature(const torch::Tensor& feature, const torch::Tensor& f);

/// Elementwise addition of f[entry.projection] at every planned tap; other
/// taps pass through untouched.
std::vector<torch::Tensor> inject(const std::vector<torch::Tensor>& taps,
                                  const FeatureInjectionPlan& plan,
                                  const std::vector<torch::Tensor>& f);

}  // namespace siriib
