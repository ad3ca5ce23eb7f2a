#include "siriib/siriib_module.hpp"

#include "siriib/error.hpp"

#include <string>

namespace siriib {

void MultiScaleConfig::validate(int64_t native_resolution) const {
  require(!resolutions.empty(), ErrorCode::kConfig, "scales: empty resolution list");
  require(resolutions.front() == native_resolution, ErrorCode::kConfig,
          "scales: first resolution must equal the native input resolution (" +
              std::to_string(native_resolution) + ")");
  for (size_t i = 1; i < resolutions.size(); ++i) {
    require(resolutions[i] > 0 && resolutions[i] < resolutions[i - 1], ErrorCode::kConfig,
            "scales: resolutions must be positive and strictly decreasing");
  }
}

torch::Tensor resample(const torch::Tensor& x, int64_t height, int64_t width) {
  if (x.size(-2) == height && x.size(-1) == width) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

FeatureInjectionPlan FeatureInjectionPlan::shallowest(int n) {
  FeatureInjectionPlan plan;
  for (int i = 0; i < n; ++i) plan.entries.push_back({i, i});
  return plan;
}

void FeatureInjectionPlan::validate(int num_taps) const {
  require(!entries.empty(), ErrorCode::kConfig, "injection plan: no entries");
  require(static_cast<int>(entries.size()) <= kMaxProjections, ErrorCode::kUnsupported,
          "injection plan: at most " + std::to_string(kMaxProjections) +
              " projections are supported, got " + std::to_string(entries.size()));
  require(entries.front().tap == 0, ErrorCode::kConfig,
          "injection plan: the first tap must be the stem output (tap 0)");
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    require(e.tap >= 0 && e.tap < num_taps, ErrorCode::kConfig,
            "injection plan: tap " + std::to_string(e.tap) + " out of range");
    require(e.projection == static_cast<int>(i), ErrorCode::kConfig,
            "injection plan: projection indices must be 0..k-1 in order");
    if (i > 0) {
      require(e.tap > entries[i - 1].tap, ErrorCode::kConfig,
              "injection plan: taps must be strictly ordered by depth");
    }
  }
}

MultiScaleSrImpl::MultiScaleSrImpl(MultiScaleConfig config, int64_t channels,
                                   int64_t orthogonal_channels)
    : config_(std::move(config)) {
  config_.validate(config_.resolutions.front());
  for (size_t s = 0; s < config_.resolutions.size(); ++s) {
    SRBlockOptions opts;
    opts.channels = channels;
    opts.orthogonal_channels = orthogonal_channels;
    opts.resolution = config_.resolutions[s];
    blocks_.push_back(register_module("sr" + std::to_string(s), SRBlock(opts)));
  }
}

torch::Tensor MultiScaleSrImpl::forward(const torch::Tensor& x) {
  const int64_t native = config_.resolutions.front();
  require(x.dim() == 4 && x.size(2) == native && x.size(3) == native, ErrorCode::kInvalidShape,
          "MultiScaleSr: expected " + std::to_string(native) + "x" + std::to_string(native) +
              " input");
  torch::Tensor sum;
  for (size_t s = 0; s < blocks_.size(); ++s) {
    const int64_t r = config_.resolutions[s];
    auto y = torch::sigmoid(blocks_[s]->forward(resample(x, r, r)));
    y = resample(y, native, native);
    sum = sum.defined() ? sum + y : y;
  }
  return sum / static_cast<double>(blocks_.size());
}

torch::Tensor MultiScaleSrImpl::orthogonality_penalty() const {
  torch::Tensor total;
  for (const auto& b : blocks_) {
    auto p = b->orthogonality_penalty();
    total = total.defined() ? total + p : p;
  }
  return total;
}

int64_t MultiScaleSrImpl::multiply_adds() const {
  int64_t total = 0;
  for (const auto& b : blocks_) total += b->multiply_adds();
  return total;
}

SiriibModuleImpl::SiriibModuleImpl(const SiriibOptions& options) : options_(options) {
  require(!options.projection_targets.empty(), ErrorCode::kConfig,
          "SiRIIB: at least one projection target is required");
  require(static_cast<int>(options.projection_targets.size()) <= kMaxProjections,
          ErrorCode::kUnsupported,
          "SiRIIB: at most " + std::to_string(kMaxProjections) + " projections are supported, got " +
              std::to_string(options.projection_targets.size()));
  require(!options.extractor_channels.empty(), ErrorCode::kConfig,
          "SiRIIB: extractor needs at least one layer");

  front_end = register_module("front_end", MultiScaleSr(options.scales));

  extractor = register_module("extractor", torch::nn::Sequential());
  int64_t in = 3;
  for (int64_t out : options.extractor_channels) {
    extractor->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(1).padding(1)));
    extractor->push_back(torch::nn::BatchNorm2d(out));
    extractor->push_back(torch::nn::ReLU());
    in = out;
  }

  const int64_t native = options.scales.resolutions.front();
  for (size_t i = 0; i < options.projection_targets.size(); ++i) {
    const auto& target = options.projection_targets[i];
    require(target.height <= native && target.width <= native, ErrorCode::kConfig,
            "SiRIIB: projection targets cannot exceed the input resolution");
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, target.channels, 3).stride(1).padding(1));
    if (options.zero_init_projections) {
      torch::NoGradGuard no_grad;
      conv->weight.zero_();
      conv->bias.zero_();
    }
    projections_.push_back(register_module("p" + std::to_string(i + 1), conv));
  }
}

torch::Tensor SiriibModuleImpl::extract_features(const torch::Tensor& x_avg) {
  const int64_t native = options_.scales.resolutions.front();
  require(x_avg.dim() == 4 && x_avg.size(1) == 3 && x_avg.size(2) == native &&
              x_avg.size(3) == native,
          ErrorCode::kInvalidShape, "SiRIIB: x_avg must be [B, 3, native, native]");
  return extractor->forward(x_avg);
}

torch::Tensor SiriibModuleImpl::project_feature(const torch::Tensor& deep, int index) {
  require(index >= 0 && index < num_projections(), ErrorCode::kInvalidArgument,
          "SiRIIB: projection index " + std::to_string(index) + " out of range");
  const auto& target = options_.projection_targets[static_cast<size_t>(index)];
  return projections_[static_cast<size_t>(index)]->forward(
      resample(deep, target.height, target.width));
}

SiriibOutput SiriibModuleImpl::forward(const torch::Tensor& x) {
  SiriibOutput out;
  out.x_avg = compute_x_avg(x);
  auto deep = extract_features(out.x_avg);
  for (int i = 0; i < num_projections(); ++i) out.features.push_back(project_feature(deep, i));
  return out;
}

int64_t SiriibModuleImpl::multiply_adds() const {
  const int64_t native = options_.scales.resolutions.front();
  int64_t total = front_end->multiply_adds();
  int64_t in = 3;
  for (int64_t out : options_.extractor_channels) {
    total += in * out * 9 * native * native;
    in = out;
  }
  for (const auto& t : options_.projection_targets) total += in * t.channels * 9 * t.height * t.width;
  return total;
}

torch::Tensor inject_feature(const torch::Tensor& feature, const torch::Tensor& f) {
  require(feature.sizes() == f.sizes(), ErrorCode::kInvalidShape,
          "inject: feature shape does not match projection output");
  return feature + f;
}

std::vector<torch::Tensor> inject(const std::vector<torch::Tensor>& taps,
                                  const FeatureInjectionPlan& plan,
                                  const std::vector<torch::Tensor>& f) {
  plan.validate(static_cast<int>(taps.size()));
  require(f.size() == plan.entries.size(), ErrorCode::kInvalidShape,
          "inject: number of projected features does not match the plan");
  auto out = taps;
  for (const auto& e : plan.entries) {
    out[static_cast<size_t>(e.tap)] =
        inject_feature(taps[static_cast<size_t>(e.tap)], f[static_cast<size_t>(e.projection)]);
  }
  return out;
}

}  // namespace siriib
