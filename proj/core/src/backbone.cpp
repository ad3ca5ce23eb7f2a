#include "siriib/backbone.hpp"

#include "siriib/error.hpp"
#include "siriib/siriib_module.hpp"

#include <string>

namespace siriib {
namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

int64_t conv_macs(int64_t in, int64_t out, int64_t kernel, int64_t out_resolution) {
  return in * out * kernel * kernel * out_resolution * out_resolution;
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int64_t in_planes, int64_t planes, int64_t stride)
    : in_planes_(in_planes), planes_(planes), stride_(stride) {
  conv1 = register_module("conv1", conv3x3(in_planes, planes, stride));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(planes));
  conv2 = register_module("conv2", conv3x3(planes, planes, 1));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(planes));
  shortcut = register_module("shortcut", torch::nn::Sequential());
  if (stride != 1 || in_planes != planes) {
    shortcut->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in_planes, planes, 1).stride(stride).bias(false)));
    shortcut->push_back(torch::nn::BatchNorm2d(planes));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = bn2->forward(conv2->forward(out));
  out = out + (shortcut->is_empty() ? x : shortcut->forward(x));
  return torch::relu(out);
}

int64_t BasicBlockImpl::multiply_adds(int64_t in_resolution) const {
  const int64_t out_res = in_resolution / stride_;
  int64_t total = conv_macs(in_planes_, planes_, 3, out_res) + conv_macs(planes_, planes_, 3, out_res);
  if (!shortcut->is_empty()) total += conv_macs(in_planes_, planes_, 1, out_res);
  return total;
}

ResidualBackboneImpl::ResidualBackboneImpl(const BackboneOptions& options) : options_(options) {
  require(options.num_classes > 1 && options.base_width > 0, ErrorCode::kInvalidArgument,
          "ResidualBackbone: need >= 2 classes and a positive width");
  require(options.input_resolution % 8 == 0, ErrorCode::kInvalidArgument,
          "ResidualBackbone: input resolution must be divisible by 8");
  mean_ = register_buffer("input_mean",
                          torch::tensor(std::vector<double>(options.mean.begin(), options.mean.end()),
                                        torch::kFloat32)
                              .view({1, 3, 1, 1}));
  stddev_ = register_buffer(
      "input_std", torch::tensor(std::vector<double>(options.stddev.begin(), options.stddev.end()),
                                 torch::kFloat32)
                       .view({1, 3, 1, 1}));

  const int64_t w = options.base_width;
  stem = register_module("stem", conv3x3(3, w, 1));
  stem_bn = register_module("stem_bn", torch::nn::BatchNorm2d(w));

  int64_t in_planes = w;
  for (int s = 0; s < 4; ++s) {
    const int64_t planes = w << s;
    const int64_t stride = s == 0 ? 1 : 2;
    torch::nn::Sequential stage;
    stage->push_back(BasicBlock(in_planes, planes, stride));
    stage->push_back(BasicBlock(planes, planes, 1));
    in_planes = planes;
    stages_[static_cast<size_t>(s)] = register_module("layer" + std::to_string(s + 1), stage);
  }
  head = register_module("head", torch::nn::Linear(in_planes, options.num_classes));
}

BackboneOutput ResidualBackboneImpl::forward_with_taps(const torch::Tensor& x,
                                                       const TapAdditions& additions) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorCode::kInvalidShape,
          "ResidualBackbone: expected [B, 3, H, W] input");
  require(x.size(2) == options_.input_resolution && x.size(3) == options_.input_resolution,
          ErrorCode::kInvalidShape,
          "ResidualBackbone: expected " + std::to_string(options_.input_resolution) + "x" +
              std::to_string(options_.input_resolution) + " input");

  BackboneOutput out;
  out.taps.reserve(kNumTaps);
  auto tap = [&](int index, torch::Tensor h) {
    if (auto it = additions.find(index); it != additions.end()) h = inject_feature(h, it->second);
    out.taps.push_back(h);
    return h;
  };

  auto h = (x - mean_.to(x.dtype())) / stddev_.to(x.dtype());
  h = tap(0, torch::relu(stem_bn->forward(stem->forward(h))));
  for (int s = 0; s < 4; ++s) h = tap(s + 1, stages_[static_cast<size_t>(s)]->forward(h));
  h = torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1);
  out.logits = head->forward(h);
  return out;
}

FeatureShape ResidualBackboneImpl::tap_shape(int index) const {
  require(index >= 0 && index < kNumTaps, ErrorCode::kInvalidArgument,
          "ResidualBackbone: tap index out of range");
  const int64_t res = options_.input_resolution;
  if (index == 0) return {options_.base_width, res, res};
  const int stage = index - 1;
  const int64_t side = res >> stage;
  return {options_.base_width << stage, side, side};
}

int64_t ResidualBackboneImpl::multiply_adds() const {
  const int64_t w = options_.base_width;
  int64_t res = options_.input_resolution;
  int64_t total = conv_macs(3, w, 3, res);
  for (size_t s = 0; s < stages_.size(); ++s) {
    bool first = true;
    for (const auto& child : stages_[s]->children()) {
      const auto block = std::dynamic_pointer_cast<BasicBlockImpl>(child);
      total += block->multiply_adds(res);
      if (first && s > 0) res /= 2;
      first = false;
    }
  }
  total += (w << 3) * options_.num_classes;
  return total;
}

}  // namespace siriib
