#include "siriib/model.hpp"

#include "siriib/error.hpp"

namespace siriib {

void ArchitectureDescriptor::validate() const {
  require(backbone == "resnet18-cifar", ErrorCode::kConfig,
          "unsupported backbone '" + backbone + "' (only resnet18-cifar is built)");
  require(num_classes > 1, ErrorCode::kConfig, "num_classes must be at least 2");
  require(base_width > 0, ErrorCode::kConfig, "base_width must be positive");
  if (siriib) {
    MultiScaleConfig{scales}.validate(input_resolution);
    plan.validate(ResidualBackboneImpl::kNumTaps);
  }
}

ClassifierImpl::ClassifierImpl(const ArchitectureDescriptor& descriptor)
    : descriptor_(descriptor) {
  descriptor.validate();
  BackboneOptions bo;
  bo.num_classes = descriptor.num_classes;
  bo.base_width = descriptor.base_width;
  bo.input_resolution = descriptor.input_resolution;
  backbone = register_module("backbone", ResidualBackbone(bo));

  if (descriptor.siriib) {
    SiriibOptions so;
    so.scales.resolutions = descriptor.scales;
    for (const auto& e : descriptor.plan.entries) {
      so.projection_targets.push_back(backbone->tap_shape(e.tap));
    }
    siriib = register_module("siriib", SiriibModule(so));
  }
}

ModelOutput ClassifierImpl::forward_full(const torch::Tensor& x) {
  ModelOutput out;
  TapAdditions additions;
  if (has_siriib()) {
    auto s = siriib->forward(x);
    for (const auto& e : descriptor_.plan.entries) {
      additions.emplace(e.tap, s.features[static_cast<size_t>(e.projection)]);
    }
    out.x_avg = std::move(s.x_avg);
    out.features = std::move(s.features);
  }
  auto b = backbone->forward_with_taps(x, additions);
  out.logits = std::move(b.logits);
  out.taps = std::move(b.taps);
  return out;
}

torch::Tensor ClassifierImpl::orthogonality_penalty() const {
  if (!has_siriib()) return torch::zeros({});
  return siriib->orthogonality_penalty();
}

int64_t ClassifierImpl::multiply_adds() const {
  int64_t total = backbone->multiply_adds();
  if (has_siriib()) total += siriib->multiply_adds();
  return total;
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

OverheadReport count_overhead(const Classifier& base, const Classifier& instrumented) {
  OverheadReport r;
  r.base_parameters = count_parameters(*base);
  r.instrumented_parameters = count_parameters(*instrumented);
  r.base_multiply_adds = base->multiply_adds();
  r.instrumented_multiply_adds = instrumented->multiply_adds();
  return r;
}

ModeGuard::ModeGuard(torch::nn::Module& module, bool training)
    : module_(module), previous_(module.is_training()) {
  module_.train(training);
}

ModeGuard::~ModeGuard() { module_.train(previous_); }

}  // namespace siriib
