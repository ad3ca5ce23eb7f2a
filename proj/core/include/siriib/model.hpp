#pragma once

#include "siriib/backbone.hpp"
#include "siriib/siriib_module.hpp"

#include <torch/torch.h>

#include <string>
#include <vector>

namespace siriib {

/// Everything needed to rebuild a classifier's module tree.
struct ArchitectureDescriptor {
  std::string backbone = "resnet18-cifar";
  int64_t num_classes = 10;
  int64_t base_width = 64;
  int64_t input_resolution = 32;
  bool siriib = false;
  std::vector<int64_t> scales{32, 24, 16, 8};
  FeatureInjectionPlan plan = FeatureInjectionPlan::shallowest(kMaxProjections);

  void validate() const;

  friend bool operator==(const ArchitectureDescriptor&, const ArchitectureDescriptor&) = default;
};

struct ModelOutput {
  torch::Tensor logits;
  torch::Tensor x_avg;                  // undefined without SiRIIB
  std::vector<torch::Tensor> features;  // f_i; empty without SiRIIB
  std::vector<torch::Tensor> taps;
};

/// Residual backbone, optionally instrumented with a SiRIIB module whose
/// projections are added at the planned taps.
class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(const ArchitectureDescriptor& descriptor);

  ModelOutput forward_full(const torch::Tensor& x);

  torch::Tensor forward(const torch::Tensor& x) { return forward_full(x).logits; }

  bool has_siriib() const { return !siriib.is_empty(); }

  /// R_tau summed over all SR blocks; zero scalar without SiRIIB.
  torch::Tensor orthogonality_penalty() const;

  int64_t multiply_adds() const;

  const ArchitectureDescriptor& descriptor() const { return descriptor_; }

  ResidualBackbone backbone{nullptr};
  SiriibModule siriib{nullptr};

 private:
  ArchitectureDescriptor descriptor_;
};
TORCH_MODULE(Classifier);

int64_t count_parameters(const torch::nn::Module& module);

struct OverheadReport {
  int64_t base_parameters = 0;
  int64_t instrumented_parameters = 0;
  int64_t base_multiply_adds = 0;
  int64_t instrumented_multiply_adds = 0;

  double parameter_overhead() const {
    return static_cast<double>(instrumented_parameters - base_parameters) /
           static_cast<double>(base_parameters);
  }
};

OverheadReport count_overhead(const Classifier& base, const Classifier& instrumented);

/// Restores training/eval mode on scope exit.
class ModeGuard {
 public:
  ModeGuard(torch::nn::Module& module, bool training);
  ~ModeGuard();
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool previous_;
};

}  // namespace siriib
