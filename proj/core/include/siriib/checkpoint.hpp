#pragma once

#include "siriib/model.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace siriib {

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct OptimizerInfo {
  double learning_rate = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Versioned model snapshot. `state` holds every parameter and buffer keyed
/// by its module path; `optimizer_state` holds SGD momentum buffers keyed the
/// same way.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  uint32_t format_version = kFormatVersion;
  ArchitectureDescriptor architecture;
  NamedTensors state;
  NamedTensors optimizer_state;
  OptimizerInfo optimizer;
  int64_t epoch = 0;
  uint64_t seed = 0;
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

nlohmann::json to_json(const ArchitectureDescriptor& descriptor);
ArchitectureDescriptor descriptor_from_json(const nlohmann::json& j);

Checkpoint capture_checkpoint(const Classifier& model, const torch::optim::SGD* optimizer,
                              int64_t epoch, uint64_t seed);

/// Copies the checkpoint state into `model`. Throws kDescriptorMismatch when
/// the architectures differ.
void restore_model(Classifier& model, const Checkpoint& checkpoint);

/// Restores momentum buffers and hyperparameters into an optimizer built over
/// `model`'s parameters.
void restore_optimizer(torch::optim::SGD& optimizer, const Classifier& model,
                       const Checkpoint& checkpoint);

/// Builds a classifier from the stored descriptor and restores its state.
Classifier build_model(const Checkpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws kVersionMismatch for unknown format versions and kFormat for
/// corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace siriib
