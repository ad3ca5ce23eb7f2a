#pragma once

#include "siriib/model.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace siriib {

enum class Norm { kLinf, kL2 };

enum class Objective {
  kCrossEntropy,
  kCarliniWagner,
  kSvd,
  kInfo,
  kCrossEntropySvd,
  kCrossEntropyInfo,
  kCrossEntropySvdInfo,
};

std::string_view to_string(Norm norm);
std::string_view to_string(Objective objective);
Norm parse_norm(std::string_view text);
Objective parse_objective(std::string_view text);

/// True for selectors that read SiRIIB internals.
bool needs_siriib(Objective objective);

struct AttackConfig {
  std::string name = "pgd10";
  Norm norm = Norm::kLinf;
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int steps = 10;
  Objective objective = Objective::kCrossEntropy;
  bool random_start = false;
  uint64_t seed = 0;

  void validate() const;

  // The named factories below all enable random start.

  /// L-inf PGD with cross-entropy, eps 8/255, alpha 2/255.
  static AttackConfig pgd(int steps);
  /// L-inf PGD on the C&W margin, eps 8/255, alpha 2/255.
  static AttackConfig cw(int steps);
  /// L2 variants with eps 0.5, alpha 0.1.
  static AttackConfig pgd_l2(int steps);
  static AttackConfig cw_l2(int steps);

  /// Parses names such as "pgd20", "cw100", "l2-pgd20", "l2-cw100",
  /// "svd20", "info20", "ce+svd20", "ce+info20", "ce+svd+info20".
  static AttackConfig from_name(std::string_view name);
};

/// Scalar objective to be maximized over the candidate input.
using ObjectiveFn = std::function<torch::Tensor(const torch::Tensor& x_candidate)>;

/// Called after every projected step with the current iterate.
using StepObserver = std::function<void(int step, const torch::Tensor& x_adv)>;

/// Projected gradient ascent on `objective` inside the eps-ball around x and
/// the [0, 1] box. L-inf steps by alpha * sign(grad); L2 steps by alpha along
/// the per-sample unit-norm gradient and projects radially. Throws
/// kNonFinite if the objective becomes non-finite.
torch::Tensor pgd_attack(const ObjectiveFn& objective, const torch::Tensor& x,
                         const AttackConfig& config, const StepObserver& observer = {});

/// Runs the attack against `model` in evaluation mode with the objective
/// selected by config.objective. Model parameters receive no gradients.
torch::Tensor pgd_attack(Classifier& model, const torch::Tensor& x, const torch::Tensor& y,
                         const AttackConfig& config, const StepObserver& observer = {});

/// -(z_y - max_{j != y} z_j), averaged over the batch.
torch::Tensor cw_margin(const torch::Tensor& logits, const torch::Tensor& y);

/// Builds the selected objective. L_svd / L_info terms compare the
/// candidate's x_avg / f_i with those of x_clean (computed once, constant).
/// Mixed selectors add terms with unit weights.
ObjectiveFn make_objective(Classifier& model, const torch::Tensor& x_clean, const torch::Tensor& y,
                           Objective objective);

torch::Tensor adaptive_objective(Classifier& model, const torch::Tensor& x_candidate,
                                 const torch::Tensor& x_clean, const torch::Tensor& y,
                                 Objective objective);

}  // namespace siriib
