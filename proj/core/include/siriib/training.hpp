#pragma once

#include "siriib/attacks.hpp"
#include "siriib/data.hpp"
#include "siriib/losses.hpp"
#include "siriib/model.hpp"
#include "siriib/results.hpp"
#include "siriib/spectral.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace siriib {

struct TrainConfig {
  int epochs = 10;
  int64_t batch_size = 128;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> milestones{5, 8};  // epochs (0-based) at which lr *= gamma
  double gamma = 0.1;
  AttackConfig attack = default_train_attack();
  LossWeights weights;
  /// Gradient-norm clips applied before each step, separately to the
  /// backbone and to the SiRIIB module; 0 disables.
  double max_grad_norm = 10.0;
  double siriib_max_grad_norm = 0.1;
  uint64_t seed = 0;

  void validate() const;

  /// L-inf, eps 8/255, alpha 2/255, 10 steps, random start.
  static AttackConfig default_train_attack();

  /// The 100/150-of-200 schedule rescaled to `epochs`.
  static std::vector<int> scaled_milestones(int epochs);
};

/// Step schedule: lr * gamma^(number of milestones <= epoch).
double learning_rate_at(const TrainConfig& config, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss_ori = 0.0;
  std::optional<double> loss_svd;
  std::optional<double> loss_info;
  std::optional<double> r_tau;
  double loss_total = 0.0;
  double adversarial_accuracy = 0.0;  // percent, on the training batches

  nlohmann::json to_json() const;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Fires after each milestone epoch and after the final epoch.
  std::function<void(int epoch, const torch::optim::SGD& optimizer)> on_checkpoint;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
};

/// PGD adversarial training. For SiRIIB models the clean batch is forwarded
/// alongside the adversarial batch to provide L_svd / L_info references.
/// Throws kNonFinite (naming epoch, batch and sample indices) if the loss
/// diverges.
TrainResult adversarial_train(Classifier& model, const ImageBatch& data, const TrainConfig& config,
                              const TrainHooks& hooks = {});

/// Percent of rows whose argmax logit matches the label (eval mode).
double accuracy(Classifier& model, const ImageBatch& data, int64_t batch_size = 256);

struct AccuracyTable {
  double clean = 0.0;
  std::vector<std::pair<std::string, double>> robust;

  ResultsTable to_table(const std::string& title, const std::string& label) const;
};

/// Inspects each adversarial batch: (attack name, batch of perturbed inputs).
using EvalObserver = std::function<void(const std::string&, const torch::Tensor&)>;

/// Clean accuracy plus robust accuracy for each attack. Random starts are
/// seeded from `seed`, the attack index and the batch index.
AccuracyTable evaluate_robustness(Classifier& model, const std::vector<AttackConfig>& attacks,
                                  const ImageBatch& data, int64_t batch_size = 128,
                                  uint64_t seed = 0, const EvalObserver& observer = {});

/// Accuracy on pre-computed adversarial examples.
double evaluate_examples(Classifier& model, const ImageBatch& examples, int64_t batch_size = 256);

struct SwapResult {
  double robust_accuracy = 0.0;
  double swapped_accuracy = 0.0;
  // First few images of the first batch, for visualization.
  torch::Tensor clean;
  torch::Tensor adversarial;
  torch::Tensor swapped;

  double gain() const { return swapped_accuracy - robust_accuracy; }
};

/// Accuracy on x_adv and on U_adv diag(sigma_clean) Vt_adv.
SwapResult svd_swap_experiment(Classifier& model, const AttackConfig& attack,
                               const ImageBatch& data, int64_t batch_size = 128,
                               uint64_t seed = 0,
                               spectral::ClipMode clip = spectral::ClipMode::kRaw);

/// Same, on externally paired clean / adversarial batches (rows matched).
SwapResult svd_swap_experiment(Classifier& model, const ImageBatch& clean,
                               const ImageBatch& adversarial, int64_t batch_size = 128,
                               spectral::ClipMode clip = spectral::ClipMode::kRaw);

struct IsolatedSrConfig {
  int epochs = 2;
  int64_t batch_size = 128;
  double learning_rate = 1e-3;
  double lambda2 = 1e-4;
  AttackConfig attack = TrainConfig::default_train_attack();
  uint64_t seed = 0;
};

/// Trains only the SR front end, outside the classifier, to map adversarial
/// examples of `victim` back towards their clean images (L_svd + lambda2 R_tau).
std::vector<double> train_isolated_sr(MultiScaleSr& front_end, Classifier& victim,
                                      const ImageBatch& data, const IsolatedSrConfig& config);

struct GreyBoxResult {
  double clean_x = 0.0;
  double clean_x_avg = 0.0;
  double robust_x_adv = 0.0;
  double robust_x_avg = 0.0;
};

/// Attacks `victim` alone, then evaluates it on x_adv and on
/// front_end(x_adv); clean accuracy likewise on x and front_end(x).
GreyBoxResult grey_box_sr_eval(MultiScaleSr& front_end, Classifier& victim,
                               const AttackConfig& attack, const ImageBatch& data,
                               int64_t batch_size = 128, uint64_t seed = 0);

}  // namespace siriib
