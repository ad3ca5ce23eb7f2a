#include "siriib/attacks.hpp"

#include "siriib/error.hpp"
#include "siriib/losses.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <charconv>
#include <cmath>
#include <string>

namespace siriib {

std::string_view to_string(Norm norm) { return norm == Norm::kLinf ? "linf" : "l2"; }

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kCrossEntropy: return "ce";
    case Objective::kCarliniWagner: return "cw";
    case Objective::kSvd: return "svd";
    case Objective::kInfo: return "info";
    case Objective::kCrossEntropySvd: return "ce+svd";
    case Objective::kCrossEntropyInfo: return "ce+info";
    case Objective::kCrossEntropySvdInfo: return "ce+svd+info";
  }
  return "?";
}

Norm parse_norm(std::string_view text) {
  if (text == "linf" || text == "Linf" || text == "inf") return Norm::kLinf;
  if (text == "l2" || text == "L2") return Norm::kL2;
  fail(ErrorCode::kConfig, "unknown norm '" + std::string(text) + "'");
}

Objective parse_objective(std::string_view text) {
  for (auto o : {Objective::kCrossEntropy, Objective::kCarliniWagner, Objective::kSvd,
                 Objective::kInfo, Objective::kCrossEntropySvd, Objective::kCrossEntropyInfo,
                 Objective::kCrossEntropySvdInfo}) {
    if (text == to_string(o)) return o;
  }
  if (text == "pgd") return Objective::kCrossEntropy;
  fail(ErrorCode::kConfig, "unknown attack objective '" + std::string(text) + "'");
}

bool needs_siriib(Objective objective) {
  return objective != Objective::kCrossEntropy && objective != Objective::kCarliniWagner;
}

void AttackConfig::validate() const {
  require(std::isfinite(epsilon) && epsilon >= 0.0, ErrorCode::kConfig,
          "attack '" + name + "': epsilon must be finite and >= 0");
  require(steps >= 0, ErrorCode::kConfig, "attack '" + name + "': steps must be >= 0");
  require(steps == 0 || (std::isfinite(step_size) && step_size > 0.0), ErrorCode::kConfig,
          "attack '" + name + "': step size must be > 0 when steps > 0");
}

AttackConfig AttackConfig::pgd(int steps) {
  AttackConfig c;
  c.name = "pgd" + std::to_string(steps);
  c.steps = steps;
  c.random_start = true;
  return c;
}

AttackConfig AttackConfig::cw(int steps) {
  AttackConfig c = pgd(steps);
  c.name = "cw" + std::to_string(steps);
  c.objective = Objective::kCarliniWagner;
  return c;
}

AttackConfig AttackConfig::pgd_l2(int steps) {
  AttackConfig c = pgd(steps);
  c.name = "l2-pgd" + std::to_string(steps);
  c.norm = Norm::kL2;
  c.epsilon = 0.5;
  c.step_size = 0.1;
  return c;
}

AttackConfig AttackConfig::cw_l2(int steps) {
  AttackConfig c = pgd_l2(steps);
  c.name = "l2-cw" + std::to_string(steps);
  c.objective = Objective::kCarliniWagner;
  return c;
}

AttackConfig AttackConfig::from_name(std::string_view name) {
  std::string_view rest = name;
  bool l2 = false;
  if (rest.starts_with("l2-")) {
    l2 = true;
    rest.remove_prefix(3);
  }
  size_t digits = rest.size();
  while (digits > 0 && std::isdigit(static_cast<unsigned char>(rest[digits - 1]))) --digits;
  require(digits < rest.size(), ErrorCode::kConfig,
          "attack name '" + std::string(name) + "' must end with a step count");
  int steps = 0;
  std::from_chars(rest.data() + digits, rest.data() + rest.size(), steps);
  const auto kind = rest.substr(0, digits);

  AttackConfig c = l2 ? pgd_l2(steps) : pgd(steps);
  c.objective = parse_objective(kind == "pgd" ? "ce" : kind);
  c.name = std::string(name);
  return c;
}

namespace {

torch::Tensor per_sample_l2(const torch::Tensor& t) {
  return torch::linalg_vector_norm(t.flatten(1), 2, {1});
}

torch::Tensor broadcast_like(const torch::Tensor& per_sample, const torch::Tensor& like) {
  std::vector<int64_t> shape(static_cast<size_t>(like.dim()), 1);
  shape[0] = like.size(0);
  return per_sample.view(shape);
}

torch::Tensor project(const torch::Tensor& candidate, const torch::Tensor& x0,
                      const AttackConfig& config) {
  if (config.norm == Norm::kLinf) {
    auto lo = (x0 - config.epsilon).clamp_min(0.0);
    auto hi = (x0 + config.epsilon).clamp_max(1.0);
    return torch::min(torch::max(candidate, lo), hi);
  }
  auto delta = candidate - x0;
  auto norms = per_sample_l2(delta);
  auto factor = torch::where(norms > config.epsilon, config.epsilon / norms,
                             torch::ones_like(norms));
  return (x0 + delta * broadcast_like(factor, delta)).clamp(0.0, 1.0);
}

torch::Tensor random_start(const torch::Tensor& x0, const AttackConfig& config) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  if (config.norm == Norm::kLinf) {
    auto u = at::rand(x0.sizes(), gen, x0.options());
    return project(x0 + (2.0 * u - 1.0) * config.epsilon, x0, config);
  }
  auto direction = at::randn(x0.sizes(), gen, x0.options());
  auto norms = per_sample_l2(direction).clamp_min(1e-12);
  auto radius = at::rand({x0.size(0)}, gen, x0.options()) * config.epsilon;
  auto delta = direction * broadcast_like(radius / norms, direction);
  return project(x0 + delta, x0, config);
}

}  // namespace

torch::Tensor pgd_attack(const ObjectiveFn& objective, const torch::Tensor& x,
                         const AttackConfig& config, const StepObserver& observer) {
  config.validate();
  const auto x0 = x.detach();
  auto x_adv = x0.clone();
  if (config.steps == 0 || config.epsilon == 0.0) return x_adv;
  if (config.random_start) x_adv = random_start(x0, config);

  for (int step = 0; step < config.steps; ++step) {
    auto candidate = x_adv.detach().requires_grad_(true);
    auto value = objective(candidate);
    require(value.numel() == 1, ErrorCode::kInvalidShape, "pgd: objective must be a scalar");
    require(std::isfinite(value.item<double>()), ErrorCode::kNonFinite,
            "pgd: objective is non-finite at step " + std::to_string(step));
    torch::Tensor grad;
    if (value.requires_grad()) {
      grad = torch::autograd::grad({value}, {candidate}, {}, std::nullopt, false,
                                   /*allow_unused=*/true)[0];
    }
    grad = grad.defined() ? grad.detach() : torch::zeros_like(x0);

    torch::Tensor stepped;
    if (config.norm == Norm::kLinf) {
      stepped = x_adv + config.step_size * grad.sign();
    } else {
      auto norms = per_sample_l2(grad);
      auto scale = torch::where(norms > 0, config.step_size / norms, torch::zeros_like(norms));
      stepped = x_adv + grad * broadcast_like(scale, grad);
    }
    x_adv = project(stepped, x0, config);
    if (observer) observer(step, x_adv);
  }
  return x_adv;
}

torch::Tensor cw_margin(const torch::Tensor& logits, const torch::Tensor& y) {
  require(logits.dim() == 2 && y.dim() == 1 && logits.size(0) == y.size(0),
          ErrorCode::kInvalidShape, "cw_margin: expected [B, K] logits and [B] labels");
  auto target = logits.gather(1, y.view({-1, 1})).squeeze(1);
  auto mask = torch::one_hot(y, logits.size(1)).to(torch::kBool);
  auto others = logits.masked_fill(mask, -std::numeric_limits<double>::infinity());
  auto runner_up = std::get<0>(others.max(1));
  return -(target - runner_up).mean();
}

ObjectiveFn make_objective(Classifier& model, const torch::Tensor& x_clean, const torch::Tensor& y,
                           Objective objective) {
  if (needs_siriib(objective)) {
    require(model->has_siriib(), ErrorCode::kUnsupported,
            "objective '" + std::string(to_string(objective)) +
                "' needs a SiRIIB-instrumented model");
  }
  const bool use_ce = objective == Objective::kCrossEntropy ||
                      objective == Objective::kCrossEntropySvd ||
                      objective == Objective::kCrossEntropyInfo ||
                      objective == Objective::kCrossEntropySvdInfo;
  const bool use_svd = objective == Objective::kSvd || objective == Objective::kCrossEntropySvd ||
                       objective == Objective::kCrossEntropySvdInfo;
  const bool use_info = objective == Objective::kInfo ||
                        objective == Objective::kCrossEntropyInfo ||
                        objective == Objective::kCrossEntropySvdInfo;
  const bool use_cw = objective == Objective::kCarliniWagner;

  torch::Tensor ref_avg;
  std::vector<torch::Tensor> ref_features;
  if (use_svd || use_info) {
    torch::NoGradGuard no_grad;
    auto ref = model->siriib->forward(x_clean.detach());
    ref_avg = ref.x_avg;
    ref_features = ref.features;
  }

  return [=, &model](const torch::Tensor& candidate) {
    auto out = model->forward_full(candidate);
    torch::Tensor total = torch::zeros({}, out.logits.options());
    if (use_ce) total = total + torch::nn::functional::cross_entropy(out.logits, y);
    if (use_cw) total = total + cw_margin(out.logits, y);
    if (use_svd) total = total + loss_svd(out.x_avg, ref_avg);
    if (use_info) total = total + loss_info(out.features, ref_features);
    return total;
  };
}

torch::Tensor adaptive_objective(Classifier& model, const torch::Tensor& x_candidate,
                                 const torch::Tensor& x_clean, const torch::Tensor& y,
                                 Objective objective) {
  return make_objective(model, x_clean, y, objective)(x_candidate);
}

torch::Tensor pgd_attack(Classifier& model, const torch::Tensor& x, const torch::Tensor& y,
                         const AttackConfig& config, const StepObserver& observer) {
  ModeGuard eval_mode(*model, /*training=*/false);
  auto objective = make_objective(model, x, y, config.objective);
  return pgd_attack(objective, x, config, observer);
}

}  // namespace siriib
