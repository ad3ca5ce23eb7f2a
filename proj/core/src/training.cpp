#include "siriib/training.hpp"

#include "siriib/error.hpp"

#include <algorithm>
#include <cmath>

namespace siriib {
namespace {

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
  // splitmix64 over the combined words
  uint64_t z = a * 0x9E3779B97F4A7C15ULL + b * 0xBF58476D1CE4E5B9ULL + c * 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int64_t count_correct(const torch::Tensor& logits, const torch::Tensor& y) {
  return logits.argmax(1).eq(y).sum().item<int64_t>();
}

double percent(int64_t correct, int64_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::string describe_rows(const ImageBatch& batch) {
  std::string s;
  auto idx = batch.indices.contiguous();
  for (int64_t i = 0; i < std::min<int64_t>(batch.size(), 16); ++i) {
    s += (i ? "," : "") + std::to_string(idx.data_ptr<int64_t>()[i]);
  }
  if (batch.size() > 16) s += ",...";
  return s;
}

}  // namespace

AttackConfig TrainConfig::default_train_attack() {
  AttackConfig a = AttackConfig::pgd(10);
  a.name = "train-pgd10";
  a.random_start = true;
  return a;
}

std::vector<int> TrainConfig::scaled_milestones(int epochs) {
  return {static_cast<int>(std::lround(epochs * 100.0 / 200.0)),
          static_cast<int>(std::lround(epochs * 150.0 / 200.0))};
}

void TrainConfig::validate() const {
  require(epochs > 0, ErrorCode::kConfig, "train: epochs must be positive");
  require(batch_size > 0, ErrorCode::kConfig, "train: batch size must be positive");
  require(learning_rate > 0.0 && momentum >= 0.0 && weight_decay >= 0.0, ErrorCode::kConfig,
          "train: invalid optimizer settings");
  for (double clip : {max_grad_norm, siriib_max_grad_norm}) {
    require(std::isfinite(clip) && clip >= 0.0, ErrorCode::kConfig,
            "train: gradient clips must be finite and non-negative");
  }
  for (int m : milestones) {
    require(m >= 0 && m <= epochs, ErrorCode::kConfig,
            "train: milestone " + std::to_string(m) + " exceeds epoch count");
  }
  attack.validate();
  weights.validate();
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  const auto drops = std::count_if(config.milestones.begin(), config.milestones.end(),
                                   [&](int m) { return m <= epoch; });
  return config.learning_rate * std::pow(config.gamma, static_cast<double>(drops));
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j{{"epoch", epoch},
                   {"lr", learning_rate},
                   {"loss_ori", loss_ori},
                   {"loss_total", loss_total},
                   {"adv_acc", adversarial_accuracy}};
  if (loss_svd) j["loss_svd"] = *loss_svd;
  if (loss_info) j["loss_info"] = *loss_info;
  if (r_tau) j["r_tau"] = *r_tau;
  return j;
}

TrainResult adversarial_train(Classifier& model, const ImageBatch& data, const TrainConfig& config,
                              const TrainHooks& hooks) {
  config.validate();
  data.validate(model->descriptor().num_classes);
  torch::manual_seed(config.seed);

  torch::optim::SGD optimizer(model->parameters(), torch::optim::SGDOptions(config.learning_rate)
                                                       .momentum(config.momentum)
                                                       .weight_decay(config.weight_decay));
  const bool instrumented = model->has_siriib();
  TrainResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
    }

    double sum_ori = 0, sum_svd = 0, sum_info = 0, sum_tau = 0, sum_total = 0;
    int64_t correct = 0, seen = 0;
    auto batches = make_batches(data, config.batch_size, mix_seed(config.seed, epoch + 1));
    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      const int64_t n = batch.size();

      AttackConfig attack = config.attack;
      attack.seed = mix_seed(config.seed, epoch + 1, b + 1);
      auto x_adv = pgd_attack(model, batch.images, batch.labels, attack);

      model->train();
      optimizer.zero_grad();
      torch::Tensor logits, l_svd, l_info, r_tau;
      if (instrumented) {
        auto out = model->forward_full(torch::cat({x_adv, batch.images}));
        logits = out.logits.narrow(0, 0, n);
        auto x_avg = out.x_avg.narrow(0, 0, n);
        std::vector<torch::Tensor> f_adv, f_clean;
        for (const auto& f : out.features) {
          f_adv.push_back(f.narrow(0, 0, n));
          f_clean.push_back(f.narrow(0, n, n).detach());
        }
        l_svd = loss_svd(x_avg, batch.images);
        l_info = loss_info(f_adv, f_clean);
        r_tau = model->orthogonality_penalty();
      } else {
        logits = model->forward(x_adv);
        l_svd = l_info = r_tau = torch::zeros({});
      }
      auto l_ori = torch::nn::functional::cross_entropy(logits, batch.labels);
      auto loss = total_loss(l_ori, l_svd, l_info, r_tau, config.weights);

      const double value = loss.item<double>();
      require(std::isfinite(value), ErrorCode::kNonFinite,
              "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                  std::to_string(b) + " (sample indices " + describe_rows(batch) + ")");
      loss.backward();
      if (config.max_grad_norm > 0.0) {
        torch::nn::utils::clip_grad_norm_(model->backbone->parameters(), config.max_grad_norm);
      }
      if (instrumented && config.siriib_max_grad_norm > 0.0) {
        torch::nn::utils::clip_grad_norm_(model->siriib->parameters(), config.siriib_max_grad_norm);
      }
      optimizer.step();

      const auto w = static_cast<double>(n);
      sum_ori += l_ori.item<double>() * w;
      sum_svd += l_svd.item<double>() * w;
      sum_info += l_info.item<double>() * w;
      sum_tau += r_tau.item<double>() * w;
      sum_total += value * w;
      correct += count_correct(logits.detach(), batch.labels);
      seen += n;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.learning_rate = lr;
    const double denom = static_cast<double>(std::max<int64_t>(seen, 1));
    m.loss_ori = sum_ori / denom;
    if (instrumented) {
      m.loss_svd = sum_svd / denom;
      m.loss_info = sum_info / denom;
      m.r_tau = sum_tau / denom;
    }
    m.loss_total = sum_total / denom;
    m.adversarial_accuracy = percent(correct, seen);
    result.history.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);

    const bool milestone = std::find(config.milestones.begin(), config.milestones.end(),
                                     epoch + 1) != config.milestones.end();
    if (hooks.on_checkpoint && (milestone || epoch + 1 == config.epochs)) {
      hooks.on_checkpoint(epoch, optimizer);
    }
  }
  model->eval();
  return result;
}

double accuracy(Classifier& model, const ImageBatch& data, int64_t batch_size) {
  ModeGuard eval_mode(*model, false);
  torch::NoGradGuard no_grad;
  int64_t correct = 0;
  for (const auto& batch : make_batches(data, batch_size)) {
    correct += count_correct(model->forward(batch.images), batch.labels);
  }
  return percent(correct, data.size());
}

double evaluate_examples(Classifier& model, const ImageBatch& examples, int64_t batch_size) {
  return accuracy(model, examples, batch_size);
}

ResultsTable AccuracyTable::to_table(const std::string& title, const std::string& label) const {
  ResultsTable t;
  t.title = title;
  t.columns.push_back("Clean");
  std::vector<double> values{clean};
  for (const auto& [name, acc] : robust) {
    t.columns.push_back(name);
    values.push_back(acc);
  }
  t.add_row(label, values);
  return t;
}

AccuracyTable evaluate_robustness(Classifier& model, const std::vector<AttackConfig>& attacks,
                                  const ImageBatch& data, int64_t batch_size, uint64_t seed,
                                  const EvalObserver& observer) {
  AccuracyTable table;
  table.clean = accuracy(model, data, batch_size);
  const auto batches = make_batches(data, batch_size);
  for (size_t a = 0; a < attacks.size(); ++a) {
    int64_t correct = 0;
    for (size_t b = 0; b < batches.size(); ++b) {
      AttackConfig cfg = attacks[a];
      cfg.seed = mix_seed(seed, a + 1, b + 1);
      auto x_adv = pgd_attack(model, batches[b].images, batches[b].labels, cfg);
      if (observer) observer(cfg.name, x_adv);
      ModeGuard eval_mode(*model, false);
      torch::NoGradGuard no_grad;
      correct += count_correct(model->forward(x_adv), batches[b].labels);
    }
    table.robust.emplace_back(attacks[a].name, percent(correct, data.size()));
  }
  return table;
}

SwapResult svd_swap_experiment(Classifier& model, const ImageBatch& clean,
                               const ImageBatch& adversarial, int64_t batch_size,
                               spectral::ClipMode clip) {
  require(clean.size() == adversarial.size() &&
              clean.images.sizes() == adversarial.images.sizes() &&
              torch::equal(clean.labels, adversarial.labels),
          ErrorCode::kInvalidArgument, "svd swap: clean and adversarial batches are not paired");
  ModeGuard eval_mode(*model, false);
  torch::NoGradGuard no_grad;
  SwapResult r;
  int64_t correct_adv = 0, correct_swap = 0;
  for (int64_t begin = 0; begin < clean.size(); begin += batch_size) {
    const int64_t end = std::min(begin + batch_size, clean.size());
    auto x = clean.images.slice(0, begin, end);
    auto x_adv = adversarial.images.slice(0, begin, end);
    auto y = clean.labels.slice(0, begin, end);
    auto swapped = spectral::swap_singular_values(x_adv, x, clip);
    correct_adv += count_correct(model->forward(x_adv), y);
    correct_swap += count_correct(model->forward(swapped), y);
    if (begin == 0) {
      const int64_t k = std::min<int64_t>(end, 8);
      r.clean = x.narrow(0, 0, k).clone();
      r.adversarial = x_adv.narrow(0, 0, k).clone();
      r.swapped = swapped.narrow(0, 0, k).clone();
    }
  }
  r.robust_accuracy = percent(correct_adv, clean.size());
  r.swapped_accuracy = percent(correct_swap, clean.size());
  return r;
}

SwapResult svd_swap_experiment(Classifier& model, const AttackConfig& attack,
                               const ImageBatch& data, int64_t batch_size, uint64_t seed,
                               spectral::ClipMode clip) {
  ImageBatch adv = data;
  std::vector<torch::Tensor> parts;
  const auto batches = make_batches(data, batch_size);
  for (size_t b = 0; b < batches.size(); ++b) {
    AttackConfig cfg = attack;
    cfg.seed = mix_seed(seed, 1, b + 1);
    parts.push_back(pgd_attack(model, batches[b].images, batches[b].labels, cfg));
  }
  adv.images = torch::cat(parts);
  return svd_swap_experiment(model, data, adv, batch_size, clip);
}

std::vector<double> train_isolated_sr(MultiScaleSr& front_end, Classifier& victim,
                                      const ImageBatch& data, const IsolatedSrConfig& config) {
  require(config.epochs > 0 && config.batch_size > 0, ErrorCode::kConfig,
          "isolated SR: epochs and batch size must be positive");
  torch::manual_seed(config.seed);
  torch::optim::Adam optimizer(front_end->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  std::vector<double> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    auto batches = make_batches(data, config.batch_size, mix_seed(config.seed, epoch + 1));
    for (size_t b = 0; b < batches.size(); ++b) {
      AttackConfig cfg = config.attack;
      cfg.seed = mix_seed(config.seed, epoch + 1, b + 1);
      auto x_adv = pgd_attack(victim, batches[b].images, batches[b].labels, cfg);
      front_end->train();
      optimizer.zero_grad();
      auto loss = loss_svd(front_end->forward(x_adv), batches[b].images) +
                  config.lambda2 * front_end->orthogonality_penalty();
      require(std::isfinite(loss.item<double>()), ErrorCode::kNonFinite,
              "isolated SR training diverged at epoch " + std::to_string(epoch) + ", batch " +
                  std::to_string(b));
      loss.backward();
      optimizer.step();
      sum += loss.item<double>() * static_cast<double>(batches[b].size());
    }
    history.push_back(sum / static_cast<double>(data.size()));
  }
  front_end->eval();
  return history;
}

GreyBoxResult grey_box_sr_eval(MultiScaleSr& front_end, Classifier& victim,
                               const AttackConfig& attack, const ImageBatch& data,
                               int64_t batch_size, uint64_t seed) {
  require(!victim->has_siriib(), ErrorCode::kInvalidArgument,
          "grey-box evaluation expects a bare backbone as the victim");
  const int64_t native = front_end->config().resolutions.front();
  require(data.images.size(2) == native && data.images.size(3) == native,
          ErrorCode::kInvalidShape, "grey-box: data resolution does not match the SR front end");

  ModeGuard sr_eval(*front_end, false);
  int64_t c_x = 0, c_avg = 0, r_adv = 0, r_avg = 0;
  const auto batches = make_batches(data, batch_size);
  for (size_t b = 0; b < batches.size(); ++b) {
    AttackConfig cfg = attack;
    cfg.seed = mix_seed(seed, 1, b + 1);
    auto x_adv = pgd_attack(victim, batches[b].images, batches[b].labels, cfg);
    ModeGuard eval_mode(*victim, false);
    torch::NoGradGuard no_grad;
    const auto& x = batches[b].images;
    const auto& y = batches[b].labels;
    c_x += count_correct(victim->forward(x), y);
    c_avg += count_correct(victim->forward(front_end->forward(x)), y);
    r_adv += count_correct(victim->forward(x_adv), y);
    r_avg += count_correct(victim->forward(front_end->forward(x_adv)), y);
  }
  const int64_t n = data.size();
  return {percent(c_x, n), percent(c_avg, n), percent(r_adv, n), percent(r_avg, n)};
}

}  // namespace siriib
