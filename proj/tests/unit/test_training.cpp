#include "siriib/checkpoint.hpp"
#include "siriib/error.hpp"
#include "siriib/training.hpp"
#include "support/helpers.hpp"
#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace siriib {
namespace {

using siriib::testing::small_descriptor;

TrainConfig quick_config(int epochs, uint64_t seed = 1) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 64;
  c.milestones = TrainConfig::scaled_milestones(epochs);
  c.attack.steps = 2;
  c.seed = seed;
  return c;
}

TEST(Schedule, ThreeRegimes) {
  TrainConfig c;
  c.epochs = 200;
  c.milestones = {100, 150};
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 0), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 99), 0.1);
  EXPECT_NEAR(learning_rate_at(c, 100), 0.01, 1e-15);
  EXPECT_NEAR(learning_rate_at(c, 149), 0.01, 1e-15);
  EXPECT_NEAR(learning_rate_at(c, 150), 0.001, 1e-15);
  EXPECT_NEAR(learning_rate_at(c, 199), 0.001, 1e-15);
  EXPECT_EQ(TrainConfig::scaled_milestones(200), (std::vector<int>{100, 150}));
  EXPECT_EQ(TrainConfig::scaled_milestones(10), (std::vector<int>{5, 8}));
}

TEST(TrainConfig, DefaultsAndValidation) {
  TrainConfig c;
  EXPECT_EQ(c.batch_size, 128);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.1);
  EXPECT_DOUBLE_EQ(c.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.weight_decay, 5e-4);
  EXPECT_DOUBLE_EQ(c.attack.epsilon, 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(c.attack.step_size, 2.0 / 255.0);
  EXPECT_EQ(c.attack.steps, 10);
  EXPECT_NO_THROW(c.validate());
  c.milestones = {12};
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.max_grad_norm = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.siriib_max_grad_norm = std::nan("");
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, BareBackboneReducesToPlainAdversarialTraining) {
  auto model = Classifier(small_descriptor(false));
  auto data = make_synthetic_cifar(64, 2);
  auto cfg = quick_config(1);
  cfg.weights = {0.0, 0.0};
  auto r = adversarial_train(model, data, cfg);
  ASSERT_EQ(r.history.size(), 1u);
  const auto& m = r.history[0];
  EXPECT_FALSE(m.loss_svd.has_value());
  EXPECT_FALSE(m.loss_info.has_value());
  EXPECT_FALSE(m.r_tau.has_value());
  EXPECT_DOUBLE_EQ(m.loss_total, m.loss_ori);
  EXPECT_FALSE(m.to_json().contains("loss_svd"));
}

TEST(Train, SmokeEpochEmitsLoadableCheckpoint) {
  siriib::testing::TempDir dir;
  auto model = Classifier(small_descriptor(true));
  auto data = make_synthetic_cifar(512, 3);
  auto cfg = quick_config(1);
  cfg.attack.steps = 10;
  int checkpoints = 0;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](int epoch, const torch::optim::SGD& opt) {
    ++checkpoints;
    save_checkpoint(dir / "last.ckpt", capture_checkpoint(model, &opt, epoch, cfg.seed));
  };
  auto r = adversarial_train(model, data, cfg, hooks);
  EXPECT_EQ(checkpoints, 1);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_TRUE(r.history[0].loss_svd.has_value());
  EXPECT_TRUE(std::isfinite(r.history[0].loss_total));
  auto loaded = build_model(load_checkpoint(dir / "last.ckpt"));
  EXPECT_EQ(loaded->descriptor(), model->descriptor());
  EXPECT_EQ(accuracy(loaded, data), accuracy(model, data));
}

TEST(Train, IdenticalSeedsGiveIdenticalHistories) {
  auto data = make_synthetic_cifar(128, 4);
  auto run = [&] {
    torch::manual_seed(99);
    auto model = Classifier(small_descriptor(true));
    return adversarial_train(model, data, quick_config(2, 7)).history;
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a[0].loss_total, a[1].loss_total);
}

TEST(Train, DivergenceNamesBatchAndSamples) {
  auto model = Classifier(small_descriptor(false));
  {
    torch::NoGradGuard guard;
    for (auto& p : model->backbone->named_parameters()) {
      if (p.key().find("head") != std::string::npos) p.value().fill_(std::nan(""));
    }
  }
  auto cfg = quick_config(1);
  cfg.attack.steps = 0;
  try {
    adversarial_train(model, make_synthetic_cifar(64, 5), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("sample indices"), std::string::npos);
  }
}

TEST(Evaluate, ChanceLevelAndDegenerateAttack) {
  torch::manual_seed(5);
  auto model = Classifier(small_descriptor(false));
  auto data = sample_subset(make_synthetic_cifar(2000, 6), 1000, true, 1);
  auto zero = AttackConfig::pgd(20);
  zero.name = "eps0";
  zero.epsilon = 0.0;
  auto t = evaluate_robustness(model, {zero}, data, 250);
  EXPECT_NEAR(t.clean, 10.0, 3.0);
  ASSERT_EQ(t.robust.size(), 1u);
  EXPECT_EQ(t.robust[0].second, t.clean);
  auto table = t.to_table("acc", "random");
  EXPECT_EQ(table.columns.size(), 2u);
}

TEST(Evaluate, CheckpointRoundTripPreservesResults) {
  siriib::testing::TempDir dir;
  auto model = Classifier(small_descriptor(true));
  auto data = make_synthetic_cifar(64, 7);
  adversarial_train(model, data, quick_config(1));
  const std::vector<AttackConfig> attacks{AttackConfig::pgd(3), AttackConfig::cw(3)};
  auto before = evaluate_robustness(model, attacks, data, 32, 11);
  save_checkpoint(dir / "m.ckpt", capture_checkpoint(model, nullptr, 1, 1));
  auto loaded = build_model(load_checkpoint(dir / "m.ckpt"));
  auto after = evaluate_robustness(loaded, attacks, data, 32, 11);
  EXPECT_EQ(before.clean, after.clean);
  EXPECT_EQ(before.robust, after.robust);
}

TEST(Evaluate, MoreStepsDoNotHelpTheDefender) {
  auto model = Classifier(small_descriptor(false));
  auto data = make_synthetic_cifar(256, 8);
  auto cfg = quick_config(2);
  cfg.attack.steps = 3;
  adversarial_train(model, data, cfg);
  auto eval = data.slice(0, 128);
  auto t = evaluate_robustness(model, {AttackConfig::pgd(20), AttackConfig::pgd(100)}, eval, 128);
  EXPECT_LE(t.robust[1].second, t.robust[0].second + 1.0);
  EXPECT_LE(t.robust[0].second, t.clean);
}

TEST(Swap, NoAttackGivesEqualAccuracies) {
  auto model = Classifier(small_descriptor(false));
  auto data = make_synthetic_cifar(64, 9);
  auto none = AttackConfig::pgd(10);
  none.epsilon = 0.0;
  auto r = svd_swap_experiment(model, none, data, 32);
  EXPECT_NEAR(r.robust_accuracy, r.swapped_accuracy, 1e-12);
  EXPECT_EQ(r.clean.size(0), 8);
  EXPECT_LE((r.swapped - r.clean).abs().max().item<float>(), 1e-5f);

  auto shuffled = data;
  shuffled.labels = data.labels.roll(1);
  EXPECT_THROW(svd_swap_experiment(model, data, shuffled), Error);
}

TEST(GreyBox, IdentitySrSmoke) {
  auto victim = Classifier(small_descriptor(false));
  MultiScaleSr sr(MultiScaleConfig{});
  auto data = make_synthetic_cifar(32, 10);
  auto r = grey_box_sr_eval(sr, victim, AttackConfig::pgd(2), data, 32);
  for (double v : {r.clean_x, r.clean_x_avg, r.robust_x_adv, r.robust_x_avg}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
  auto instrumented = Classifier(small_descriptor(true));
  EXPECT_THROW(grey_box_sr_eval(sr, instrumented, AttackConfig::pgd(2), data), Error);
  MultiScaleSr wrong(MultiScaleConfig{{16, 8}});
  EXPECT_THROW(grey_box_sr_eval(wrong, victim, AttackConfig::pgd(2), data), Error);
}

TEST(GreyBox, IsolatedSrTrainingLowersItsLoss) {
  auto victim = Classifier(small_descriptor(false));
  MultiScaleSr sr(MultiScaleConfig{});
  auto data = make_synthetic_cifar(64, 11);
  IsolatedSrConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.attack.steps = 1;
  auto history = train_isolated_sr(sr, victim, data, cfg);
  ASSERT_EQ(history.size(), 3u);
  EXPECT_LT(history.back(), history.front());
  for (const auto& p : victim->parameters()) EXPECT_FALSE(p.grad().defined());
}

}  // namespace
}  // namespace siriib
