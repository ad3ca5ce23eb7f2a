#include "commands.hpp"

#include "cli.hpp"
#include "siriib/archive.hpp"
#include "siriib/checkpoint.hpp"
#include "siriib/error.hpp"
#include "siriib/image_io.hpp"
#include "siriib/results.hpp"
#include "siriib/spectral.hpp"

#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace siriib::cli {
namespace {

uint64_t seed_of(const Config& c) { return static_cast<uint64_t>(c.get_int("seed", 0)); }

std::string fixed(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

void emit(RunContext& run, const ResultsTable& table, const std::string& stem = "results") {
  write_results(run.dir / stem, table);
  run.out << table.format_text() << '\n';
}

/// Trains a fresh model; metrics go to metrics<suffix>.jsonl and checkpoints
/// to checkpoints/<prefix>epoch-<n>.ckpt plus <prefix>final.ckpt.
Classifier train_model(RunContext& run, const ArchitectureDescriptor& descriptor,
                       const TrainConfig& train, const ImageBatch& data,
                       const std::string& tag = "") {
  torch::manual_seed(train.seed);
  Classifier model(descriptor);
  JsonLinesWriter metrics(run.dir / (tag.empty() ? "metrics.jsonl" : "metrics-" + tag + ".jsonl"));
  const std::string prefix = tag.empty() ? "" : tag + "-";
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    auto j = m.to_json();
    if (!tag.empty()) j["run"] = tag;
    metrics.write(j);
    run.out << (tag.empty() ? "" : "[" + tag + "] ") << "epoch " << m.epoch + 1 << '/'
            << train.epochs << "  loss " << fixed(m.loss_total, 4) << "  adv-acc "
            << fixed(m.adversarial_accuracy, 2) << "%\n"
            << std::flush;
  };
  hooks.on_checkpoint = [&](int epoch, const torch::optim::SGD& optimizer) {
    save_checkpoint(run.dir / "checkpoints" / (prefix + "epoch-" + std::to_string(epoch + 1) + ".ckpt"),
                    capture_checkpoint(model, &optimizer, epoch + 1, train.seed));
  };
  adversarial_train(model, data, train, hooks);
  save_checkpoint(run.dir / "checkpoints" / (prefix + "final.ckpt"),
                  capture_checkpoint(model, nullptr, train.epochs, train.seed));
  return model;
}

/// The model named by `checkpoint`, or one trained from the configuration.
Classifier obtain_model(RunContext& run, const Datasets& data) {
  if (run.config.contains("checkpoint")) {
    const auto path = run.config.get_string("checkpoint", "");
    require(std::filesystem::exists(path), ErrorCode::kConfig,
            "checkpoint '" + path + "' does not exist");
    auto model = build_model(load_checkpoint(path));
    run.out << "loaded " << path << '\n';
    return model;
  }
  return train_model(run, descriptor_from(run.config), train_config_from(run.config), data.train);
}

std::string display_name(const AttackConfig& a) {
  std::string s = a.name;
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

void cmd_train(RunContext& run) {
  const auto data = load_datasets(run.config);
  const auto descriptor = descriptor_from(run.config);
  const auto train = train_config_from(run.config);
  const auto attacks = attacks_from(run.config, "eval_attacks");
  auto model = train_model(run, descriptor, train, data.train);
  const auto bs = run.config.get_int("eval_batch_size", 128);
  auto table = evaluate_robustness(model, attacks, data.test, bs, seed_of(run.config));
  auto t = table.to_table("Test accuracy (%)", descriptor.siriib ? "ResNet-18-SR" : "ResNet-18");
  for (size_t i = 1; i < t.columns.size(); ++i) t.columns[i] = display_name(attacks[i - 1]);
  emit(run, t);
}

void cmd_attack_eval(RunContext& run) {
  const auto data = load_datasets(run.config);
  auto model = obtain_model(run, data);
  const auto attacks = attacks_from(run.config, "attacks");
  const auto bs = run.config.get_int("eval_batch_size", 128);
  const bool export_archive = run.config.get_bool("export_archive", false);

  std::map<std::string, std::vector<torch::Tensor>> generated;
  EvalObserver observer;
  if (export_archive) {
    observer = [&](const std::string& name, const torch::Tensor& x_adv) {
      generated[name].push_back(x_adv.detach().clone());
    };
  }
  auto acc = evaluate_robustness(model, attacks, data.test, bs, seed_of(run.config), observer);
  auto table = acc.to_table("Robust accuracy (%)",
                            model->has_siriib() ? "ResNet-18-SR" : "ResNet-18");
  for (size_t i = 1; i < table.columns.size(); ++i) table.columns[i] = display_name(attacks[i - 1]);

  if (export_archive) {
    std::filesystem::create_directories(run.dir / "archives");
    for (const auto& a : attacks) {
      AdversarialArchive archive{data.test, a.norm, a.epsilon};
      archive.examples.images = torch::cat(generated[a.name]);
      save_archive(run.dir / "archives" / a.name, archive);
    }
    run.out << "archives written to " << (run.dir / "archives").string() << '\n';
  }

  if (run.config.contains("archive")) {
    const auto stem = run.config.get_string("archive", "");
    auto archive = load_archive(stem);
    auto report = validate_archive(archive, data.test);
    run.out << "archive " << stem << ": " << report.checked << " checked, " << report.violations
            << " over budget, " << report.missing << " unmatched, max distance "
            << fixed(report.max_distance, 6) << '\n';
    table.columns.push_back("Archive");
    table.rows[0].values.push_back(evaluate_examples(model, archive.examples, bs));
  }
  emit(run, table);
}

void cmd_svd_swap(RunContext& run) {
  const auto data = load_datasets(run.config);
  auto model = obtain_model(run, data);
  const auto attacks = attacks_from(run.config, "swap_attacks");
  const auto bs = run.config.get_int("eval_batch_size", 128);
  const auto clip = run.config.get_bool("swap_clip", false) ? spectral::ClipMode::kUnitInterval
                                                            : spectral::ClipMode::kRaw;
  ResultsTable table;
  table.title = "Singular value swap: accuracy on x_adv and on U_adv S_clean V_adv' (%)";
  table.row_header = "Attack";
  table.columns = {"Robust", "Swapped", "Gain"};
  for (const auto& a : attacks) {
    auto r = svd_swap_experiment(model, a, data.test, bs, seed_of(run.config), clip);
    table.add_row(display_name(a), {r.robust_accuracy, r.swapped_accuracy, r.gain()});
    std::vector<torch::Tensor> diff;
    for (int64_t i = 0; i < r.clean.size(0); ++i) {
      diff.push_back(spectral::difference_map(r.adversarial[i], r.clean[i]));
    }
    std::vector<torch::Tensor> clean, adv, swapped;
    for (int64_t i = 0; i < r.clean.size(0); ++i) {
      clean.push_back(r.clean[i]);
      adv.push_back(r.adversarial[i]);
      swapped.push_back(r.swapped[i].clamp(0.0, 1.0));
    }
    write_png_grid(run.dir / "images" / ("swap-" + a.name + ".png"), {clean, adv, swapped, diff});
  }
  emit(run, table);
}

void cmd_sr_visualize(RunContext& run) {
  const auto data = load_datasets(run.config);
  auto model = obtain_model(run, data);
  require(model->has_siriib(), ErrorCode::kConfig, "sr-visualize needs a SiRIIB model");
  const auto attacks = attacks_from(run.config, "eval_attacks");
  const auto count = std::min(run.config.get_int("viz_count", 8), data.test.size());
  auto batch = data.test.slice(0, count);
  auto attack = attacks.front();
  attack.seed = seed_of(run.config);
  auto x_adv = pgd_attack(model, batch.images, batch.labels, attack);

  ModeGuard eval_mode(*model, false);
  torch::NoGradGuard no_grad;
  auto avg_clean = model->siriib->compute_x_avg(batch.images);
  auto avg_adv = model->siriib->compute_x_avg(x_adv);

  std::vector<std::vector<torch::Tensor>> rows(6);
  for (int64_t i = 0; i < count; ++i) {
    rows[0].push_back(batch.images[i]);
    rows[1].push_back(x_adv[i]);
    rows[2].push_back(avg_clean[i]);
    rows[3].push_back(avg_adv[i]);
    rows[4].push_back(spectral::difference_map(x_adv[i], batch.images[i]));
    rows[5].push_back(spectral::difference_map(avg_adv[i], avg_clean[i]));
    write_png(run.dir / "images" / ("x_avg-" + std::to_string(i) + ".png"), avg_adv[i]);
  }
  write_png_grid(run.dir / "images" / "panel.png", rows, 3);

  auto per_sample = [](const torch::Tensor& a, const torch::Tensor& b) {
    return torch::linalg_vector_norm((a - b).flatten(1), 2, {1}).mean().item<double>();
  };
  ResultsTable table;
  table.title = "Perturbation before and after SR (mean per-image L2)";
  table.row_header = "Attack";
  table.columns = {"||x_adv - x||", "||x_avg(x_adv) - x_avg(x)||", "L_svd(x_avg)"};
  table.add_row(display_name(attack),
                {per_sample(x_adv, batch.images), per_sample(avg_adv, avg_clean),
                 loss_svd(avg_adv, avg_clean).item<double>()});
  run.out << "panel rows: x, x_adv, x_avg(x), x_avg(x_adv), diff(x_adv, x), diff of x_avg\n";
  emit(run, table, "results");
}

void cmd_grey_box(RunContext& run) {
  const auto data = load_datasets(run.config);
  auto cfg = run.config;
  cfg.set("siriib", "false");
  RunContext bare{cfg, run.dir, run.out};
  auto victim = obtain_model(bare, data);
  require(!victim->has_siriib(), ErrorCode::kConfig, "grey-box needs a bare backbone checkpoint");

  const auto descriptor = descriptor_from(run.config);
  MultiScaleConfig scales{descriptor.scales};
  torch::manual_seed(seed_of(run.config));
  MultiScaleSr front_end(scales);
  IsolatedSrConfig sr;
  sr.epochs = static_cast<int>(run.config.get_int("sr_epochs", sr.epochs));
  sr.batch_size = run.config.get_int("batch_size", sr.batch_size);
  sr.learning_rate = run.config.get_double("sr_lr", sr.learning_rate);
  sr.lambda2 = run.config.get_double("lambda2", sr.lambda2);
  sr.attack = train_config_from(run.config).attack;
  sr.seed = seed_of(run.config);
  auto history = train_isolated_sr(front_end, victim, data.train, sr);
  JsonLinesWriter metrics(run.dir / "metrics-sr.jsonl");
  for (size_t i = 0; i < history.size(); ++i) {
    metrics.write({{"epoch", i}, {"loss", history[i]}});
    run.out << "SR epoch " << i + 1 << "  loss " << fixed(history[i], 4) << '\n';
  }
  torch::save(front_end, (run.dir / "checkpoints" / "sr-front-end.pt").string());

  const auto attacks = attacks_from(run.config, "grey_attacks");
  const auto bs = run.config.get_int("eval_batch_size", 128);
  ResultsTable table;
  table.title = "Grey-box evaluation of an isolated SR front end (%)";
  table.row_header = "Input";
  table.columns = {"Clean"};
  std::vector<double> row_x, row_avg;
  for (size_t i = 0; i < attacks.size(); ++i) {
    auto r = grey_box_sr_eval(front_end, victim, attacks[i], data.test, bs, seed_of(run.config));
    if (i == 0) {
      row_x.push_back(r.clean_x);
      row_avg.push_back(r.clean_x_avg);
    }
    table.columns.push_back(display_name(attacks[i]));
    row_x.push_back(r.robust_x_adv);
    row_avg.push_back(r.robust_x_avg);
  }
  table.add_row("x", row_x);
  table.add_row("x_avg", row_avg);
  emit(run, table);
}

void cmd_param_count(RunContext& run) {
  auto d = descriptor_from(run.config);
  d.siriib = false;
  Classifier base(d);
  d.siriib = true;
  Classifier inst(d);
  const auto r = count_overhead(base, inst);
  ResultsTable table;
  table.title = "Parameters and multiply-adds";
  table.columns = {"Params (M)", "MACs (G)"};
  table.add_row("ResNet-18", {r.base_parameters / 1e6, r.base_multiply_adds / 1e9});
  table.add_row("ResNet-18-SR",
                {r.instrumented_parameters / 1e6, r.instrumented_multiply_adds / 1e9});
  emit(run, table);
  run.out << "ResNet-18: " << fixed(r.base_parameters / 1e6, 2) << " M parameters ("
          << r.base_parameters << ")\n"
          << "SiRIIB overhead: " << fixed(100.0 * r.parameter_overhead(), 2) << "% parameters\n";
}

void cmd_ablate(RunContext& run) {
  const auto data = load_datasets(run.config);
  const auto attacks = attacks_from(run.config, "ablate_attacks");
  const auto bs = run.config.get_int("eval_batch_size", 128);
  const auto lambdas = run.config.get_list("ablate.lambda1", {});
  const auto projections = run.config.get_list("ablate.num_proj", {});
  require(!lambdas.empty() || !projections.empty(), ErrorCode::kConfig,
          "ablate: give --lambda1 and/or --num-proj values");

  auto sweep = [&](const std::string& key, const std::vector<std::string>& values,
                   const std::string& header, const std::string& stem) {
    ResultsTable table;
    table.title = "Ablation over " + header + " (%)";
    table.row_header = header;
    table.columns = {"Clean"};
    for (const auto& a : attacks) table.columns.push_back(display_name(a));
    for (const auto& v : values) {
      auto cfg = run.config;
      cfg.set(key, v);
      cfg.set("siriib", "true");
      const auto tag = key + "=" + v;
      auto model = train_model(run, descriptor_from(cfg), train_config_from(cfg), data.train, tag);
      auto acc = evaluate_robustness(model, attacks, data.test, bs, seed_of(cfg));
      std::vector<double> row{acc.clean};
      for (const auto& [name, value] : acc.robust) row.push_back(value);
      table.add_row(v, row);
    }
    emit(run, table, stem);
  };
  const bool both = !lambdas.empty() && !projections.empty();
  if (!lambdas.empty()) sweep("lambda1", lambdas, "lambda1", both ? "results-lambda1" : "results");
  if (!projections.empty()) {
    sweep("num_proj", projections, "# of p_i", both ? "results-num-proj" : "results");
  }
}

}  // namespace siriib::cli
