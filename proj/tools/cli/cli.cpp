#include "cli.hpp"

#include "commands.hpp"
#include "siriib/error.hpp"

#include <CLI11.hpp>

#include <functional>
#include <map>
#include <ostream>

namespace siriib::cli {
namespace {

constexpr const char* kPrecedence =
    "Settings are resolved as: built-in defaults < --config file < --set key=value < "
    "dedicated flags. The resolved settings are written to <run dir>/config.txt and can be "
    "passed back with --config to repeat a run.";

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_root = "runs";
  std::optional<int64_t> seed;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::optional<int64_t> epochs;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "flat key = value settings file");
  cmd->add_option("--set", c.overrides, "override one setting (key=value), repeatable");
  cmd->add_option("--out", c.out_root, "root directory for run directories")->capture_default_str();
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--data", c.data, "'synthetic' or a directory holding the CIFAR-10 .bin files");
  cmd->add_option("--epochs", c.epochs, "training epochs");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Singular-value regularized information bottleneck experiments", "siriib"};
  app.footer(kPrecedence);
  app.require_subcommand(1);

  Common common;
  std::string lambda1_list, num_proj_list, attack_list, archive;
  bool export_archive = false;

  using Handler = std::function<void(RunContext&)>;
  std::map<CLI::App*, Handler> handlers;
  auto add = [&](const std::string& name, const std::string& help, Handler h) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    handlers[cmd] = std::move(h);
    return cmd;
  };

  add("train", "adversarially train a model and evaluate it", cmd_train);
  auto* eval = add("attack-eval", "robust accuracy under a list of attacks", cmd_attack_eval);
  eval->add_option("--checkpoint", common.checkpoint, "model to evaluate (trained if absent)");
  eval->add_option("--attacks", attack_list, "comma-separated attacks, e.g. pgd20,cw100");
  eval->add_option("--archive", archive, "evaluate externally generated examples (<stem>.adv)");
  eval->add_flag("--export-archive", export_archive, "write the generated examples as archives");
  auto* swap = add("svd-swap", "accuracy after swapping in clean singular values", cmd_svd_swap);
  swap->add_option("--checkpoint", common.checkpoint, "model to attack (trained if absent)");
  swap->add_option("--attacks", attack_list, "comma-separated attacks");
  auto* viz = add("sr-visualize", "images of x, x_adv, x_avg and difference maps", cmd_sr_visualize);
  viz->add_option("--checkpoint", common.checkpoint, "SiRIIB model (trained if absent)");
  auto* grey = add("grey-box", "isolated SR front end against a bare backbone", cmd_grey_box);
  grey->add_option("--checkpoint", common.checkpoint, "bare backbone (trained if absent)");
  add("param-count", "parameter and multiply-add counts", cmd_param_count);
  auto* ablate = add("ablate", "sweep lambda1 and/or the number of projections", cmd_ablate);
  ablate->add_option("--lambda1", lambda1_list, "comma-separated lambda1 values");
  ablate->add_option("--num-proj", num_proj_list, "comma-separated projection counts (1-3)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    Config config = default_config();
    if (!common.config_path.empty()) config.merge(Config::load(common.config_path));
    for (const auto& o : common.overrides) config.apply_override(o);
    if (common.seed) config.set("seed", std::to_string(*common.seed));
    if (common.data) config.set("data", *common.data);
    if (common.epochs) config.set("epochs", std::to_string(*common.epochs));
    if (common.checkpoint) config.set("checkpoint", *common.checkpoint);
    if (!attack_list.empty()) {
      config.set(chosen->get_name() == "svd-swap" ? "swap_attacks" : "attacks", attack_list);
    }
    if (!archive.empty()) config.set("archive", archive);
    if (export_archive) config.set("export_archive", "true");
    if (!lambda1_list.empty()) config.set("ablate.lambda1", lambda1_list);
    if (!num_proj_list.empty()) config.set("ablate.num_proj", num_proj_list);

    const auto seed = static_cast<uint64_t>(config.get_int("seed", 0));
    RunContext ctx{config, make_run_dir(common.out_root, chosen->get_name(), seed), out};
    config.save(ctx.dir / "config.txt");
    out << "run directory: " << ctx.dir.string() << '\n';
    handlers.at(chosen)(ctx);
    return kExitOk;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace siriib::cli
