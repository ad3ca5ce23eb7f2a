#include "cli.hpp"

#include "siriib/error.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace siriib::cli {
namespace {

int64_t to_integer(const std::string& text, const std::string& key) {
  try {
    size_t used = 0;
    const auto v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kConfig, key + ": '" + text + "' is not an integer");
}

}  // namespace

Config default_config() {
  return Config::parse(R"(
seed = 0
data = synthetic
train_size = 4096
test_size = 1000
base_width = 64
siriib = true
scales = 32,24,16,8
num_proj = 3
epochs = 10
batch_size = 128
eval_batch_size = 128
lr = 0.1
momentum = 0.9
weight_decay = 5e-4
max_grad_norm = 10
siriib_max_grad_norm = 0.1
lambda1 = 20
lambda2 = 1e-4
train_attack.eps = 8/255
train_attack.alpha = 2/255
train_attack.steps = 10
eval_attacks = pgd20
attacks = pgd20,pgd100,cw100
swap_attacks = pgd20,cw100
swap_clip = false
export_archive = false
viz_count = 8
sr_epochs = 2
sr_lr = 1e-3
grey_attacks = pgd20,cw100
ablate_attacks = pgd20
)");
}

ArchitectureDescriptor descriptor_from(const Config& config) {
  ArchitectureDescriptor d;
  d.backbone = config.get_string("backbone", d.backbone);
  d.num_classes = config.get_int("num_classes", d.num_classes);
  d.base_width = config.get_int("base_width", d.base_width);
  d.siriib = config.get_bool("siriib", d.siriib);
  d.scales.clear();
  for (const auto& s : config.get_list("scales", {"32", "24", "16", "8"})) {
    d.scales.push_back(to_integer(s, "scales"));
  }
  d.plan = FeatureInjectionPlan::shallowest(static_cast<int>(config.get_int("num_proj", 3)));
  try {
    d.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  return d;
}

TrainConfig train_config_from(const Config& config) {
  TrainConfig t;
  t.epochs = static_cast<int>(config.get_int("epochs", t.epochs));
  t.batch_size = config.get_int("batch_size", t.batch_size);
  t.learning_rate = config.get_double("lr", t.learning_rate);
  t.momentum = config.get_double("momentum", t.momentum);
  t.weight_decay = config.get_double("weight_decay", t.weight_decay);
  t.max_grad_norm = config.get_double("max_grad_norm", t.max_grad_norm);
  t.siriib_max_grad_norm = config.get_double("siriib_max_grad_norm", t.siriib_max_grad_norm);
  if (config.contains("milestones")) {
    t.milestones.clear();
    for (const auto& m : config.get_list("milestones", {})) t.milestones.push_back(static_cast<int>(to_integer(m, "milestones")));
  } else {
    t.milestones = TrainConfig::scaled_milestones(t.epochs);
  }
  t.attack.epsilon = config.get_double("train_attack.eps", t.attack.epsilon);
  t.attack.step_size = config.get_double("train_attack.alpha", t.attack.step_size);
  t.attack.steps = static_cast<int>(config.get_int("train_attack.steps", t.attack.steps));
  t.weights.lambda1 = config.get_double("lambda1", t.weights.lambda1);
  t.weights.lambda2 = config.get_double("lambda2", t.weights.lambda2);
  t.seed = static_cast<uint64_t>(config.get_int("seed", 0));
  try {
    t.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  return t;
}

std::vector<AttackConfig> attacks_from(const Config& config, const std::string& key) {
  std::vector<AttackConfig> out;
  for (const auto& name : config.get_list(key, {})) {
    auto a = AttackConfig::from_name(name);
    if (config.contains("attack_eps")) a.epsilon = config.get_double("attack_eps", a.epsilon);
    a.validate();
    out.push_back(a);
  }
  require(!out.empty(), ErrorCode::kConfig, "'" + key + "' lists no attacks");
  return out;
}

Datasets load_datasets(const Config& config) {
  const auto seed = static_cast<uint64_t>(config.get_int("seed", 0));
  const auto train_size = config.get_int("train_size", 4096);
  const auto test_size = config.get_int("test_size", 1000);
  const auto source = config.get_string("data", "synthetic");
  Datasets d;
  if (source == "synthetic") {
    d.train = make_synthetic_cifar(train_size, seed);
    d.test = make_synthetic_cifar(test_size, seed + 1000003);
    return d;
  }
  require(std::filesystem::is_directory(source), ErrorCode::kConfig,
          "data directory '" + source + "' does not exist");
  d.train = load_cifar10({source, Split::kTrain, train_size, true, seed});
  d.test = load_cifar10({source, Split::kTest, test_size, true, seed});
  return d;
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   uint64_t seed) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << command << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-s" << seed;
  auto dir = root / name.str();
  for (int i = 1; std::filesystem::exists(dir); ++i) {
    dir = root / (name.str() + "-" + std::to_string(i));
  }
  std::filesystem::create_directories(dir / "checkpoints");
  std::filesystem::create_directories(dir / "images");
  return dir;
}

}  // namespace siriib::cli
