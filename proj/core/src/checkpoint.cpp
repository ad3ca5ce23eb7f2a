#include "siriib/checkpoint.hpp"

#include "siriib/error.hpp"

#include <cstring>
#include <fstream>

namespace siriib {
namespace {

constexpr char kMagic[8] = {'S', 'I', 'R', 'I', 'I', 'B', 'C', 'K'};

nlohmann::json plan_to_json(const FeatureInjectionPlan& plan) {
  auto arr = nlohmann::json::array();
  for (const auto& e : plan.entries) arr.push_back({{"tap", e.tap}, {"projection", e.projection}});
  return arr;
}

FeatureInjectionPlan plan_from_json(const nlohmann::json& j) {
  FeatureInjectionPlan plan;
  for (const auto& e : j) plan.entries.push_back({e.at("tap").get<int>(), e.at("projection").get<int>()});
  return plan;
}

struct TensorRecord {
  std::string name;
  std::string group;
  torch::Tensor tensor;
};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: fail(ErrorCode::kUnsupported, "checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  fail(ErrorCode::kFormat, "checkpoint: unknown dtype '" + name + "'");
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorCode::kFormat, "checkpoint: truncated file");
  return v;
}

NamedTensors named_state(const torch::nn::Module& module) {
  NamedTensors out;
  for (const auto& p : module.named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : module.named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

}  // namespace

nlohmann::json to_json(const ArchitectureDescriptor& d) {
  return {{"backbone", d.backbone},
          {"num_classes", d.num_classes},
          {"base_width", d.base_width},
          {"input_resolution", d.input_resolution},
          {"siriib", d.siriib},
          {"scales", d.scales},
          {"plan", plan_to_json(d.plan)}};
}

ArchitectureDescriptor descriptor_from_json(const nlohmann::json& j) {
  ArchitectureDescriptor d;
  d.backbone = j.at("backbone").get<std::string>();
  d.num_classes = j.at("num_classes").get<int64_t>();
  d.base_width = j.at("base_width").get<int64_t>();
  d.input_resolution = j.at("input_resolution").get<int64_t>();
  d.siriib = j.at("siriib").get<bool>();
  d.scales = j.at("scales").get<std::vector<int64_t>>();
  d.plan = plan_from_json(j.at("plan"));
  return d;
}

Checkpoint capture_checkpoint(const Classifier& model, const torch::optim::SGD* optimizer,
                              int64_t epoch, uint64_t seed) {
  torch::NoGradGuard no_grad;
  Checkpoint ck;
  ck.architecture = model->descriptor();
  for (auto& [name, t] : named_state(*model)) ck.state.emplace_back(name, t.detach().clone());
  ck.epoch = epoch;
  ck.seed = seed;
  ck.mean = model->backbone->options().mean;
  ck.stddev = model->backbone->options().stddev;
  if (optimizer != nullptr) {
    const auto& opts = static_cast<const torch::optim::SGDOptions&>(
        optimizer->param_groups().front().options());
    ck.optimizer = {opts.lr(), opts.momentum(), opts.weight_decay()};
    const auto& states = optimizer->state();
    for (const auto& p : model->named_parameters()) {
      auto it = states.find(p.value().unsafeGetTensorImpl());
      if (it == states.end()) continue;
      const auto& s = static_cast<const torch::optim::SGDParamState&>(*it->second);
      if (s.momentum_buffer().defined()) {
        ck.optimizer_state.emplace_back(p.key() + "#momentum", s.momentum_buffer().clone());
      }
    }
  }
  return ck;
}

void restore_model(Classifier& model, const Checkpoint& checkpoint) {
  require(model->descriptor() == checkpoint.architecture, ErrorCode::kDescriptorMismatch,
          "checkpoint architecture " + to_json(checkpoint.architecture).dump() +
              " does not match model " + to_json(model->descriptor()).dump());
  auto target = named_state(*model);
  require(target.size() == checkpoint.state.size(), ErrorCode::kDescriptorMismatch,
          "checkpoint holds " + std::to_string(checkpoint.state.size()) + " tensors, model has " +
              std::to_string(target.size()));
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < target.size(); ++i) {
    const auto& [name, dst] = target[i];
    const auto& [src_name, src] = checkpoint.state[i];
    require(name == src_name && dst.sizes() == src.sizes(), ErrorCode::kDescriptorMismatch,
            "checkpoint tensor '" + src_name + "' does not match model tensor '" + name + "'");
    dst.copy_(src);
  }
}

void restore_optimizer(torch::optim::SGD& optimizer, const Classifier& model,
                       const Checkpoint& checkpoint) {
  auto& opts = static_cast<torch::optim::SGDOptions&>(optimizer.param_groups().front().options());
  opts.lr(checkpoint.optimizer.learning_rate);
  opts.momentum(checkpoint.optimizer.momentum);
  opts.weight_decay(checkpoint.optimizer.weight_decay);
  std::map<std::string, torch::Tensor> buffers(checkpoint.optimizer_state.begin(),
                                               checkpoint.optimizer_state.end());
  for (const auto& p : model->named_parameters()) {
    auto it = buffers.find(p.key() + "#momentum");
    if (it == buffers.end()) continue;
    auto state = std::make_unique<torch::optim::SGDParamState>();
    state->momentum_buffer(it->second.clone());
    optimizer.state()[p.value().unsafeGetTensorImpl()] = std::move(state);
  }
}

Classifier build_model(const Checkpoint& checkpoint) {
  Classifier model(checkpoint.architecture);
  restore_model(model, checkpoint);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  std::vector<TensorRecord> records;
  for (const auto& [n, t] : ck.state) records.push_back({n, "state", t.contiguous()});
  for (const auto& [n, t] : ck.optimizer_state) records.push_back({n, "optimizer", t.contiguous()});

  nlohmann::json header{{"architecture", to_json(ck.architecture)},
                        {"epoch", ck.epoch},
                        {"seed", ck.seed},
                        {"normalization", {{"mean", ck.mean}, {"std", ck.stddev}}},
                        {"optimizer",
                         {{"lr", ck.optimizer.learning_rate},
                          {"momentum", ck.optimizer.momentum},
                          {"weight_decay", ck.optimizer.weight_decay}}}};
  auto dir = nlohmann::json::array();
  for (const auto& r : records) {
    dir.push_back({{"name", r.name},
                   {"group", r.group},
                   {"dtype", dtype_name(r.tensor.scalar_type())},
                   {"shape", r.tensor.sizes().vec()},
                   {"bytes", r.tensor.nbytes()}});
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + tmp);
    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, ck.format_version);
    write_pod<uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& r : records) {
      out.write(static_cast<const char*>(r.tensor.data_ptr()),
                static_cast<std::streamsize>(r.tensor.nbytes()));
    }
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorCode::kFormat,
          path.string() + " is not a checkpoint");
  Checkpoint ck;
  ck.format_version = read_pod<uint32_t>(in);
  require(ck.format_version == Checkpoint::kFormatVersion, ErrorCode::kVersionMismatch,
          "checkpoint format version " + std::to_string(ck.format_version) +
              " is not supported (expected " + std::to_string(Checkpoint::kFormatVersion) + ")");
  const auto header_len = read_pod<uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<bool>(in), ErrorCode::kFormat, "checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ck.architecture = descriptor_from_json(header.at("architecture"));
    ck.epoch = header.at("epoch").get<int64_t>();
    ck.seed = header.at("seed").get<uint64_t>();
    ck.mean = header.at("normalization").at("mean").get<std::array<double, 3>>();
    ck.stddev = header.at("normalization").at("std").get<std::array<double, 3>>();
    const auto& o = header.at("optimizer");
    ck.optimizer = {o.at("lr").get<double>(), o.at("momentum").get<double>(),
                    o.at("weight_decay").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: missing or invalid header field: ") + e.what());
  }

  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, dtype_from_name(entry.at("dtype").get<std::string>()));
    const auto bytes = entry.at("bytes").get<size_t>();
    require(bytes == t.nbytes(), ErrorCode::kFormat, "checkpoint: tensor size mismatch");
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    require(static_cast<bool>(in), ErrorCode::kFormat, "checkpoint: truncated tensor data");
    auto name = entry.at("name").get<std::string>();
    if (entry.at("group").get<std::string>() == "state") {
      ck.state.emplace_back(std::move(name), std::move(t));
    } else {
      ck.optimizer_state.emplace_back(std::move(name), std::move(t));
    }
  }
  return ck;
}

}  // namespace siriib
