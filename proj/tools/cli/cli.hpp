#pragma once

// Command-line front end. Every subcommand resolves a flat configuration
// (defaults < --config file < --set overrides < dedicated flags), writes it
// into a fresh run directory and runs one experiment there.

#include "siriib/attacks.hpp"
#include "siriib/config.hpp"
#include "siriib/data.hpp"
#include "siriib/model.hpp"
#include "siriib/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace siriib::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Parses `args` (without the program name) and runs the chosen subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Built-in defaults for every key the tool reads.
Config default_config();

ArchitectureDescriptor descriptor_from(const Config& config);
TrainConfig train_config_from(const Config& config);
/// Attack names from a comma-separated key; `attack_eps`, when set, overrides
/// every epsilon.
std::vector<AttackConfig> attacks_from(const Config& config, const std::string& key);

struct Datasets {
  ImageBatch train;
  ImageBatch test;
};
/// `data = synthetic` or a directory with the CIFAR-10 binary files.
Datasets load_datasets(const Config& config);

/// <root>/<command>-<YYYYmmdd-HHMMSS>-s<seed>, made unique with a suffix.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   uint64_t seed);

}  // namespace siriib::cli
