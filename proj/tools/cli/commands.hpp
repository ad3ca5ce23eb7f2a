#pragma once

#include "siriib/config.hpp"

#include <filesystem>
#include <iosfwd>

namespace siriib::cli {

struct RunContext {
  Config config;
  std::filesystem::path dir;
  std::ostream& out;
};

void cmd_train(RunContext& run);
void cmd_attack_eval(RunContext& run);
void cmd_svd_swap(RunContext& run);
void cmd_sr_visualize(RunContext& run);
void cmd_grey_box(RunContext& run);
void cmd_param_count(RunContext& run);
void cmd_ablate(RunContext& run);

}  // namespace siriib::cli
