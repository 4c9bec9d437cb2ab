#pragma once

#include <cstdint>
#include <filesystem>

#include "config.hpp"

namespace npl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitConfig = 2;

struct RunContext {
  Params params;
  std::filesystem::path out;
};

/// Parameter set, with defaults, for a subcommand name.
Params default_params(const std::string& command);

/// Cross-key checks that can fail before any output is written.
void validate_params(const Params& params);

/// Writes manifest.json into `ctx.out`. Called before any other output.
void write_manifest(const RunContext& ctx);

int cmd_verify(const RunContext& ctx);
int cmd_kernel(const RunContext& ctx);
int cmd_mc_ntk(const RunContext& ctx);
int cmd_variance(const RunContext& ctx);
int cmd_memorise(const RunContext& ctx);
int cmd_train(const RunContext& ctx);

}  // namespace npl::cli
