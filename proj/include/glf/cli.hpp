#pragma once

#include <string>

#include "glf/config.hpp"

namespace glf::cli {

/// Commands write their artifacts under out_dir (created if needed) and
/// throw on failure: ConfigError/IoError/ShapeError for bad input or paths,
/// NumericError when a computation goes non-finite. Every command starts by
/// writing config.resolved and ends with report.json; all wall-clock numbers
/// in a report live under its "timing" key so reruns compare clean.
void cmd_gen_data(const cfg::RunConfig& rc, const std::string& out_dir);
void cmd_train(const cfg::RunConfig& rc, const std::string& out_dir);
void cmd_eval(const cfg::RunConfig& rc, const std::string& out_dir);
void cmd_prune(const cfg::RunConfig& rc, const std::string& out_dir);
void cmd_bench(const cfg::RunConfig& rc, const std::string& out_dir);
void cmd_sweep(const cfg::RunConfig& rc, const std::string& out_dir);

/// Full entry point: parses `<command> --config PATH [--out PATH] [--seed N]`,
/// loads and validates the config, applies overrides, dispatches. Returns
/// 0 on success, 1 on usage/config/input errors, 2 on numerical failure.
int run(int argc, char** argv);

}  // namespace glf::cli
