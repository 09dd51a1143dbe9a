#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "capshare/fmb.hpp"
#include "capshare/io.hpp"

namespace capshare {

inline constexpr const char* kVersion = "1.0.0";

const std::vector<std::string>& command_names();

/// Runs one subcommand. Outputs go to `out_dir` (default "."): result CSVs,
/// run.cfg and manifest.json. On failure error.json is written and a non-zero
/// status returned; nothing is thrown.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log);

/// Re-runs the command recorded in a manifest, optionally into another directory.
int replay_manifest(const std::string& manifest_path, const std::string& out_dir, std::ostream& log);

/// Risk-price table: a constant row, one row per factor and an R-bar-squared row,
/// each followed by its bracketed 95% interval, one column per panel.
std::string risk_price_table(const std::vector<std::pair<std::string, BootstrapResult>>& columns,
                             const std::vector<std::string>& factor_names);

}  // namespace capshare
