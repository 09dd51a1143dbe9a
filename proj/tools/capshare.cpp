#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "capshare/commands.hpp"

using capshare::RunConfig;

namespace {

const std::vector<std::string> kPanelKeys{"panel", "factors", "factor_names", "from", "to", "max_portfolios", "panel_label"};

std::map<std::string, std::vector<std::string>> command_keys() {
  auto with_panel = [](std::vector<std::string> extra) {
    std::vector<std::string> k = kPanelKeys;
    k.insert(k.end(), extra.begin(), extra.end());
    return k;
  };
  return {
      {"interpolate",
       {"labour_share", "labour_share_divisor", "compensation", "personal_income", "opc", "element", "objective", "grid_lo",
        "grid_hi", "grid_n"}},
      {"factors", {"ks", "ks_column", "horizon", "include_sigma2", "fmp_base", "fmp_instruments"}},
      {"fmb", with_panel({})},
      {"fmb-boot", with_panel({"n_sims", "block_ts", "block_cs"})},
      {"rolling-fmb", with_panel({"window"})},
      {"btvbsv", with_panel({"priors", "training_years", "n_iter", "burn", "thin", "prior_only", "store_paths", "restart"})},
      {"mgarch", with_panel({"factor", "return_series", "window", "max_iter", "fix_lambda1"})},
      {"lrr", {"factors"}},
      {"ols", {"y_file", "y_column", "x_file", "x_columns", "y_transform", "demean", "intercept"}},
  };
}

const std::map<std::string, std::string> kHelp{
    {"interpolate", "Chow-Lin interpolation of the quarterly capital share to months"},
    {"factors", "capital-share growth factor, its conditional second moment and optional mimicking portfolio"},
    {"fmb", "Fama-MacBeth two-pass estimation"},
    {"fmb-boot", "Fama-MacBeth with block-bootstrap percentile intervals"},
    {"rolling-fmb", "rolling-window Fama-MacBeth risk prices"},
    {"btvbsv", "Gibbs sampler for time-varying betas with stochastic volatility"},
    {"mgarch", "full-sample and rolling multiplicative GARCH"},
    {"lrr", "long-run-risks coefficients, loadings and premiums"},
    {"ols", "OLS of one dated series on others"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capshare: capital-share asset-pricing toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", capshare::kVersion);

  struct Sub {
    CLI::App* app;
    std::string config_path;
    std::string out_dir;
    std::string seed;
    std::string workers;
    std::vector<std::string> sets;
    std::map<std::string, std::string> values;
  };
  std::map<std::string, Sub> subs;
  for (const auto& [name, keys] : command_keys()) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, kHelp.at(name));
    s.app->add_option("--config", s.config_path, "flat key = value config file")->check(CLI::ExistingFile);
    s.app->add_option("--out", s.out_dir, "output directory");
    s.app->add_option("--seed", s.seed, "random seed (default 0)");
    s.app->add_option("--workers", s.workers, "worker threads (default 1)");
    s.app->add_option("--set", s.sets, "extra key=value settings, e.g. hyper.a_beta=4 or lrr.psi=2");
    for (const auto& k : keys) s.values[k];
    for (auto& [k, v] : s.values) s.app->add_option("--" + k, v);
  }
  std::string manifest, replay_out = "replay";
  CLI::App* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("--manifest", manifest, "manifest.json from a previous run")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (replay->parsed()) return capshare::replay_manifest(manifest, replay_out, std::cerr);

  for (auto& [name, s] : subs) {
    if (!s.app->parsed()) continue;
    RunConfig cfg;
    try {
      if (!s.config_path.empty()) cfg = capshare::load_config(s.config_path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    if (cfg.has("command") && cfg.get("command") != name) {
      std::cerr << "error: config was written for '" << cfg.get("command") << "', not '" << name << "'\n";
      return 2;
    }
    cfg.values.erase("command");
    for (const auto& [k, v] : s.values)
      if (!v.empty()) cfg.set(k, v);
    for (const auto& kv : s.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
        return 2;
      }
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!s.seed.empty()) cfg.set("seed", s.seed);
    if (!s.workers.empty()) cfg.set("workers", s.workers);
    if (!cfg.has("seed")) cfg.set("seed", "0");
    if (!s.out_dir.empty()) cfg.set("out_dir", s.out_dir);
    return capshare::run_command(name, cfg, std::cerr);
  }
  return 2;
}
