#pragma once

#include <cstdint>

#include "capshare/factors.hpp"
#include "capshare/rng.hpp"

namespace capshare {

struct FirstPass {
  MatrixXd betas;      // N x (K+1): constant then factor loadings
  MatrixXd residuals;  // N x T
};

struct FmbResult {
  VectorXd lambda;     // K+1
  VectorXd lambda_se;  // Fama-MacBeth standard errors, std(lambda_t)/sqrt(T)
  MatrixXd lambda_t;   // T x (K+1)
  MatrixXd betas;      // N x (K+1)
  double r2_bar = 0.0;
  VectorXd per_period_r2;
};

/// Intersects a panel and a factor set on their common months.
std::pair<ReturnPanel, FactorSet> align(const ReturnPanel& panel, const FactorSet& factors);

FirstPass first_pass(const MatrixXd& returns, const MatrixXd& factors);
FirstPass first_pass(const ReturnPanel& panel, const FactorSet& factors);

FmbResult second_pass(const MatrixXd& returns, const MatrixXd& betas);
inline FmbResult second_pass(const ReturnPanel& panel, const MatrixXd& betas) {
  return second_pass(panel.returns, betas);
}

FmbResult fama_macbeth(const MatrixXd& returns, const MatrixXd& factors);

/// Block start picks for a length-n axis cut into ceil(n/L) consecutive blocks.
std::vector<Eigen::Index> draw_blocks(Eigen::Index n, Eigen::Index block_len, Rng& rng);
/// Concatenates the picked blocks (last block possibly short) and truncates to n.
std::vector<Eigen::Index> assemble_blocks(Eigen::Index n, Eigen::Index block_len, const std::vector<Eigen::Index>& picks);
std::vector<Eigen::Index> block_indices(Eigen::Index n, Eigen::Index block_len, Rng& rng);

VectorXd block_resample(const VectorXd& series, Eigen::Index block_len, Rng& rng);
/// Resamples time blocks jointly across rows (time along columns).
MatrixXd block_resample_panel(const MatrixXd& panel, Eigen::Index block_len, Rng& rng);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapOptions {
  int n_sims = 10000;
  int block_ts = 0;  // 0: round(T^(1/5))
  int block_cs = 5;  // 0 disables the cross-sectional stage
  std::uint64_t seed = 0;
  int workers = 1;
};

struct BootstrapResult {
  FmbResult point;
  MatrixXd draws;  // successful replications x (K+2): lambda then r2_bar
  std::vector<Interval> ci95;
  std::vector<Interval> ci90;
  std::vector<std::string> stars;
  int n_sims = 0;
  int failed = 0;
  int block_ts = 0;
  int block_cs = 0;
  std::uint64_t seed = 0;
};

BootstrapResult fmb_bootstrap(const MatrixXd& returns, const MatrixXd& factors, const BootstrapOptions& opts);
BootstrapResult fmb_bootstrap(const ReturnPanel& panel, const FactorSet& factors, const BootstrapOptions& opts);

/// "**" when 0 lies outside the 95% interval, "*" when outside the 90% one.
std::string significance_stars(const Interval& ci95, const Interval& ci90);

struct RollingFmbRow {
  MonthIndex date = 0;  // window end
  VectorXd lambda;
  VectorXd lambda_se;
  MatrixXd betas;
  double r2_bar = 0.0;
};

std::vector<RollingFmbRow> rolling_fmb(const ReturnPanel& panel, const FactorSet& factors, int window = 60,
                                       int workers = 1);

struct ScatterRow {
  std::string portfolio;
  double mean_return;
  double beta;
  double fitted;
  double r2;
};

std::vector<ScatterRow> beta_scatter(const ReturnPanel& panel, const MatrixXd& betas);

}  // namespace capshare
