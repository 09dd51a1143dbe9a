#pragma once

#include <map>
#include <string>

#include "capshare/core.hpp"

namespace capshare {

struct FactorSet {
  std::vector<MonthIndex> dates;
  std::vector<std::string> names;
  MatrixXd values;  // T x K, one column per factor

  FactorSet() = default;
  FactorSet(std::vector<MonthIndex> dates_, std::vector<std::string> names_, MatrixXd v);

  Eigen::Index n_periods() const { return values.rows(); }
  Eigen::Index n_factors() const { return values.cols(); }
  VectorXd column(const std::string& name) const;
  FactorSet rows(Eigen::Index first, Eigen::Index count) const;
  static FactorSet from_series(const std::vector<std::pair<std::string, TimeSeries>>& cols);
};

TimeSeries capital_share(const TimeSeries& labour_share);

enum class GrowthMode { Monthly, Quarterly };

/// KS_{t+h}/KS_t, minus one in monthly mode. Dated at t, length len-h, ratio units.
TimeSeries ks_growth_factor(const TimeSeries& KS, int horizon, GrowthMode mode = GrowthMode::Monthly);

TimeSeries to_percent(const TimeSeries& s);

/// (rho F_t)^2 + sigma2, or (rho F_t)^2 when `include_sigma2` is false.
VectorXd conditional_second_moment(const VectorXd& F, double rho, double sigma2, bool include_sigma2 = true);

struct Variability {
  TimeSeries series;
  Ar1Fit ar1;
};

/// One-step conditional second moment of an AR(1) (no intercept) fitted to F.
Variability ks_variability(const TimeSeries& F_KS, bool include_sigma2 = true);

struct MimickingPortfolio {
  TimeSeries fmp;
  OlsFit fit;
  Eigen::Index n_base = 0;
  Eigen::Index n_instruments = 0;
};

/// Regresses factor_t on [1, x_t, z_{t-1}] and returns a + b'x_t for every t.
/// `instruments` holds z aligned with the factor; the one-period lag is applied
/// here, so the fit uses rows 1..T-1 when instruments are present.
MimickingPortfolio mimicking_portfolio(const TimeSeries& factor, const MatrixXd& base_returns,
                                       const MatrixXd& instruments);

}  // namespace capshare
