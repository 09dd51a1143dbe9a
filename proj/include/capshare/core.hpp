#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "capshare/errors.hpp"

namespace capshare {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Frequency { Monthly, Quarterly };
enum class Units { Percent, Ratio, Level };

std::string_view to_string(Frequency f);
std::string_view to_string(Units u);
Units units_from_string(std::string_view s);

/// Month count since year 0: year*12 + (month-1).
using MonthIndex = long;

inline MonthIndex make_month(int year, int month) { return static_cast<MonthIndex>(year) * 12 + (month - 1); }
inline int year_of(MonthIndex m) { return static_cast<int>(m >= 0 ? m / 12 : (m - 11) / 12); }
inline int month_of(MonthIndex m) { return static_cast<int>(m - static_cast<MonthIndex>(year_of(m)) * 12) + 1; }
/// Quarter q (1..4) is stored as its first month.
inline MonthIndex make_quarter(int year, int quarter) { return make_month(year, 3 * (quarter - 1) + 1); }

inline int step_months(Frequency f) { return f == Frequency::Monthly ? 1 : 3; }

std::string format_yyyymm(MonthIndex m);

struct TimeSeries {
  MonthIndex start = 0;
  Frequency frequency = Frequency::Monthly;
  VectorXd values;
  Units units = Units::Ratio;

  TimeSeries() = default;
  TimeSeries(MonthIndex start_, Frequency f, VectorXd v, Units u = Units::Ratio);

  Eigen::Index size() const { return values.size(); }
  MonthIndex date(Eigen::Index i) const { return start + i * step_months(frequency); }
  MonthIndex end() const { return date(size() - 1); }
  /// Index of calendar period `m`, or -1 when outside the span or off-grid.
  Eigen::Index index_of(MonthIndex m) const;
  /// Sub-series covering [from, to] inclusive.
  TimeSeries slice(MonthIndex from, MonthIndex to) const;
};

struct ReturnPanel {
  std::vector<MonthIndex> dates;
  std::vector<std::string> names;
  MatrixXd returns;  // N x T, percent

  ReturnPanel() = default;
  ReturnPanel(std::vector<MonthIndex> dates_, std::vector<std::string> names_, MatrixXd r);

  Eigen::Index n_assets() const { return returns.rows(); }
  Eigen::Index n_periods() const { return returns.cols(); }
  ReturnPanel columns(Eigen::Index first, Eigen::Index count) const;
};

struct OlsFit {
  VectorXd coefficients;
  VectorXd stderrs;
  VectorXd tstats;
  VectorXd pvalues;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  double sigma2 = 0.0;
  VectorXd residuals;
  VectorXd fitted;
  MatrixXd covariance;
};

/// OLS of y on X (with a leading constant column when `intercept`).
/// With an intercept r2 is centered; without one it is uncentered.
OlsFit ols(const VectorXd& y, const MatrixXd& X, bool intercept = true);

struct Ar1Fit {
  double intercept = 0.0;
  double rho = 0.0;
  double rho_stderr = 0.0;
  double resid_variance = 0.0;
  VectorXd residuals;
};

Ar1Fit ar1_fit(const VectorXd& s, bool intercept = false);
inline Ar1Fit ar1_fit(const TimeSeries& s, bool intercept = false) { return ar1_fit(s.values, intercept); }

struct DateRange {
  MonthIndex from;
  MonthIndex to;
};

struct DescriptiveRow {
  DateRange window;
  Eigen::Index n = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
  std::optional<double> sharpe;
};

std::vector<DescriptiveRow> descriptive_stats(const TimeSeries& s, const std::vector<DateRange>& windows);

/// Empirical quantile with linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> v, double p);
double mean(const VectorXd& v);
double sample_std(const VectorXd& v);

std::pair<TimeSeries, TimeSeries> align(const TimeSeries& a, const TimeSeries& b);

}  // namespace capshare
