#include "capshare/core.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>

namespace capshare {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionError: return "DimensionError";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::FrequencyError: return "FrequencyError";
    case ErrorKind::NonStationary: return "NonStationary";
    case ErrorKind::SearchFailed: return "SearchFailed";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidBlock: return "InvalidBlock";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::ParameterError: return "ParameterError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string_view to_string(Frequency f) { return f == Frequency::Monthly ? "monthly" : "quarterly"; }

std::string_view to_string(Units u) {
  switch (u) {
    case Units::Percent: return "percent";
    case Units::Ratio: return "ratio";
    case Units::Level: return "level";
  }
  return "ratio";
}

Units units_from_string(std::string_view s) {
  if (s == "percent") return Units::Percent;
  if (s == "ratio") return Units::Ratio;
  if (s == "level") return Units::Level;
  throw Error(ErrorKind::InvalidInput, "unknown units '" + std::string(s) + "'");
}

std::string format_yyyymm(MonthIndex m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02d", year_of(m), month_of(m));
  return buf;
}

TimeSeries::TimeSeries(MonthIndex start_, Frequency f, VectorXd v, Units u)
    : start(start_), frequency(f), values(std::move(v)), units(u) {
  if (values.size() < 1) throw Error(ErrorKind::InvalidInput, "time series must have at least one value");
  if (!values.allFinite()) throw Error(ErrorKind::InvalidInput, "time series contains missing or non-finite values");
  if (f == Frequency::Quarterly && (month_of(start) - 1) % 3 != 0)
    throw Error(ErrorKind::FrequencyError, "quarterly series must start on a quarter's first month");
}

Eigen::Index TimeSeries::index_of(MonthIndex m) const {
  const long step = step_months(frequency);
  const long off = m - start;
  if (off < 0 || off % step != 0) return -1;
  const long i = off / step;
  return i < size() ? i : -1;
}

TimeSeries TimeSeries::slice(MonthIndex from, MonthIndex to) const {
  const Eigen::Index i0 = index_of(from);
  const Eigen::Index i1 = index_of(to);
  if (i0 < 0 || i1 < 0 || i1 < i0) throw Error(ErrorKind::EmptyWindow, "window outside the series span");
  return TimeSeries(from, frequency, values.segment(i0, i1 - i0 + 1), units);
}

ReturnPanel::ReturnPanel(std::vector<MonthIndex> dates_, std::vector<std::string> names_, MatrixXd r)
    : dates(std::move(dates_)), names(std::move(names_)), returns(std::move(r)) {
  if (returns.rows() < 2 || returns.cols() < 2)
    throw Error(ErrorKind::DimensionError, "panel needs N >= 2 portfolios and T >= 2 periods");
  if (static_cast<Eigen::Index>(dates.size()) != returns.cols() ||
      static_cast<Eigen::Index>(names.size()) != returns.rows())
    throw Error(ErrorKind::DimensionError, "panel labels do not match the return matrix");
}

ReturnPanel ReturnPanel::columns(Eigen::Index first, Eigen::Index count) const {
  std::vector<MonthIndex> d(dates.begin() + first, dates.begin() + first + count);
  return ReturnPanel(std::move(d), names, returns.middleCols(first, count));
}

OlsFit ols(const VectorXd& y, const MatrixXd& X, bool intercept) {
  const Eigen::Index n = y.size();
  if (X.rows() != n) throw Error(ErrorKind::DimensionError, "ols: rows(X) != len(y)");
  const Eigen::Index p = X.cols() + (intercept ? 1 : 0);
  if (p == 0) throw Error(ErrorKind::DimensionError, "ols: empty design");
  if (n < p + 1) throw Error(ErrorKind::DimensionError, "ols: need more observations than regressors");

  MatrixXd D(n, p);
  if (intercept) {
    D.col(0).setOnes();
    D.rightCols(X.cols()) = X;
  } else {
    D = X;
  }

  Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
  qr.setThreshold(1e-12);
  if (qr.rank() < p) throw Error(ErrorKind::SingularDesign, "ols: design matrix is rank deficient");

  OlsFit fit;
  fit.coefficients = qr.solve(y);
  fit.fitted = D * fit.coefficients;
  fit.residuals = y - fit.fitted;
  const double ssr = fit.residuals.squaredNorm();
  const double dof = static_cast<double>(n - p);
  fit.sigma2 = ssr / dof;

  MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(p, p));
  MatrixXd xtx_inv_perm = Rinv * Rinv.transpose();
  fit.covariance = qr.colsPermutation() * xtx_inv_perm * qr.colsPermutation().transpose() * fit.sigma2;

  fit.stderrs = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.tstats.resize(p);
  fit.pvalues.resize(p);
  boost::math::students_t tdist(dof);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (fit.stderrs[j] > 0) {
      fit.tstats[j] = fit.coefficients[j] / fit.stderrs[j];
      fit.pvalues[j] = 2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(fit.tstats[j])));
    } else {
      fit.tstats[j] = std::numeric_limits<double>::quiet_NaN();
      fit.pvalues[j] = std::numeric_limits<double>::quiet_NaN();
    }
  }

  const double sst = intercept ? (y.array() - y.mean()).square().sum() : y.squaredNorm();
  fit.r2 = sst > 0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
  const double n_eff = intercept ? static_cast<double>(n - 1) : static_cast<double>(n);
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * n_eff / dof;
  return fit;
}

Ar1Fit ar1_fit(const VectorXd& s, bool intercept) {
  const Eigen::Index n = s.size();
  if (n < 3) throw Error(ErrorKind::InsufficientData, "ar1_fit: need at least 3 observations");
  if (!s.allFinite()) throw Error(ErrorKind::InvalidInput, "ar1_fit: non-finite input");
  const VectorXd y = s.tail(n - 1);
  const MatrixXd x = s.head(n - 1);

  Ar1Fit fit;
  if (intercept) {
    const OlsFit o = ols(y, x, true);
    fit.intercept = o.coefficients[0];
    fit.rho = o.coefficients[1];
    fit.rho_stderr = o.stderrs[1];
    fit.resid_variance = o.sigma2;
    fit.residuals = o.residuals;
    return fit;
  }
  const double sxx = x.squaredNorm();
  if (sxx == 0.0) {
    // An all-zero series has no information about rho; report the degenerate fit.
    fit.residuals = y;
    fit.resid_variance = y.squaredNorm() / static_cast<double>(n - 2);
    return fit;
  }
  fit.rho = x.col(0).dot(y) / sxx;
  fit.residuals = y - fit.rho * x.col(0);
  fit.resid_variance = fit.residuals.squaredNorm() / static_cast<double>(n - 2);
  fit.rho_stderr = std::sqrt(fit.resid_variance / sxx);
  return fit;
}

double mean(const VectorXd& v) {
  if (v.size() == 0) throw Error(ErrorKind::EmptyWindow, "mean of empty vector");
  return v.mean();
}

double sample_std(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(ErrorKind::EmptyWindow, "quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<DescriptiveRow> descriptive_stats(const TimeSeries& s, const std::vector<DateRange>& windows) {
  std::vector<DescriptiveRow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    const Eigen::Index i0 = s.index_of(w.from);
    const Eigen::Index i1 = s.index_of(w.to);
    if (i0 < 0 || i1 < 0 || i1 < i0)
      throw Error(ErrorKind::EmptyWindow,
                  "window " + format_yyyymm(w.from) + "-" + format_yyyymm(w.to) + " is empty or outside the span");
    const VectorXd x = s.values.segment(i0, i1 - i0 + 1);
    DescriptiveRow row;
    row.window = w;
    row.n = x.size();
    row.mean = x.mean();
    row.median = quantile(std::vector<double>(x.data(), x.data() + x.size()), 0.5);
    row.std = sample_std(x);
    if (row.std > 0) row.sharpe = row.mean / row.std;
    out.push_back(row);
  }
  return out;
}

std::pair<TimeSeries, TimeSeries> align(const TimeSeries& a, const TimeSeries& b) {
  if (a.frequency != b.frequency) throw Error(ErrorKind::FrequencyError, "align: frequency mismatch");
  const MonthIndex from = std::max(a.start, b.start);
  const MonthIndex to = std::min(a.end(), b.end());
  if (to < from) throw Error(ErrorKind::NoOverlap, "align: spans do not overlap");
  if ((from - a.start) % step_months(a.frequency) != 0 || (from - b.start) % step_months(b.frequency) != 0)
    throw Error(ErrorKind::FrequencyError, "align: series are on different calendar grids");
  return {a.slice(from, to), b.slice(from, to)};
}

}  // namespace capshare
