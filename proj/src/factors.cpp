#include "capshare/factors.hpp"

#include <algorithm>

namespace capshare {

FactorSet::FactorSet(std::vector<MonthIndex> dates_, std::vector<std::string> names_, MatrixXd v)
    : dates(std::move(dates_)), names(std::move(names_)), values(std::move(v)) {
  if (static_cast<Eigen::Index>(dates.size()) != values.rows() ||
      static_cast<Eigen::Index>(names.size()) != values.cols())
    throw Error(ErrorKind::DimensionError, "factor set labels do not match its values");
}

VectorXd FactorSet::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorKind::InvalidInput, "unknown factor '" + name + "'");
  return values.col(it - names.begin());
}

FactorSet FactorSet::rows(Eigen::Index first, Eigen::Index count) const {
  std::vector<MonthIndex> d(dates.begin() + first, dates.begin() + first + count);
  return FactorSet(std::move(d), names, values.middleRows(first, count));
}

FactorSet FactorSet::from_series(const std::vector<std::pair<std::string, TimeSeries>>& cols) {
  if (cols.empty()) throw Error(ErrorKind::DimensionError, "factor set needs at least one column");
  MonthIndex from = cols.front().second.start;
  MonthIndex to = cols.front().second.end();
  for (const auto& [name, s] : cols) {
    if (s.frequency != Frequency::Monthly) throw Error(ErrorKind::FrequencyError, "factor '" + name + "' is not monthly");
    from = std::max(from, s.start);
    to = std::min(to, s.end());
  }
  if (to < from) throw Error(ErrorKind::NoOverlap, "factor columns do not overlap");
  const Eigen::Index T = to - from + 1;
  MatrixXd v(T, static_cast<Eigen::Index>(cols.size()));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    v.col(static_cast<Eigen::Index>(j)) = cols[j].second.slice(from, to).values;
    names.push_back(cols[j].first);
  }
  std::vector<MonthIndex> dates(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) dates[static_cast<std::size_t>(t)] = from + t;
  return FactorSet(std::move(dates), std::move(names), std::move(v));
}

TimeSeries capital_share(const TimeSeries& labour_share) {
  if ((labour_share.values.array() < 0.0).any() || (labour_share.values.array() > 1.0).any())
    throw Error(ErrorKind::InvalidInput, "capital_share: labour share must lie in [0, 1]");
  return TimeSeries(labour_share.start, labour_share.frequency, 1.0 - labour_share.values.array(), Units::Ratio);
}

TimeSeries ks_growth_factor(const TimeSeries& KS, int horizon, GrowthMode mode) {
  if (horizon < 1) throw Error(ErrorKind::ParameterError, "ks_growth_factor: horizon must be >= 1");
  const Eigen::Index n = KS.size();
  if (n <= horizon) throw Error(ErrorKind::InsufficientData, "ks_growth_factor: series shorter than the horizon");
  if ((KS.values.array() <= 0.0).any()) throw Error(ErrorKind::InvalidInput, "ks_growth_factor: KS must be positive");
  const Eigen::Index m = n - horizon;
  VectorXd f = KS.values.tail(m).array() / KS.values.head(m).array();
  if (mode == GrowthMode::Monthly) f.array() -= 1.0;
  return TimeSeries(KS.start, KS.frequency, std::move(f), Units::Ratio);
}

TimeSeries to_percent(const TimeSeries& s) {
  if (s.units == Units::Percent) return s;
  return TimeSeries(s.start, s.frequency, 100.0 * s.values, Units::Percent);
}

VectorXd conditional_second_moment(const VectorXd& F, double rho, double sigma2, bool include_sigma2) {
  VectorXd out = (rho * F).array().square();
  if (include_sigma2) out.array() += sigma2;
  return out;
}

Variability ks_variability(const TimeSeries& F_KS, bool include_sigma2) {
  Variability v;
  v.ar1 = ar1_fit(F_KS.values, false);
  v.series = TimeSeries(F_KS.start, F_KS.frequency,
                        conditional_second_moment(F_KS.values, v.ar1.rho, v.ar1.resid_variance, include_sigma2),
                        F_KS.units);
  return v;
}

MimickingPortfolio mimicking_portfolio(const TimeSeries& factor, const MatrixXd& base_returns,
                                       const MatrixXd& instruments) {
  const Eigen::Index T = factor.size();
  if (base_returns.rows() != T) throw Error(ErrorKind::DimensionError, "mimicking_portfolio: base returns misaligned");
  const Eigen::Index m = base_returns.cols();
  const Eigen::Index p = instruments.size() == 0 ? 0 : instruments.cols();
  if (p > 0 && instruments.rows() != T)
    throw Error(ErrorKind::DimensionError, "mimicking_portfolio: instruments misaligned");

  const Eigen::Index lag = p > 0 ? 1 : 0;
  const Eigen::Index n = T - lag;
  MatrixXd X(n, m + p);
  X.leftCols(m) = base_returns.bottomRows(n);
  if (p > 0) X.rightCols(p) = instruments.topRows(n);

  MimickingPortfolio out;
  out.fit = ols(factor.values.tail(n), X, true);
  out.n_base = m;
  out.n_instruments = p;
  const VectorXd fmp = out.fit.coefficients[0] + (base_returns * out.fit.coefficients.segment(1, m)).array();
  out.fmp = TimeSeries(factor.start, factor.frequency, fmp, factor.units);
  return out;
}

}  // namespace capshare
