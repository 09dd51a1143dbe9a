#include "capshare/disaggregation.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "capshare/parallel.hpp"

namespace capshare {

std::string_view to_string(Element e) { return e == Element::First ? "first" : "last"; }
std::string_view to_string(Objective o) { return o == Objective::WLS ? "wls" : "ll"; }

namespace {

void check_rho(double rho) {
  if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::NonStationary, "Chow-Lin requires |rho| < 1");
}

// V = C Sigma C' is an AR(1) covariance in quarters: phi = rho^3, scale 1/(1-rho^2).
// whiten() applies a matrix W with W'W = V^-1 (Prais-Winsten rows, rescaled).
struct QuarterlyAr1 {
  double phi;
  double pw0;    // sqrt(1 - phi^2)
  double scale;  // sqrt((1 - rho^2) / (1 - phi^2))
  double log_det;

  QuarterlyAr1(double rho, Eigen::Index n) {
    phi = rho * rho * rho;
    const double one_m_phi2 = 1.0 - phi * phi;
    const double one_m_rho2 = 1.0 - rho * rho;
    pw0 = std::sqrt(one_m_phi2);
    scale = std::sqrt(one_m_rho2 / one_m_phi2);
    log_det = -static_cast<double>(n) * std::log(one_m_rho2) + static_cast<double>(n - 1) * std::log(one_m_phi2);
  }

  MatrixXd whiten(const MatrixXd& x) const {
    MatrixXd out(x.rows(), x.cols());
    out.row(0) = pw0 * x.row(0);
    for (Eigen::Index t = 1; t < x.rows(); ++t) out.row(t) = x.row(t) - phi * x.row(t - 1);
    return scale * out;
  }

  VectorXd whiten_transpose(const VectorXd& z) const {
    const Eigen::Index n = z.size();
    VectorXd out(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double head = t == 0 ? pw0 * z[0] : z[t];
      out[t] = head - (t + 1 < n ? phi * z[t + 1] : 0.0);
    }
    return scale * out;
  }
};

MatrixXd aggregate(const MatrixXd& Ind_m, Element element) {
  const Eigen::Index n = Ind_m.rows() / 3;
  MatrixXd out(n, Ind_m.cols());
  for (Eigen::Index q = 0; q < n; ++q) out.row(q) = Ind_m.row(selected_month(q, element));
  return out;
}

}  // namespace

ChowLinMatrices build_matrices(double rho, int n_quarters, Element element) {
  check_rho(rho);
  if (n_quarters < 1) throw Error(ErrorKind::DimensionError, "build_matrices: n_quarters must be positive");
  const Eigen::Index m = 3 * static_cast<Eigen::Index>(n_quarters);
  ChowLinMatrices out;
  out.A = MatrixXd::Identity(m, m);
  out.A(0, 0) = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 1; i < m; ++i) out.A(i, i - 1) = -rho;
  out.C = MatrixXd::Zero(n_quarters, m);
  for (Eigen::Index q = 0; q < n_quarters; ++q) out.C(q, selected_month(q, element)) = 1.0;
  return out;
}

GlsResult gls_beta(const VectorXd& y_q, const MatrixXd& Ind_m, double rho, Element element, bool with_V) {
  check_rho(rho);
  const Eigen::Index n = y_q.size();
  if (Ind_m.rows() != 3 * n) throw Error(ErrorKind::DimensionError, "gls_beta: indicator must have 3x the quarters");
  const Eigen::Index k = Ind_m.cols();
  if (k < 1 || n < k) throw Error(ErrorKind::DimensionError, "gls_beta: too few quarters for the design");

  const QuarterlyAr1 ar(rho, n);
  const MatrixXd Xq = aggregate(Ind_m, element);
  const MatrixXd Xw = ar.whiten(Xq);
  const VectorXd yw = ar.whiten(y_q);

  Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
  qr.setThreshold(1e-12);
  if (qr.rank() < k) throw Error(ErrorKind::SingularSystem, "gls_beta: aggregated design is singular");

  GlsResult r;
  r.beta = qr.solve(yw);
  r.resid_q = y_q - Xq * r.beta;
  const VectorXd rw = ar.whiten(r.resid_q);
  r.quad_form = rw.squaredNorm();
  r.log_det_V = ar.log_det;

  const MatrixXd xtx_inv = (Xw.transpose() * Xw).ldlt().solve(MatrixXd::Identity(k, k));
  const double sigma2 = n > k ? r.quad_form / static_cast<double>(n - k) : std::numeric_limits<double>::quiet_NaN();
  r.covariance = sigma2 * xtx_inv;
  r.stderrs = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

  if (with_V) {
    r.V.resize(n, n);
    const double s = 1.0 / (1.0 - rho * rho);
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = 0; q < n; ++q) r.V(p, q) = s * std::pow(ar.phi, static_cast<double>(std::abs(p - q)));
  }
  return r;
}

double objective_value(Objective obj, double quad_form, double log_det_V, Eigen::Index n) {
  if (obj == Objective::WLS) return quad_form;
  const double nd = static_cast<double>(n);
  return -0.5 * nd * std::log(2.0 * std::numbers::pi * quad_form / (nd - 1.0)) - 0.5 * log_det_V - 0.5 * nd;
}

RhoSearch grid_search_rho(const VectorXd& y_q, const MatrixXd& Ind_m, const ChowLinOptions& opts) {
  const RhoGrid& g = opts.grid;
  if (!(g.lo < g.hi) || g.n < 2 || !(std::abs(g.lo) < 1.0) || !(std::abs(g.hi) < 1.0))
    throw Error(ErrorKind::ParameterError, "grid_search_rho: invalid grid");

  RhoSearch out;
  out.profile = VectorXd::Constant(g.n, std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(g.n), opts.workers, [&](std::size_t i) {
    try {
      const GlsResult r = gls_beta(y_q, Ind_m, g.at(static_cast<int>(i)), opts.element, false);
      const double v = objective_value(opts.objective, r.quad_form, r.log_det_V, y_q.size());
      if (std::isfinite(v)) out.profile[static_cast<Eigen::Index>(i)] = v;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingularSystem) throw;
    }
  });

  // Ascending scan; an improvement must clear a relative tolerance so that
  // rounding noise on a flat profile does not move the choice off the smaller rho.
  constexpr double kTieTol = 1e-12;
  int best = -1;
  for (int i = 0; i < g.n; ++i) {
    const double v = out.profile[i];
    if (std::isnan(v)) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const double b = out.profile[best];
    const double tol = kTieTol * std::max(1.0, std::abs(b));
    if (opts.objective == Objective::WLS ? v < b - tol : v > b + tol) best = i;
  }
  if (best < 0) throw Error(ErrorKind::SearchFailed, "grid_search_rho: every grid point is singular");
  out.index = best;
  out.rho = g.at(best);
  out.objective_value = out.profile[best];
  return out;
}

VectorXd distribute_residuals(const VectorXd& resid_q, double rho, Element element) {
  check_rho(rho);
  const Eigen::Index n = resid_q.size();
  const QuarterlyAr1 ar(rho, n);
  const VectorXd w = ar.whiten_transpose(ar.whiten(resid_q));  // V^-1 resid_q
  const double s = 1.0 / (1.0 - rho * rho);
  VectorXd out = VectorXd::Zero(3 * n);
  for (Eigen::Index i = 0; i < 3 * n; ++i) {
    double acc = 0.0;
    for (Eigen::Index q = 0; q < n; ++q)
      acc += std::pow(rho, static_cast<double>(std::abs(i - selected_month(q, element)))) * w[q];
    out[i] = s * acc;
  }
  return out;
}

InformationCriteria information_criteria(double sigma2_gls, int n_q, int k) {
  if (k < 1 || n_q <= k) throw Error(ErrorKind::DimensionError, "information_criteria: need n_q > k >= 1");
  if (!(sigma2_gls > 0.0)) throw Error(ErrorKind::DegenerateFit, "information_criteria: non-positive sigma^2");
  const double n = n_q;
  const double ls = std::log(sigma2_gls);
  return {ls + 2.0 * k / n, ls + k * std::log(n) / n};
}

ChowLinFit chow_lin(const TimeSeries& y_q, const TimeSeries& indicator, const ChowLinOptions& opts) {
  if (y_q.frequency != Frequency::Quarterly) throw Error(ErrorKind::FrequencyError, "chow_lin: target must be quarterly");
  if (indicator.frequency != Frequency::Monthly)
    throw Error(ErrorKind::FrequencyError, "chow_lin: indicator must be monthly");
  if (opts.opc != 0 && opts.opc != 1) throw Error(ErrorKind::ParameterError, "chow_lin: opc must be 0 or 1");
  const Eigen::Index n = y_q.size();
  const MonthIndex first = y_q.start;
  const MonthIndex last = y_q.end() + 2;
  if (indicator.index_of(first) < 0 || indicator.index_of(last) < 0)
    throw Error(ErrorKind::DimensionError, "chow_lin: indicator does not cover the quarterly span");
  const VectorXd ind = indicator.slice(first, last).values;

  MatrixXd X(3 * n, opts.opc + 1);
  if (opts.opc == 1) X.col(0).setOnes();
  X.col(opts.opc) = ind;

  const RhoSearch search = grid_search_rho(y_q.values, X, opts);
  const GlsResult g = gls_beta(y_q.values, X, search.rho, opts.element, false);

  ChowLinFit fit;
  if (opts.opc == 1) fit.beta0 = g.beta[0];
  fit.beta_ind = g.beta[opts.opc];
  fit.stderrs = g.stderrs;
  fit.rho = search.rho;
  fit.rho_index = search.index;
  fit.objective_value = search.objective_value;
  fit.distributed_residual = distribute_residuals(g.resid_q, search.rho, opts.element);
  fit.monthly = TimeSeries(first, Frequency::Monthly, X * g.beta + fit.distributed_residual, y_q.units);
  fit.k = static_cast<int>(X.cols());
  fit.sigma2 = n > fit.k ? g.quad_form / static_cast<double>(n - fit.k) : 0.0;
  if (fit.sigma2 > 0.0 && n > fit.k) {
    const auto ic = information_criteria(fit.sigma2, static_cast<int>(n), fit.k);
    fit.aic = ic.aic;
    fit.bic = ic.bic;
  } else {
    fit.aic = fit.bic = -std::numeric_limits<double>::infinity();
  }
  return fit;
}

TimeSeries build_indicator(const TimeSeries& compensation, const TimeSeries& personal_income) {
  const auto [com, pi] = align(compensation, personal_income);
  if ((pi.values.array() <= 0.0).any()) throw Error(ErrorKind::InvalidInput, "build_indicator: personal income must be positive");
  VectorXd ind = 1.0 - (com.values.array() / pi.values.array());
  return TimeSeries(com.start, com.frequency, std::move(ind), Units::Ratio);
}

GammaSummary gamma_diagnostic(const TimeSeries& ES_q, const TimeSeries& LS_q) {
  const auto [es, ls] = align(ES_q, LS_q);
  if ((ls.values.array() <= 0.0).any()) throw Error(ErrorKind::InvalidInput, "gamma_diagnostic: labour share must be positive");
  const VectorXd g = es.values.array() / ls.values.array();
  std::vector<double> v(g.data(), g.data() + g.size());
  GammaSummary s;
  s.n = g.size();
  s.min = g.minCoeff();
  s.max = g.maxCoeff();
  s.q1 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q3 = quantile(v, 0.75);
  s.mean = g.mean();
  s.std = sample_std(g);
  return s;
}

}  // namespace capshare
