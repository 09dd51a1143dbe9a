#pragma once

#include <optional>

#include "capshare/core.hpp"

namespace capshare {

enum class Element { First, Last };
enum class Objective { WLS, LL };

std::string_view to_string(Element e);
std::string_view to_string(Objective o);

struct RhoGrid {
  double lo = 0.050;
  double hi = 0.999;
  int n = 100;

  double at(int i) const { return n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1); }
};

struct ChowLinOptions {
  int opc = 1;
  Element element = Element::First;
  Objective objective = Objective::WLS;
  RhoGrid grid;
  int workers = 1;
};

struct ChowLinMatrices {
  MatrixXd A;  // 3n x 3n
  MatrixXd C;  // n x 3n
};

ChowLinMatrices build_matrices(double rho, int n_quarters, Element element);

/// Column of the month selected within quarter q.
inline Eigen::Index selected_month(Eigen::Index q, Element e) { return 3 * q + (e == Element::First ? 0 : 2); }

struct GlsResult {
  VectorXd beta;
  VectorXd stderrs;
  MatrixXd covariance;
  VectorXd resid_q;
  MatrixXd V;
  double quad_form = 0.0;  // mu' V^-1 mu
  double log_det_V = 0.0;
};

/// GLS of y_q on C*Ind_m under AR(1) monthly errors. Ind_m carries every regressor
/// column (including a constant column when wanted). `with_V` materializes V densely.
GlsResult gls_beta(const VectorXd& y_q, const MatrixXd& Ind_m, double rho, Element element, bool with_V = true);

double objective_value(Objective obj, double quad_form, double log_det_V, Eigen::Index n);

struct RhoSearch {
  double rho = 0.0;
  int index = 0;
  double objective_value = 0.0;
  VectorXd profile;  // objective at every grid point (NaN where singular)
};

RhoSearch grid_search_rho(const VectorXd& y_q, const MatrixXd& Ind_m, const ChowLinOptions& opts);

struct ChowLinFit {
  std::optional<double> beta0;
  double beta_ind = 0.0;
  VectorXd stderrs;
  double rho = 0.0;
  int rho_index = 0;
  TimeSeries monthly;
  VectorXd distributed_residual;
  double objective_value = 0.0;
  double sigma2 = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int k = 0;
};

/// Distributes quarterly residuals to months: Sigma C' V^-1 resid_q.
VectorXd distribute_residuals(const VectorXd& resid_q, double rho, Element element);

ChowLinFit chow_lin(const TimeSeries& y_q, const TimeSeries& indicator, const ChowLinOptions& opts);

struct InformationCriteria {
  double aic;
  double bic;
};

InformationCriteria information_criteria(double sigma2_gls, int n_q, int k);
inline InformationCriteria information_criteria(const ChowLinFit& fit, int n_q, int k) {
  return information_criteria(fit.sigma2, n_q, k);
}

TimeSeries build_indicator(const TimeSeries& compensation, const TimeSeries& personal_income);

struct GammaSummary {
  double min, q1, median, mean, q3, max, std;
  Eigen::Index n;
};

GammaSummary gamma_diagnostic(const TimeSeries& ES_q, const TimeSeries& LS_q);

}  // namespace capshare
