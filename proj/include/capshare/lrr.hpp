#pragma once

#include <cstdint>
#include <optional>

#include "capshare/core.hpp"

namespace capshare {

struct LrrParams {
  double delta = 0.998;
  double gamma = 10.0;
  double psi = 1.5;
  double mu = 0.0015;
  double mu_d = 0.0015;
  double rho = 0.979;
  double phi_e = 0.044;
  double phi = 3.0;
  double phi_d = 4.5;
  double sigma = 0.0078;
  double w_h = 0.5;
  std::optional<double> w_l;  // defaults to w_h
  double kappa1 = 0.997;
  double kappa1m = 0.997;
  double rho_ks = 0.947;
  double Sigma_xi = 1e-4;
  double sigma_ks = 0.024;  // std of the capital-share factor innovation
  double c_d = 1.0;         // weight of the xi channel in the dividend volatility
  double x0 = 0.0;
  // Level constants; they shift log prices but never premiums.
  double kappa0 = 0.0;
  double kappa0m = 0.0;
  double A0 = 0.0;
  double A0m = 0.0;

  double theta() const { return (1.0 - gamma) / (1.0 - 1.0 / psi); }
  double weight_low() const { return w_l.value_or(w_h); }
  /// Throws ParameterError naming the first violated guard.
  void validate() const;
};

struct LrrPremiums {
  double conditional_consumption = 0.0;
  VectorXd conditional_equity;  // one value per F_{t+1} in the path
  double unconditional_consumption = 0.0;
  double unconditional_equity = 0.0;
};

struct LrrSolution {
  double theta = 0.0;
  double A1 = 0.0;
  double A1m = 0.0;
  VectorXd A2_path;
  VectorXd A2m_path;
  double lambda_eta = 0.0;
  double lambda_e = 0.0;
  double lambda_re = 0.0;
  double lambda_me = 0.0;
  // Conditional xi loadings per unit of the factor innovation e^KS_{t+1}.
  double xi_coef = 0.0;
  double rxi_coef = 0.0;
  double mxi_coef = 0.0;
  // Conditional paths use e^KS_t = F_t - rho_ks F_{t-1} (zero at t = 0);
  // unconditional paths evaluate the loadings at F_t.
  VectorXd lambda_xi_path, lambda_rxi_path, lambda_mxi_path;
  VectorXd lambda_u_xi_path, lambda_u_rxi_path, lambda_u_mxi_path;
  LrrPremiums premiums;
};

/// Unconditional loadings are affine in F: value = a + b F.
struct Affine {
  double a = 0.0;
  double b = 0.0;
  double at(double F) const { return a + b * F; }
};

struct UnconditionalLoadings {
  Affine xi;   // pricing kernel
  Affine rxi;  // consumption return
  Affine mxi;  // equity return
};

UnconditionalLoadings unconditional_loadings(const LrrParams& p);

LrrSolution solve_coefficients(const LrrParams& p, const VectorXd& F_KS);

struct Shocks {
  double e = 0.0;
  double u = 0.0;
  double eta = 0.0;
  double xi = 0.0;
  double e_ks = 0.0;    // factor innovation at t+1
  double F_next = 0.0;  // F_{KS,t+1}
};

struct InnovationSet {
  double dm = 0.0;
  double dr_a = 0.0;
  double dr_m = 0.0;
};

struct Innovations {
  InnovationSet conditional;
  InnovationSet unconditional;
};

double dividend_volatility(const LrrParams& p, double F_next);

Innovations innovations(const LrrParams& p, const LrrSolution& s, const Shocks& shocks);

LrrPremiums premiums(const LrrParams& p, const VectorXd& F_KS, double EF2);

struct LrrPaths {
  VectorXd x, g, g_d, F_KS, xi, sigma_d;
  // Unconditional innovations built from the same shocks (return proxies).
  VectorXd dm, dr_a, dr_m;
};

LrrPaths simulate_system(const LrrParams& p, Eigen::Index T, std::uint64_t seed);

struct A2RecursionReport {
  VectorXd residual;
  double max_residual = 0.0;
  double max_abs_A2 = 0.0;
  double bound = 0.0;  // |1 - rho_ks / kappa1|
};

A2RecursionReport verify_A2_recursion(const LrrParams& p, const VectorXd& F_KS);

struct StockholderGrowth {
  VectorXd G_h, G_l, G_s, E_G_s;
};

StockholderGrowth stockholder_growth(const LrrParams& p, const VectorXd& G_bar, const VectorXd& F_KS,
                                     const VectorXd& xi);

}  // namespace capshare
