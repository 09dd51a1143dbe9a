#include "capshare/lrr.hpp"

#include <cmath>

#include "capshare/rng.hpp"

namespace capshare {

namespace {

void guard(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ParameterError, "LRR parameters: " + what);
}

// Loading of the consumption-claim ratio on F: (1 - 1/psi) / (1 - kappa1) * w_h * rho_ks.
double a2_slope(const LrrParams& p) { return (1.0 - 1.0 / p.psi) / (1.0 - p.kappa1) * p.w_h * p.rho_ks; }

}  // namespace

void LrrParams::validate() const {
  guard(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  guard(gamma >= 0.0, "gamma must be non-negative");
  guard(psi > 0.0, "psi must be positive");
  guard(psi != 1.0, "denominator 1 - 1/psi is zero (psi = 1)");
  guard(std::abs(rho) < 1.0, "rho must lie in (-1, 1)");
  guard(std::abs(rho_ks) < 1.0, "rho_ks must lie in (-1, 1)");
  guard(phi_e >= 0.0, "phi_e must be non-negative");
  guard(phi > 0.0 && phi_d > 0.0, "phi and phi_d must be positive");
  guard(sigma >= 0.0 && Sigma_xi >= 0.0 && sigma_ks >= 0.0, "volatilities must be non-negative");
  guard(w_h >= 0.0 && w_h <= 1.0, "w_h must lie in [0, 1]");
  guard(weight_low() >= 0.0 && weight_low() <= 1.0, "w_l must lie in [0, 1]");
  guard(kappa1 > 0.0 && kappa1 < 1.0, "kappa1 must lie in (0, 1) (denominator 1 - kappa1)");
  guard(kappa1m > 0.0 && kappa1m < 1.0, "kappa1m must lie in (0, 1) (denominator 1 - kappa1m)");
  guard(kappa1 * rho != 1.0, "denominator 1 - kappa1*rho is zero");
  guard(c_d >= 0.0 && c_d <= 1.0, "c_d must lie in [0, 1]");
  guard(std::isfinite(theta()), "theta is not finite");
}

UnconditionalLoadings unconditional_loadings(const LrrParams& p) {
  const double th = p.theta();
  const double slope = a2_slope(p);
  UnconditionalLoadings L;
  L.xi = {0.0, (th - 1.0) * p.kappa1 * slope};
  L.rxi = {p.w_h, p.w_h + p.kappa1 * slope};
  const double a2m0 = (th - 1.0 - th / p.psi) / (1.0 - p.kappa1m) * p.w_h;
  const double a2m1 = -p.w_h * p.rho_ks / (p.psi * (1.0 - p.kappa1m));
  L.mxi = {p.kappa1m * a2m0, p.kappa1m * a2m1};
  return L;
}

double dividend_volatility(const LrrParams& p, double F_next) {
  const double a = p.w_h * (1.0 + F_next);
  return std::sqrt(p.sigma * p.sigma + p.c_d * a * a * p.Sigma_xi);
}

LrrPremiums premiums(const LrrParams& p, const VectorXd& F_KS, double EF2) {
  p.validate();
  if (!(EF2 >= 0.0)) throw Error(ErrorKind::ParameterError, "premiums: E(F^2) must be non-negative");
  if (F_KS.size() == 0) throw Error(ErrorKind::DimensionError, "premiums: empty factor path");
  const double th = p.theta();
  const double A1 = (1.0 - 1.0 / p.psi) / (1.0 - p.kappa1 * p.rho);
  const double A1m = (p.phi - 1.0 / p.psi) / (1.0 - p.kappa1 * p.rho);
  const double l_eta = th - 1.0 - th / p.psi;
  const double l_re = p.kappa1 * A1 * p.phi_e;
  const double l_e = (th - 1.0) * l_re;
  const double l_me = p.kappa1m * A1m * p.phi_e;
  const double s2 = p.sigma * p.sigma;

  LrrPremiums out;
  out.conditional_consumption = -(l_eta + l_re * l_e - 0.5 * l_re * l_re - 0.5) * s2;
  out.conditional_equity.resize(F_KS.size());
  for (Eigen::Index t = 0; t < F_KS.size(); ++t) {
    const double sd = dividend_volatility(p, F_KS[t]);
    out.conditional_equity[t] = -(l_me * l_e - 0.5 * l_me * l_me) * s2 + 0.5 * p.phi_d * p.phi_d * sd * sd;
  }

  // Sigma_xi * E[l_x(F) l_xi(F) - 0.5 l_x(F)^2] with loadings affine in F.
  const double EF = F_KS.mean();
  const UnconditionalLoadings L = unconditional_loadings(p);
  auto cross = [&](const Affine& u, const Affine& v) { return u.a * v.a + (u.a * v.b + u.b * v.a) * EF + u.b * v.b * EF2; };
  const double xi_c = p.Sigma_xi * (cross(L.rxi, L.xi) - 0.5 * cross(L.rxi, L.rxi));
  const double xi_m = p.Sigma_xi * (cross(L.mxi, L.xi) - 0.5 * cross(L.mxi, L.mxi));
  out.unconditional_consumption = out.conditional_consumption - xi_c;
  out.unconditional_equity = -(l_me * l_e - 0.5 * l_me * l_me - 0.5 * p.phi_d * p.phi_d) * s2 - xi_m;
  return out;
}

LrrSolution solve_coefficients(const LrrParams& p, const VectorXd& F_KS) {
  p.validate();
  const double th = p.theta();
  LrrSolution s;
  s.theta = th;
  s.A1 = (1.0 - 1.0 / p.psi) / (1.0 - p.kappa1 * p.rho);
  s.A1m = (p.phi - 1.0 / p.psi) / (1.0 - p.kappa1 * p.rho);
  s.A2_path = a2_slope(p) * F_KS;
  const double a2m0 = (th - 1.0 - th / p.psi) / (1.0 - p.kappa1m) * p.w_h;
  const double a2m1 = -p.w_h * p.rho_ks / (p.psi * (1.0 - p.kappa1m));
  s.A2m_path = (a2m0 + a2m1 * F_KS.array()).matrix();
  s.lambda_eta = th - 1.0 - th / p.psi;
  s.lambda_re = p.kappa1 * s.A1 * p.phi_e;
  s.lambda_e = (th - 1.0) * s.lambda_re;
  s.lambda_me = p.kappa1m * s.A1m * p.phi_e;

  s.rxi_coef = p.w_h + p.kappa1 * a2_slope(p);
  s.xi_coef = (th - 1.0) * p.kappa1 * a2_slope(p);
  s.mxi_coef = p.kappa1m * p.w_h * p.rho_ks / (p.psi * (1.0 - p.kappa1m));

  const Eigen::Index T = F_KS.size();
  VectorXd eks = VectorXd::Zero(T);
  for (Eigen::Index t = 1; t < T; ++t) eks[t] = F_KS[t] - p.rho_ks * F_KS[t - 1];
  s.lambda_xi_path = s.xi_coef * eks;
  s.lambda_rxi_path = s.rxi_coef * eks;
  s.lambda_mxi_path = s.mxi_coef * eks;

  const UnconditionalLoadings L = unconditional_loadings(p);
  s.lambda_u_xi_path = (L.xi.a + L.xi.b * F_KS.array()).matrix();
  s.lambda_u_rxi_path = (L.rxi.a + L.rxi.b * F_KS.array()).matrix();
  s.lambda_u_mxi_path = (L.mxi.a + L.mxi.b * F_KS.array()).matrix();

  if (T > 0) s.premiums = premiums(p, F_KS, F_KS.squaredNorm() / static_cast<double>(T));
  return s;
}

Innovations innovations(const LrrParams& p, const LrrSolution& s, const Shocks& k) {
  const UnconditionalLoadings L = unconditional_loadings(p);
  const double sig = p.sigma;
  Innovations out;
  out.conditional.dr_a = sig * k.eta + s.lambda_re * sig * k.e + s.rxi_coef * k.e_ks * k.xi;
  out.conditional.dm = s.lambda_eta * sig * k.eta + s.lambda_e * sig * k.e + s.xi_coef * k.e_ks * k.xi;
  out.conditional.dr_m =
      p.phi_d * dividend_volatility(p, k.F_next) * k.u + s.lambda_me * sig * k.e + s.mxi_coef * k.e_ks * k.xi;
  out.unconditional.dr_a = sig * k.eta + s.lambda_re * sig * k.e + L.rxi.at(k.F_next) * k.xi;
  out.unconditional.dm = s.lambda_eta * sig * k.eta + s.lambda_e * sig * k.e + L.xi.at(k.F_next) * k.xi;
  out.unconditional.dr_m = p.phi_d * sig * k.u + s.lambda_me * sig * k.e + L.mxi.at(k.F_next) * k.xi;
  return out;
}

LrrPaths simulate_system(const LrrParams& p, Eigen::Index T, std::uint64_t seed) {
  p.validate();
  if (T < 1) throw Error(ErrorKind::ParameterError, "simulate_system: T must be positive");
  const LrrSolution sol = solve_coefficients(p, VectorXd::Zero(1));
  Rng rng = substream(seed, {0x6c7272});
  LrrPaths out;
  for (VectorXd* v : {&out.x, &out.g, &out.g_d, &out.F_KS, &out.xi, &out.sigma_d, &out.dm, &out.dr_a, &out.dr_m})
    v->resize(T);
  const double sxi = std::sqrt(p.Sigma_xi);
  double x = p.x0;
  double F = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    Shocks k;
    k.e = std_normal(rng);
    k.u = std_normal(rng);
    k.eta = std_normal(rng);
    k.xi = sxi * std_normal(rng);
    k.e_ks = p.sigma_ks * std_normal(rng);
    k.F_next = p.rho_ks * F + k.e_ks;
    const double sd = dividend_volatility(p, k.F_next);
    out.g[t] = p.mu + x + p.w_h * (1.0 + k.F_next) * k.xi + p.sigma * k.eta;
    out.g_d[t] = p.mu_d + p.phi * x + p.phi_d * sd * k.u;
    out.sigma_d[t] = sd;
    out.F_KS[t] = k.F_next;
    out.xi[t] = k.xi;
    const Innovations inn = innovations(p, sol, k);
    out.dm[t] = inn.unconditional.dm;
    out.dr_a[t] = inn.unconditional.dr_a;
    out.dr_m[t] = inn.unconditional.dr_m;
    out.x[t] = x;
    x = p.rho * x + p.phi_e * p.sigma * k.e;
    F = k.F_next;
  }
  return out;
}

A2RecursionReport verify_A2_recursion(const LrrParams& p, const VectorXd& F_KS) {
  p.validate();
  const double c = (1.0 - 1.0 / p.psi) * p.w_h;
  const VectorXd A2 = a2_slope(p) * F_KS;
  A2RecursionReport r;
  r.residual.resize(F_KS.size());
  for (Eigen::Index t = 0; t < F_KS.size(); ++t) {
    const double expected_next = a2_slope(p) * p.rho_ks * F_KS[t];  // E_t F_{t+1} = rho_ks F_t
    r.residual[t] = std::abs(c * p.rho_ks * F_KS[t] / p.kappa1 + A2[t] - expected_next);
  }
  r.max_residual = F_KS.size() ? r.residual.maxCoeff() : 0.0;
  r.max_abs_A2 = F_KS.size() ? A2.cwiseAbs().maxCoeff() : 0.0;
  r.bound = std::abs(1.0 - p.rho_ks / p.kappa1);
  return r;
}

StockholderGrowth stockholder_growth(const LrrParams& p, const VectorXd& G_bar, const VectorXd& F_KS,
                                     const VectorXd& xi) {
  const Eigen::Index T = G_bar.size();
  if (F_KS.size() != T || xi.size() != T) throw Error(ErrorKind::DimensionError, "stockholder_growth: inputs misaligned");
  const double wl = p.weight_low();
  StockholderGrowth s;
  s.G_h = (G_bar.array() * (1.0 + F_KS.array()) * (1.0 + xi.array())).matrix();
  s.G_l = (G_bar.array() * (1.0 - F_KS.array())).matrix();
  s.G_s = p.w_h * s.G_h + wl * s.G_l;
  s.E_G_s = (p.w_h * G_bar.array() * (1.0 + F_KS.array()) + wl * G_bar.array() * (1.0 - F_KS.array())).matrix();
  return s;
}

}  // namespace capshare
