#pragma once

#include <vector>

#include "capshare/core.hpp"

namespace capshare {

inline constexpr double kLogF2Floor = 1e-12;

/// r_t = beta0 + e_t,  Var(e_t) = exp(lambda0 + lambda1 * ln max(F_t^2, 1e-12)).
struct MGarchFit {
  double beta0 = 0.0;
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  Eigen::Vector3d stderrs = Eigen::Vector3d::Zero();
  double loglik = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  int restarts_used = 0;
  std::vector<double> trace;  // log-likelihood at every accepted step
};

struct MGarchOptions {
  int max_iter = 500;
  double gtol = 1e-9;  // on the gradient scaled by 1/T
  bool fix_lambda1 = false;
  int restarts = 3;
};

/// Log-likelihood and its analytic derivatives at theta = (beta0, lambda0, lambda1).
double mgarch_loglik(const VectorXd& r, const VectorXd& logF2, const Eigen::Vector3d& theta,
                     Eigen::Vector3d* grad = nullptr, Eigen::Matrix3d* hess = nullptr);

VectorXd log_f2(const VectorXd& F);

MGarchFit mgarch_fit(const VectorXd& returns, const VectorXd& F_KS, const MGarchOptions& opts = {});

struct RollingMGarchRow {
  Eigen::Index end = 0;  // index of the window's last observation
  MGarchFit fit;
};

std::vector<RollingMGarchRow> rolling_mgarch(const VectorXd& returns, const VectorXd& F_KS, int window = 60,
                                             const MGarchOptions& opts = {}, int workers = 1);

inline constexpr double kSanityGuard = 1e-8;

/// OLS of ln(e_t^2 + guard) on [1, ln(e_{t-1}^2 + guard), F_t], e = demeaned returns.
OlsFit sanity_check_regression(const VectorXd& returns, const VectorXd& F_KS);

}  // namespace capshare
