#include "capshare/mgarch.hpp"

#include <cmath>
#include <numbers>

#include "capshare/parallel.hpp"
#include "capshare/rng.hpp"

namespace capshare {

using Eigen::Matrix3d;
using Eigen::Vector3d;

VectorXd log_f2(const VectorXd& F) {
  return F.array().square().max(kLogF2Floor).log();
}

double mgarch_loglik(const VectorXd& r, const VectorXd& logF2, const Vector3d& theta, Vector3d* grad, Matrix3d* hess) {
  const double c = -0.5 * std::log(2.0 * std::numbers::pi);
  double ll = 0.0;
  Vector3d g = Vector3d::Zero();
  Matrix3d H = Matrix3d::Zero();
  for (Eigen::Index t = 0; t < r.size(); ++t) {
    const double l = logF2[t];
    const double s = theta[1] + theta[2] * l;
    const double u = r[t] - theta[0];
    const double inv = std::exp(-s);
    const double w = u * u * inv;
    ll += c - 0.5 * s - 0.5 * w;
    if (grad || hess) {
      const double dv = 0.5 * (w - 1.0);
      g[0] += u * inv;
      g[1] += dv;
      g[2] += dv * l;
      if (hess) {
        H(0, 0) -= inv;
        H(0, 1) -= u * inv;
        H(0, 2) -= u * inv * l;
        H(1, 1) -= 0.5 * w;
        H(1, 2) -= 0.5 * w * l;
        H(2, 2) -= 0.5 * w * l * l;
      }
    }
  }
  if (grad) *grad = g;
  if (hess) {
    H(1, 0) = H(0, 1);
    H(2, 0) = H(0, 2);
    H(2, 1) = H(1, 2);
    *hess = H;
  }
  return ll;
}

namespace {

struct Attempt {
  Vector3d theta;
  double ll;
  double gnorm;
  bool converged;
  int iterations;
  std::vector<double> trace;
};

// BFGS on the negative log-likelihood over the free coordinates, Armijo backtracking.
Attempt bfgs(const VectorXd& r, const VectorXd& l, Vector3d theta, const MGarchOptions& opts) {
  const int nfree = opts.fix_lambda1 ? 2 : 3;
  const double scale = 1.0 / static_cast<double>(r.size());
  auto eval = [&](const Vector3d& th, Vector3d& g) {
    const double ll = mgarch_loglik(r, l, th, &g);
    if (opts.fix_lambda1) g[2] = 0.0;
    return ll;
  };

  Attempt a{theta, 0.0, 0.0, false, 0, {}};
  Vector3d g;
  double ll = eval(theta, g);
  if (!std::isfinite(ll)) return {theta, ll, INFINITY, false, 0, {}};
  a.trace.push_back(ll);

  // Inverse Hessian of -ll, seeded from the analytic curvature when it is positive definite.
  Matrix3d Hm;
  mgarch_loglik(r, l, theta, nullptr, &Hm);
  Matrix3d Binv = Matrix3d::Identity() * scale;
  {
    Matrix3d info = -Hm;
    if (opts.fix_lambda1) {
      info.row(2).setZero();
      info.col(2).setZero();
      info(2, 2) = 1.0;
    }
    Eigen::LLT<Matrix3d> llt(info);
    if (llt.info() == Eigen::Success) Binv = llt.solve(Matrix3d::Identity());
  }
  if (opts.fix_lambda1) {
    Binv.row(2).setZero();
    Binv.col(2).setZero();
  }

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() * scale < opts.gtol) {
      a.converged = true;
      break;
    }
    Vector3d dir = Binv * g;  // ascent direction for ll
    if (dir.dot(g) <= 0.0) {
      Binv = Matrix3d::Identity() * scale;
      if (opts.fix_lambda1) Binv(2, 2) = 0.0;
      dir = Binv * g;
    }
    double step = 1.0;
    Vector3d cand, gc;
    double llc = -INFINITY;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      cand = theta + step * dir;
      llc = eval(cand, gc);
      if (std::isfinite(llc) && llc >= ll + 1e-4 * step * g.dot(dir)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Vector3d s = cand - theta;
    const Vector3d y = g - gc;  // gradient change of -ll
    theta = cand;
    ll = llc;
    g = gc;
    a.trace.push_back(ll);
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      const double rho = 1.0 / sy;
      const Matrix3d I = Matrix3d::Identity();
      Binv = (I - rho * s * y.transpose()) * Binv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
  }
  if (!a.converged && g.lpNorm<Eigen::Infinity>() * scale < opts.gtol) a.converged = true;
  a.theta = theta;
  a.ll = ll;
  a.gnorm = g.lpNorm<Eigen::Infinity>();
  a.iterations = it;
  return a;
}

}  // namespace

MGarchFit mgarch_fit(const VectorXd& returns, const VectorXd& F_KS, const MGarchOptions& opts) {
  const Eigen::Index T = returns.size();
  if (F_KS.size() != T) throw Error(ErrorKind::DimensionError, "mgarch_fit: returns and factor misaligned");
  if (T < 12) throw Error(ErrorKind::InsufficientData, "mgarch_fit: need at least 12 observations");
  if (!returns.allFinite() || !F_KS.allFinite()) throw Error(ErrorKind::InvalidInput, "mgarch_fit: non-finite input");
  const VectorXd l = log_f2(F_KS);
  const double m = returns.mean();
  const double v = (returns.array() - m).square().mean();
  if (!(v > 0.0)) throw Error(ErrorKind::NumericalError, "mgarch_fit: degenerate (zero) return variance");

  const Vector3d start(m, std::log(v), 0.0);
  Attempt best = bfgs(returns, l, start, opts);
  int used = 0;
  Rng rng = substream(0x6d67, {static_cast<std::uint64_t>(T)});
  const double sd = std::sqrt(v);
  while (!best.converged && used < opts.restarts) {
    ++used;
    Vector3d s = start;
    s[0] += 0.1 * sd * std_normal(rng);
    s[1] += 0.5 * std_normal(rng);
    if (!opts.fix_lambda1) s[2] += 0.2 * std_normal(rng);
    Attempt a = bfgs(returns, l, s, opts);
    if (a.converged || (std::isfinite(a.ll) && a.ll > best.ll)) best = std::move(a);
  }

  MGarchFit fit;
  fit.beta0 = best.theta[0];
  fit.lambda0 = best.theta[1];
  fit.lambda1 = best.theta[2];
  fit.loglik = best.ll;
  fit.grad_norm = best.gnorm;
  fit.converged = best.converged;
  fit.iterations = best.iterations;
  fit.restarts_used = used;
  fit.trace = std::move(best.trace);

  Matrix3d H;
  mgarch_loglik(returns, l, best.theta, nullptr, &H);
  if (opts.fix_lambda1) {
    const Eigen::Matrix2d info = -H.topLeftCorner<2, 2>();
    const Eigen::Matrix2d cov = info.inverse();
    fit.stderrs << std::sqrt(std::max(cov(0, 0), 0.0)), std::sqrt(std::max(cov(1, 1), 0.0)), 0.0;
  } else {
    const Matrix3d cov = (-H).inverse();
    for (int j = 0; j < 3; ++j) fit.stderrs[j] = std::sqrt(std::max(cov(j, j), 0.0));
  }
  if (!std::isfinite(fit.loglik)) throw Error(ErrorKind::NumericalError, "mgarch_fit: likelihood is not finite");
  return fit;
}

std::vector<RollingMGarchRow> rolling_mgarch(const VectorXd& returns, const VectorXd& F_KS, int window,
                                             const MGarchOptions& opts, int workers) {
  const Eigen::Index T = returns.size();
  if (F_KS.size() != T) throw Error(ErrorKind::DimensionError, "rolling_mgarch: returns and factor misaligned");
  if (window < 12 || window > T) throw Error(ErrorKind::ParameterError, "rolling_mgarch: window must lie in [12, T]");
  const Eigen::Index n = T - window + 1;
  std::vector<RollingMGarchRow> rows(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t w) {
    const auto s = static_cast<Eigen::Index>(w);
    rows[w].end = s + window - 1;
    rows[w].fit = mgarch_fit(returns.segment(s, window), F_KS.segment(s, window), opts);
  });
  return rows;
}

OlsFit sanity_check_regression(const VectorXd& returns, const VectorXd& F_KS) {
  const Eigen::Index T = returns.size();
  if (F_KS.size() != T) throw Error(ErrorKind::DimensionError, "sanity_check_regression: inputs misaligned");
  if (T < 24) throw Error(ErrorKind::InsufficientData, "sanity_check_regression: need at least 24 observations");
  const VectorXd e = returns.array() - returns.mean();
  const VectorXd y = (e.array().square() + kSanityGuard).log();
  MatrixXd X(T - 1, 2);
  X.col(0) = y.head(T - 1);
  X.col(1) = F_KS.tail(T - 1);
  return ols(y.tail(T - 1), X, true);
}

}  // namespace capshare
