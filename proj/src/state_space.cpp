#include "capshare/state_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "capshare/errors.hpp"

namespace capshare {

namespace {

MatrixXd innovation_cov(const VectorXd& q2, const MatrixXi& K, Eigen::Index t) {
  MatrixXd Q = MatrixXd::Zero(q2.size(), q2.size());
  for (Eigen::Index j = 0; j < q2.size(); ++j)
    if (K(j, t)) Q(j, j) = q2[j];
  return Q;
}

MatrixXd innovation_cov(const VectorXd& q2, unsigned mask) {
  MatrixXd Q = MatrixXd::Zero(q2.size(), q2.size());
  for (Eigen::Index j = 0; j < q2.size(); ++j)
    if (mask & (1u << j)) Q(j, j) = q2[j];
  return Q;
}

void symmetrize(MatrixXd& M) { M = 0.5 * (M + M.transpose()).eval(); }

// Kalman update of N(a, R) with observation t; returns the log predictive density.
double update(const RwModel& model, Eigen::Index t, const VectorXd& a, const MatrixXd& R, VectorXd& m, MatrixXd& P) {
  if (!model.has_obs(t)) {
    m = a;
    P = R;
    return 0.0;
  }
  const auto x = model.X.col(t);
  const VectorXd Rx = R * x;
  const double F = x.dot(Rx) + model.H[t];
  if (!(F > 0.0) || !std::isfinite(F))
    throw Error(ErrorKind::NumericalError, "filter lost positive definiteness (prediction variance " + std::to_string(F) + ")");
  const double v = model.y[t] - x.dot(a);
  const VectorXd gain = Rx / F;
  m = a + gain * v;
  // Joseph form: stays positive semi-definite when H_t is tiny relative to R.
  MatrixXd J = -gain * x.transpose();
  J.diagonal().array() += 1.0;
  P = J * R * J.transpose() + gain * gain.transpose() * model.H[t];
  symmetrize(P);
  return -0.5 * (std::log(2.0 * std::numbers::pi * F) + v * v / F);
}

}  // namespace

VectorXd sample_mvn(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
  const Eigen::Index p = mean.size();
  VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = std_normal(rng);
  Eigen::LDLT<MatrixXd> ldlt(cov);
  const VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  VectorXd w = ldlt.matrixL() * d.cwiseProduct(z);
  return mean + ldlt.transpositionsP().transpose() * w;
}

FilterOutput forward_filter(const RwModel& model, const MatrixXi& K) {
  const Eigen::Index T = model.length();
  FilterOutput out;
  out.m.resize(static_cast<std::size_t>(T + 1));
  out.P.resize(static_cast<std::size_t>(T + 1));
  out.m[0] = model.m0;
  out.P[0] = model.P0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto s = static_cast<std::size_t>(t);
    const MatrixXd R = out.P[s] + innovation_cov(model.q2, K, t);
    out.loglik += update(model, t, out.m[s], R, out.m[s + 1], out.P[s + 1]);
  }
  return out;
}

void gck_sample(const RwModel& model, const VectorXd& pi, MatrixXi& K, Rng& rng) {
  const Eigen::Index T = model.length();
  const Eigen::Index p = model.dim();
  const unsigned n_configs = 1u << p;

  // Backward pass: p(y_{t+1..T} | s_t) ∝ exp(-0.5 (s' Omega_t s - 2 mu_t' s)).
  std::vector<MatrixXd> Omega(static_cast<std::size_t>(T + 1), MatrixXd::Zero(p, p));
  std::vector<VectorXd> mu(static_cast<std::size_t>(T + 1), VectorXd::Zero(p));
  const MatrixXd I = MatrixXd::Identity(p, p);
  for (Eigen::Index t = T - 1; t >= 1; --t) {
    const auto s = static_cast<std::size_t>(t);
    MatrixXd A = Omega[s + 1];
    VectorXd c = mu[s + 1];
    if (model.has_obs(t)) {
      const auto x = model.X.col(t);
      A += x * x.transpose() / model.H[t];
      c += x * (model.y[t] / model.H[t]);
    }
    const Eigen::PartialPivLU<MatrixXd> lu(I + A * innovation_cov(model.q2, K, t));
    Omega[s] = lu.solve(A);
    symmetrize(Omega[s]);
    mu[s] = lu.solve(c);
  }

  std::vector<double> logw(n_configs);
  std::vector<VectorXd> ms(n_configs);
  std::vector<MatrixXd> Ps(n_configs);
  VectorXd m = model.m0;
  MatrixXd P = model.P0;
  for (Eigen::Index t = 0; t < T; ++t) {
    // Column t of K is the indicator for s_{t} -> s_{t+1}; Omega index is t+1.
    const auto s = static_cast<std::size_t>(t + 1);
    double best = -std::numeric_limits<double>::infinity();
    for (unsigned c = 0; c < n_configs; ++c) {
      double lp = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) lp += std::log((c & (1u << j)) ? pi[j] : 1.0 - pi[j]);
      const MatrixXd R = P + innovation_cov(model.q2, c);
      lp += update(model, t, m, R, ms[c], Ps[c]);
      const MatrixXd& Om = Omega[s];
      const VectorXd d = mu[s] - Om * ms[c];
      const Eigen::PartialPivLU<MatrixXd> lu(I + Om * Ps[c]);
      const double quad = ms[c].dot(Om * ms[c]) - 2.0 * mu[s].dot(ms[c]) - d.dot(Ps[c] * lu.solve(d));
      lp += -0.5 * std::log(std::abs(lu.determinant())) - 0.5 * quad;
      logw[c] = std::isfinite(lp) ? lp : -std::numeric_limits<double>::infinity();
      best = std::max(best, logw[c]);
    }
    if (!std::isfinite(best)) throw Error(ErrorKind::NumericalError, "break sampler produced no finite weight");
    double total = 0.0;
    for (auto& w : logw) total += (w = std::exp(w - best));
    double u = uniform01(rng) * total;
    unsigned pick = n_configs - 1;
    for (unsigned c = 0; c < n_configs; ++c) {
      if (u < logw[c]) {
        pick = c;
        break;
      }
      u -= logw[c];
    }
    for (Eigen::Index j = 0; j < p; ++j) K(j, t) = (pick & (1u << j)) ? 1 : 0;
    m = ms[pick];
    P = Ps[pick];
  }
}

MatrixXd ffbs(const RwModel& model, const MatrixXi& K, Rng& rng) {
  const Eigen::Index T = model.length();
  const FilterOutput f = forward_filter(model, K);
  MatrixXd states(model.dim(), T + 1);
  states.col(T) = sample_mvn(f.m[static_cast<std::size_t>(T)], f.P[static_cast<std::size_t>(T)], rng);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto s = static_cast<std::size_t>(t);
    const MatrixXd Q = innovation_cov(model.q2, K, t);
    if (Q.isZero(0.0)) {
      states.col(t) = states.col(t + 1);
      continue;
    }
    const MatrixXd& P = f.P[s];
    const MatrixXd G = (P + Q).ldlt().solve(P).transpose();  // P (P+Q)^-1
    const VectorXd mean = f.m[s] + G * (states.col(t + 1) - f.m[s]);
    MatrixXd cov = P - G * P;
    symmetrize(cov);
    states.col(t) = sample_mvn(mean, cov, rng);
  }
  return states;
}

SmootherOutput smoother_moments(const RwModel& model, const MatrixXi& K) {
  const Eigen::Index T = model.length();
  const FilterOutput f = forward_filter(model, K);
  SmootherOutput out;
  out.mean.resize(model.dim(), T + 1);
  out.cov.resize(static_cast<std::size_t>(T + 1));
  out.mean.col(T) = f.m[static_cast<std::size_t>(T)];
  out.cov[static_cast<std::size_t>(T)] = f.P[static_cast<std::size_t>(T)];
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto s = static_cast<std::size_t>(t);
    const MatrixXd& P = f.P[s];
    const MatrixXd Rn = P + innovation_cov(model.q2, K, t);
    const MatrixXd G = Rn.ldlt().solve(P).transpose();
    out.mean.col(t) = f.m[s] + G * (out.mean.col(t + 1) - f.m[s]);
    out.cov[s] = P + G * (out.cov[s + 1] - Rn) * G.transpose();
    symmetrize(out.cov[s]);
  }
  return out;
}

}  // namespace capshare
