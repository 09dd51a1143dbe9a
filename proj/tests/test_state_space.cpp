#include <cmath>
#include <map>
#include <numbers>

#include "capshare/errors.hpp"
#include "capshare/state_space.hpp"
#include "doctest.h"

using namespace capshare;

namespace {

RwModel random_model(std::uint64_t seed, Eigen::Index p, Eigen::Index T) {
  Rng rng = substream(seed, {0x55});
  RwModel m;
  m.X.resize(p, T);
  m.X.row(0).setOnes();
  for (Eigen::Index j = 1; j < p; ++j)
    for (Eigen::Index t = 0; t < T; ++t) m.X(j, t) = std_normal(rng);
  m.y.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) m.y[t] = 0.5 + std_normal(rng);
  m.H = VectorXd::Constant(T, 0.6) + VectorXd::LinSpaced(T, 0.0, 0.4);
  m.m0 = VectorXd::Constant(p, 0.2);
  m.P0 = MatrixXd::Identity(p, p) * 2.0;
  m.q2 = VectorXd::LinSpaced(p, 0.1, 0.3);
  return m;
}

// Joint Gaussian of (s_0..s_T, y_1..y_T) and the exact conditional of the states.
struct Dense {
  VectorXd mean;  // p(T+1), stacked by time
  MatrixXd cov;
  double loglik;
};

Dense dense_posterior(const RwModel& m, const MatrixXi& K) {
  const Eigen::Index p = m.dim(), T = m.length(), n = p * (T + 1);
  // s_t = s_0 + sum_{u<=t} k_u w_u; Cov(s_a, s_b) = P0 + sum_{u<=min(a,b)} diag(k_u q2).
  std::vector<MatrixXd> cum(static_cast<std::size_t>(T + 1), MatrixXd::Zero(p, p));
  for (Eigen::Index t = 1; t <= T; ++t) {
    cum[t] = cum[t - 1];
    for (Eigen::Index j = 0; j < p; ++j)
      if (K(j, t - 1)) cum[t](j, j) += m.q2[j];
  }
  MatrixXd Sss(n, n);
  for (Eigen::Index a = 0; a <= T; ++a)
    for (Eigen::Index b = 0; b <= T; ++b) Sss.block(a * p, b * p, p, p) = m.P0 + cum[std::min(a, b)];
  VectorXd mu_s(n);
  for (Eigen::Index a = 0; a <= T; ++a) mu_s.segment(a * p, p) = m.m0;

  MatrixXd G = MatrixXd::Zero(T, n);  // y = G s + e
  for (Eigen::Index t = 0; t < T; ++t) G.block(t, (t + 1) * p, 1, p) = m.X.col(t).transpose();
  const MatrixXd Syy = G * Sss * G.transpose() + MatrixXd(m.H.asDiagonal());
  const VectorXd mu_y = G * mu_s;
  const MatrixXd Ssy = Sss * G.transpose();
  const Eigen::LLT<MatrixXd> llt(Syy);
  Dense d;
  d.mean = mu_s + Ssy * llt.solve(m.y - mu_y);
  d.cov = Sss - Ssy * llt.solve(Ssy.transpose());
  const VectorXd r = m.y - mu_y;
  const MatrixXd L = llt.matrixL();
  d.loglik = -0.5 * (T * std::log(2.0 * std::numbers::pi) + 2.0 * L.diagonal().array().log().sum() + r.dot(llt.solve(r)));
  return d;
}

}  // namespace

TEST_CASE("filter and smoother match the dense joint-Gaussian solve") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::Index p = 2, T = 15;
    const RwModel m = random_model(seed, p, T);
    MatrixXi K = MatrixXi::Ones(p, T);
    if (seed % 2) K(1, 4) = K(0, 9) = 0;
    const Dense d = dense_posterior(m, K);
    const SmootherOutput sm = smoother_moments(m, K);
    for (Eigen::Index t = 0; t <= T; ++t) {
      CHECK((sm.mean.col(t) - d.mean.segment(t * p, p)).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((sm.cov[t] - d.cov.block(t * p, t * p, p, p)).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(forward_filter(m, K).loglik == doctest::Approx(d.loglik).epsilon(1e-9));
    // Filtered moments at T equal the smoothed ones.
    const FilterOutput f = forward_filter(m, K);
    CHECK((f.m.back() - sm.mean.col(T)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("missing observations carry no likelihood") {
  RwModel m = random_model(9, 1, 10);
  const MatrixXi K = MatrixXi::Ones(1, 10);
  m.observed.assign(10, 1);
  m.observed[3] = 0;
  const double base = forward_filter(m, K).loglik;
  m.y[3] = 1e6;
  CHECK(forward_filter(m, K).loglik == base);
  CHECK(std::isfinite(base));
}

TEST_CASE("ffbs draws have the smoothed moments") {
  const Eigen::Index p = 2, T = 12;
  const RwModel m = random_model(3, p, T);
  const MatrixXi K = MatrixXi::Ones(p, T);
  const SmootherOutput sm = smoother_moments(m, K);
  Rng rng = substream(4, {});
  const int n = 20000;
  MatrixXd acc = MatrixXd::Zero(p, T + 1), acc2 = MatrixXd::Zero(p, T + 1);
  for (int i = 0; i < n; ++i) {
    const MatrixXd s = ffbs(m, K, rng);
    acc += s;
    acc2 += s.cwiseProduct(s);
  }
  const MatrixXd mean = acc / n;
  for (Eigen::Index t = 0; t <= T; ++t)
    for (Eigen::Index j = 0; j < p; ++j) {
      const double sd = std::sqrt(sm.cov[t](j, j));
      CHECK(std::abs(mean(j, t) - sm.mean(j, t)) < 4.5 * sd / std::sqrt(double(n)));
      const double var = acc2(j, t) / n - mean(j, t) * mean(j, t);
      CHECK(var == doctest::Approx(sm.cov[t](j, j)).epsilon(0.05));
    }
}

TEST_CASE("no breaks keep the state path flat") {
  const RwModel m = random_model(5, 2, 10);
  Rng rng = substream(5, {});
  const MatrixXd s = ffbs(m, MatrixXi::Zero(2, 10), rng);
  for (Eigen::Index t = 1; t <= 10; ++t) CHECK((s.col(t) - s.col(0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("GCK sweeps target the exact break posterior") {
  // One state, T = 3: enumerate all 8 indicator configurations.
  RwModel m = random_model(12, 1, 3);
  m.y << 0.0, 2.5, -1.0;
  m.q2 << 1.5;
  const VectorXd pi = VectorXd::Constant(1, 0.3);
  std::map<int, double> exact;
  double z = 0;
  for (int c = 0; c < 8; ++c) {
    MatrixXi K(1, 3);
    for (int t = 0; t < 3; ++t) K(0, t) = (c >> t) & 1;
    const int nb = K.sum();
    const double w = std::exp(dense_posterior(m, K).loglik) * std::pow(0.3, nb) * std::pow(0.7, 3 - nb);
    exact[c] = w;
    z += w;
  }
  Rng rng = substream(13, {});
  MatrixXi K = MatrixXi::Zero(1, 3);
  std::map<int, int> freq;
  const int n = 40000;
  for (int i = 0; i < 200; ++i) gck_sample(m, pi, K, rng);
  for (int i = 0; i < n; ++i) {
    gck_sample(m, pi, K, rng);
    freq[K(0, 0) + 2 * K(0, 1) + 4 * K(0, 2)]++;
  }
  for (int c = 0; c < 8; ++c) {
    const double p = exact[c] / z;
    // Markov chain draws: allow a few times the iid standard error.
    CHECK(std::abs(freq[c] / double(n) - p) < 6.0 * std::sqrt(p * (1 - p) / n) + 1e-3);
  }
}

TEST_CASE("multivariate normal draws") {
  MatrixXd S(2, 2);
  S << 2.0, 0.8, 0.8, 1.0;
  VectorXd mu(2);
  mu << 1.0, -1.0;
  Rng rng = substream(1, {});
  const int n = 50000;
  MatrixXd acc = MatrixXd::Zero(2, 2);
  VectorXd am = VectorXd::Zero(2);
  for (int i = 0; i < n; ++i) {
    const VectorXd x = sample_mvn(mu, S, rng);
    am += x;
    acc += (x - mu) * (x - mu).transpose();
  }
  CHECK(((am / n) - mu).cwiseAbs().maxCoeff() < 0.03);
  CHECK(((acc / n) - S).cwiseAbs().maxCoeff() < 0.05);
  // Singular covariance is allowed.
  MatrixXd D = MatrixXd::Zero(2, 2);
  D(0, 0) = 1.0;
  const VectorXd x = sample_mvn(mu, D, rng);
  CHECK(x[1] == -1.0);
}

TEST_CASE("non-positive prediction variance raises NumericalError") {
  RwModel m = random_model(2, 1, 4);
  m.H.setConstant(-10.0);
  try {
    forward_filter(m, MatrixXi::Ones(1, 4));
    FAIL("expected NumericalError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericalError);
  }
}
