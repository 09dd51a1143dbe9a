#include "capshare/btvbsv.hpp"

#include <algorithm>
#include <cmath>

#include "capshare/fmb.hpp"
#include "capshare/parallel.hpp"

namespace capshare {

namespace {

constexpr double kPiFloor = 1e-12;
constexpr double kQ2Min = 1e-10;
constexpr double kQ2Max = 1e10;
constexpr std::uint64_t kBreakStream = 0x6272656b;  // separates break draws from state draws

MatrixXd design(const MatrixXd& factors) {
  MatrixXd X(factors.cols() + 1, factors.rows());
  X.row(0).setOnes();
  X.bottomRows(factors.cols()) = factors.transpose();
  return X;
}

double clamp_q2(double q) { return std::clamp(q, kQ2Min, kQ2Max); }

void check_panel(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper) {
  if (factors.rows() != returns.cols()) throw Error(ErrorKind::DimensionError, "btvbsv: factors and returns misaligned");
  if (hyper.mu_beta.rows() != returns.rows() || hyper.mu_beta.cols() != factors.cols() + 1 ||
      hyper.var_beta.rows() != returns.rows() || hyper.var_beta.cols() != factors.cols() + 1)
    throw Error(ErrorKind::DimensionError, "btvbsv: beta priors do not match the panel");
  if (factors.cols() > 8) throw Error(ErrorKind::DimensionError, "btvbsv: at most 8 factors are supported");
}

}  // namespace

void Hyperparams::validate() const {
  const bool ok = var_lnsig2 > 0 && a_beta > 0 && b_beta > 0 && a_v > 0 && b_v > 0 && gamma_beta > 0 &&
                  theta_beta > 0 && gamma_v > 0 && theta_v > 0 && lambda_var > 0 && psi0 > 0 && Psi0 > 0 &&
                  (var_beta.array() > 0).all() && mu_beta.allFinite() && std::isfinite(mu_lnsig2) &&
                  std::isfinite(lambda_mean);
  if (!ok) throw Error(ErrorKind::ParameterError, "hyperparameters: variances, scales and Beta parameters must be positive");
}

Hyperparams default_hyperparams(Eigen::Index n_assets, Eigen::Index n_factors) {
  Hyperparams h;
  h.mu_beta = MatrixXd::Zero(n_assets, n_factors + 1);
  h.var_beta = MatrixXd::Constant(n_assets, n_factors + 1, 10.0);
  return h;
}

Hyperparams init_priors(const MatrixXd& returns, const MatrixXd& factors, int training_years) {
  const Eigen::Index N = returns.rows();
  const Eigen::Index K = factors.cols();
  const Eigen::Index months = 12 * static_cast<Eigen::Index>(training_years);
  if (training_years < 1) throw Error(ErrorKind::ParameterError, "init_priors: training_years must be positive");
  if (factors.rows() != returns.cols()) throw Error(ErrorKind::DimensionError, "init_priors: factors and returns misaligned");
  if (returns.cols() < months || months < K + 3)
    throw Error(ErrorKind::InsufficientData, "init_priors: panel shorter than the training window");
  Hyperparams h = default_hyperparams(N, K);
  const MatrixXd F = factors.topRows(months);
  for (Eigen::Index i = 0; i < N; ++i) {
    const OlsFit fit = ols(returns.row(i).head(months).transpose(), F, true);
    h.mu_beta.row(i) = fit.coefficients.transpose();
    h.var_beta.row(i) = fit.stderrs.array().square().max(1e-10).matrix().transpose();
  }
  return h;
}

Hyperparams init_priors(const ReturnPanel& panel, const FactorSet& factors, int training_years) {
  const auto [p, f] = align(panel, factors);
  return init_priors(p.returns, f.values, training_years);
}

double sample_break_probability(double a, double b, long n_breaks, long n_periods, Rng& rng) {
  return beta_draw(rng, a + static_cast<double>(n_breaks), b + static_cast<double>(n_periods - n_breaks));
}

double sample_break_variance(double shape, double scale, long n_breaks, double sum_sq_increments, Rng& rng) {
  return inv_gamma2_draw(rng, shape + static_cast<double>(n_breaks), scale + sum_sq_increments);
}

double sample_tau2(double psi0, double Psi0, long n_obs, double ssr, Rng& rng) {
  return inv_gamma2_draw(rng, psi0 + static_cast<double>(n_obs), Psi0 + ssr);
}

std::pair<VectorXd, MatrixXd> lambda_posterior(const MatrixXd& ZtZ, const VectorXd& Ztr, double tau2,
                                               double prior_mean, double prior_var, bool& ridge) {
  const Eigen::Index p = ZtZ.rows();
  MatrixXd prec = ZtZ / tau2 + MatrixXd::Identity(p, p) / prior_var;
  Eigen::LLT<MatrixXd> llt(prec);
  ridge = false;
  if (llt.info() != Eigen::Success) {
    prec += 1e-8 * MatrixXd::Identity(p, p);
    llt.compute(prec);
    ridge = true;
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "risk-price precision is not positive definite");
  }
  const MatrixXd cov = llt.solve(MatrixXd::Identity(p, p));
  const VectorXd mean = cov * (Ztr / tau2 + VectorXd::Constant(p, prior_mean / prior_var));
  return {mean, cov};
}

GibbsState initial_state(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper) {
  const Eigen::Index N = returns.rows();
  const Eigen::Index T = returns.cols();
  const Eigen::Index p = factors.cols() + 1;
  const MatrixXd X = design(factors);
  GibbsState s;
  s.port.resize(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    PortfolioState& ps = s.port[static_cast<std::size_t>(i)];
    ps.beta = hyper.mu_beta.row(i).transpose().replicate(1, T + 1);
    const VectorXd e = returns.row(i).transpose() - X.transpose() * hyper.mu_beta.row(i).transpose();
    ps.h = VectorXd::Constant(T + 1, std::log(std::max(e.squaredNorm() / static_cast<double>(T), 1e-6)));
    ps.k_beta = MatrixXi::Zero(p, T);
    ps.k_v = VectorXi::Zero(T);
    ps.mix = VectorXi::Constant(T, 4);
    ps.q2_beta = VectorXd::Constant(p, hyper.theta_beta / (hyper.gamma_beta + 2.0));
    ps.q2_v = hyper.theta_v / (hyper.gamma_v + 2.0);
    ps.pi_beta = VectorXd::Constant(p, hyper.a_beta / (hyper.a_beta + hyper.b_beta));
    ps.pi_v = hyper.a_v / (hyper.a_v + hyper.b_v);
  }
  s.lambda = VectorXd::Constant(p, hyper.lambda_mean);
  s.tau2 = hyper.Psi0 / (hyper.psi0 + 2.0);
  return s;
}

void sample_states(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper, GibbsState& state,
                   std::uint64_t seed, std::uint64_t iter, int workers, bool use_likelihood) {
  const Eigen::Index N = returns.rows();
  const Eigen::Index T = returns.cols();
  const MatrixXd X = design(factors);
  const std::vector<char> mask(static_cast<std::size_t>(T), use_likelihood ? 1 : 0);

  parallel_for(static_cast<std::size_t>(N), workers, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    PortfolioState& ps = state.port[ii];
    Rng rng = substream(seed, {iter, ii + 1});

    RwModel mb;
    mb.X = X;
    mb.y = returns.row(i).transpose();
    mb.H = ps.h.tail(T).array().exp();
    mb.observed = mask;
    mb.m0 = hyper.mu_beta.row(i).transpose();
    mb.P0 = hyper.var_beta.row(i).asDiagonal();
    mb.q2 = ps.q2_beta.unaryExpr(&clamp_q2);
    gck_sample(mb, ps.pi_beta, ps.k_beta, rng);
    ps.beta = ffbs(mb, ps.k_beta, rng);

    RwModel mh;
    mh.X = MatrixXd::Ones(1, T);
    mh.y = VectorXd::Zero(T);
    mh.H = VectorXd::Ones(T);
    mh.observed = mask;
    mh.m0 = VectorXd::Constant(1, hyper.mu_lnsig2);
    mh.P0 = MatrixXd::Constant(1, 1, hyper.var_lnsig2);
    mh.q2 = VectorXd::Constant(1, clamp_q2(ps.q2_v));
    if (use_likelihood) {
      std::array<double, 10> w{};
      for (Eigen::Index t = 0; t < T; ++t) {
        const double e = returns(i, t) - X.col(t).dot(ps.beta.col(t + 1));
        const double ystar = std::log(e * e + kSvOffset);
        const double d = ystar - ps.h[t + 1];
        double total = 0.0;
        for (std::size_t j = 0; j < 10; ++j) {
          const double z = d - SvMixture::mean[j];
          w[j] = SvMixture::prob[j] * std::exp(-0.5 * z * z / SvMixture::var[j]) / std::sqrt(SvMixture::var[j]);
          total += w[j];
        }
        int pick = 9;
        if (total > 0.0) {
          double u = uniform01(rng) * total;
          for (int j = 0; j < 10; ++j) {
            if (u < w[static_cast<std::size_t>(j)]) {
              pick = j;
              break;
            }
            u -= w[static_cast<std::size_t>(j)];
          }
        } else {
          pick = d > 0 ? 0 : 9;
        }
        ps.mix[t] = pick;
        mh.y[t] = ystar - SvMixture::mean[static_cast<std::size_t>(pick)];
        mh.H[t] = SvMixture::var[static_cast<std::size_t>(pick)];
      }
    }
    MatrixXi kv = ps.k_v.transpose();
    gck_sample(mh, VectorXd::Constant(1, ps.pi_v), kv, rng);
    ps.k_v = kv.row(0).transpose();
    ps.h = ffbs(mh, kv, rng).row(0).transpose();

    if (!ps.beta.allFinite() || !ps.h.allFinite())
      throw Error(ErrorKind::NumericalError, "state draw for portfolio " + std::to_string(ii) + " is not finite");
  });
}

void sample_breaks(const Hyperparams& hyper, GibbsState& state, std::uint64_t seed, std::uint64_t iter) {
  for (std::size_t i = 0; i < state.port.size(); ++i) {
    PortfolioState& ps = state.port[i];
    Rng rng = substream(seed, {iter, i + 1, kBreakStream});
    const Eigen::Index T = ps.k_v.size();
    for (Eigen::Index j = 0; j < ps.k_beta.rows(); ++j) {
      long n = 0;
      double ss = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) {
        if (!ps.k_beta(j, t)) continue;
        ++n;
        const double d = ps.beta(j, t + 1) - ps.beta(j, t);
        ss += d * d;
      }
      ps.pi_beta[j] = std::clamp(sample_break_probability(hyper.a_beta, hyper.b_beta, n, T, rng), kPiFloor, 1.0 - kPiFloor);
      ps.q2_beta[j] = sample_break_variance(hyper.gamma_beta, hyper.theta_beta, n, ss, rng);
    }
    long n = 0;
    double ss = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!ps.k_v[t]) continue;
      ++n;
      const double d = ps.h[t + 1] - ps.h[t];
      ss += d * d;
    }
    ps.pi_v = std::clamp(sample_break_probability(hyper.a_v, hyper.b_v, n, T, rng), kPiFloor, 1.0 - kPiFloor);
    ps.q2_v = sample_break_variance(hyper.gamma_v, hyper.theta_v, n, ss, rng);
  }
}

void sample_risk_prices(const MatrixXd& returns, const Hyperparams& hyper, GibbsState& state, Rng& rng,
                        bool use_likelihood) {
  const Eigen::Index p = state.lambda.size();
  MatrixXd ZtZ = MatrixXd::Zero(p, p);
  VectorXd Ztr = VectorXd::Zero(p);
  const Eigen::Index N = returns.rows();
  const Eigen::Index T = returns.cols();
  VectorXd z(p);
  if (use_likelihood) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const MatrixXd& B = state.port[static_cast<std::size_t>(i)].beta;
      for (Eigen::Index t = 0; t < T; ++t) {
        z[0] = 1.0;
        z.tail(p - 1) = B.col(t + 1).tail(p - 1);
        ZtZ.noalias() += z * z.transpose();
        Ztr += z * returns(i, t);
      }
    }
  }
  bool ridge = false;
  const auto [mean, cov] = lambda_posterior(ZtZ, Ztr, state.tau2, hyper.lambda_mean, hyper.lambda_var, ridge);
  state.ridge = ridge;
  state.lambda = sample_mvn(mean, cov, rng);

  double ssr = 0.0;
  long n_obs = 0;
  if (use_likelihood) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const MatrixXd& B = state.port[static_cast<std::size_t>(i)].beta;
      for (Eigen::Index t = 0; t < T; ++t) {
        z[0] = 1.0;
        z.tail(p - 1) = B.col(t + 1).tail(p - 1);
        const double e = returns(i, t) - z.dot(state.lambda);
        ssr += e * e;
      }
    }
    n_obs = static_cast<long>(N * T);
  }
  state.tau2 = sample_tau2(hyper.psi0, hyper.Psi0, n_obs, ssr, rng);
}

namespace {

void store_draw(PosteriorDraws& d, const GibbsState& s, long iter) {
  const Eigen::Index N = d.n_assets, p = d.n_coef, T = d.n_periods;
  const Eigen::Index row = d.size();
  d.iteration.push_back(iter);
  auto grow = [row](MatrixXd& m) { m.conservativeResize(row + 1, m.cols()); };
  grow(d.q2_beta);
  grow(d.q2_v);
  grow(d.pi_beta);
  grow(d.pi_v);
  grow(d.lambda);
  d.tau2.conservativeResize(row + 1);
  if (d.has_paths) {
    d.B.emplace_back(static_cast<std::size_t>(N * p * T));
    d.K_beta.emplace_back(static_cast<std::size_t>(N * p * T));
    d.lnsig2.emplace_back(static_cast<std::size_t>(N * T));
    d.K_sigma.emplace_back(static_cast<std::size_t>(N * T));
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    const PortfolioState& ps = s.port[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) {
      d.q2_beta(row, i * p + j) = ps.q2_beta[j];
      d.pi_beta(row, i * p + j) = ps.pi_beta[j];
      if (!d.has_paths) continue;
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto o = static_cast<std::size_t>(d.beta_offset(i, j, t));
        d.B.back()[o] = ps.beta(j, t + 1);
        d.K_beta.back()[o] = static_cast<std::uint8_t>(ps.k_beta(j, t));
      }
    }
    d.q2_v(row, i) = ps.q2_v;
    d.pi_v(row, i) = ps.pi_v;
    if (d.has_paths) {
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto o = static_cast<std::size_t>(d.sigma_offset(i, t));
        d.lnsig2.back()[o] = ps.h[t + 1];
        d.K_sigma.back()[o] = static_cast<std::uint8_t>(ps.k_v[t]);
      }
    }
  }
  d.lambda.row(row) = s.lambda.transpose();
  d.tau2[row] = s.tau2;
  d.ridge.push_back(s.ridge ? 1 : 0);
}

}  // namespace

PosteriorDraws gibbs_run(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper,
                         const GibbsOptions& opts, const GibbsState* restart) {
  check_panel(returns, factors, hyper);
  hyper.validate();
  const int burn = opts.burn < 0 ? opts.n_iter / 2 : opts.burn;
  if (!(opts.n_iter > burn) || burn < 0) throw Error(ErrorKind::ParameterError, "gibbs_run: need n_iter > burn >= 0");
  if (opts.thin < 1) throw Error(ErrorKind::ParameterError, "gibbs_run: thin must be >= 1");

  const Eigen::Index N = returns.rows();
  const Eigen::Index p = factors.cols() + 1;
  PosteriorDraws d;
  d.n_assets = N;
  d.n_coef = p;
  d.n_periods = returns.cols();
  d.has_paths = opts.store_paths;
  d.q2_beta.resize(0, N * p);
  d.pi_beta.resize(0, N * p);
  d.q2_v.resize(0, N);
  d.pi_v.resize(0, N);
  d.lambda.resize(0, p);

  GibbsState state = restart ? *restart : initial_state(returns, factors, hyper);
  if (static_cast<Eigen::Index>(state.port.size()) != N || state.lambda.size() != p)
    throw Error(ErrorKind::DimensionError, "gibbs_run: restart state does not match the panel");
  const bool lik = !opts.prior_only;
  for (long it = 0; it < opts.n_iter; ++it) {
    const auto key = static_cast<std::uint64_t>(it + opts.iteration_offset);
    try {
      sample_states(returns, factors, hyper, state, opts.seed, key, opts.workers, lik);
      sample_breaks(hyper, state, opts.seed, key);
      Rng rng = substream(opts.seed, {key, 0});
      sample_risk_prices(returns, hyper, state, rng, lik);
    } catch (const Error& e) {
      d.abort = AbortInfo{it + opts.iteration_offset, e.kind(),
                          "iteration " + std::to_string(it + opts.iteration_offset) + ": " + e.what()};
      break;
    }
    if (it >= burn && (it - burn) % opts.thin == 0) store_draw(d, state, it + opts.iteration_offset);
  }
  d.last = std::move(state);
  return d;
}

BreakProbabilities break_probabilities(const PosteriorDraws& draws) {
  if (draws.size() == 0 || !draws.has_paths)
    throw Error(ErrorKind::InsufficientData, "break_probabilities: no stored indicator draws");
  const Eigen::Index N = draws.n_assets, p = draws.n_coef, T = draws.n_periods;
  BreakProbabilities out;
  out.beta.assign(static_cast<std::size_t>(N), MatrixXd::Zero(p, T));
  out.sigma = MatrixXd::Zero(N, T);
  for (Eigen::Index d = 0; d < draws.size(); ++d) {
    const auto& kb = draws.K_beta[static_cast<std::size_t>(d)];
    const auto& ks = draws.K_sigma[static_cast<std::size_t>(d)];
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index t = 0; t < T; ++t)
          out.beta[static_cast<std::size_t>(i)](j, t) += kb[static_cast<std::size_t>(draws.beta_offset(i, j, t))];
      for (Eigen::Index t = 0; t < T; ++t) out.sigma(i, t) += ks[static_cast<std::size_t>(draws.sigma_offset(i, t))];
    }
  }
  const double n = static_cast<double>(draws.size());
  for (auto& m : out.beta) m /= n;
  out.sigma /= n;
  return out;
}

std::vector<MatrixXd> posterior_mean_beta(const PosteriorDraws& draws) {
  if (draws.size() == 0 || !draws.has_paths)
    throw Error(ErrorKind::InsufficientData, "posterior_mean_beta: no stored beta draws");
  const Eigen::Index N = draws.n_assets, p = draws.n_coef, T = draws.n_periods;
  std::vector<MatrixXd> out(static_cast<std::size_t>(N), MatrixXd::Zero(p, T));
  for (const auto& b : draws.B)
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index t = 0; t < T; ++t)
          out[static_cast<std::size_t>(i)](j, t) += b[static_cast<std::size_t>(draws.beta_offset(i, j, t))];
  for (auto& m : out) m /= static_cast<double>(draws.size());
  return out;
}

}  // namespace capshare
