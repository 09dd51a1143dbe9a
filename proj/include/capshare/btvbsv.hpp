#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "capshare/factors.hpp"
#include "capshare/state_space.hpp"

namespace capshare {

/// Inverse Gamma-2 priors are (shape, scale) pairs with density
/// ∝ x^{-(shape+2)/2} exp(-scale/(2x)); mean scale/(shape-2) for shape > 2.
struct Hyperparams {
  MatrixXd mu_beta;   // N x (K+1)
  MatrixXd var_beta;  // N x (K+1)
  double mu_lnsig2 = 2.0;
  double var_lnsig2 = 10.0;
  double a_beta = 3.2;
  double b_beta = 60.0;
  double a_v = 1.0;
  double b_v = 99.0;
  double gamma_beta = 0.5;
  double theta_beta = 100.0;
  double gamma_v = 0.2;
  double theta_v = 50.0;
  double lambda_mean = 0.0;
  double lambda_var = 1000.0;
  double psi0 = 0.1;
  double Psi0 = 10.0;

  void validate() const;
};

Hyperparams default_hyperparams(Eigen::Index n_assets, Eigen::Index n_factors);

/// Beta priors from per-portfolio OLS on the first `training_years` of data.
Hyperparams init_priors(const MatrixXd& returns, const MatrixXd& factors, int training_years = 10);
Hyperparams init_priors(const ReturnPanel& panel, const FactorSet& factors, int training_years = 10);

/// The standard 10-component normal mixture approximation to ln chi^2_1.
struct SvMixture {
  static constexpr std::array<double, 10> prob{0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                                               0.18842, 0.12047, 0.05591, 0.01575, 0.00115};
  static constexpr std::array<double, 10> mean{1.92677,  1.34744,  0.73504,  0.02266,  -0.85173,
                                               -1.97278, -3.46788, -5.55246, -8.68384, -14.65000};
  static constexpr std::array<double, 10> var{0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                                              0.98583, 1.57469, 2.54498, 4.16591, 7.33342};
};

inline constexpr double kSvOffset = 1e-8;

struct PortfolioState {
  MatrixXd beta;      // (K+1) x (T+1), column 0 is the initial state
  VectorXd h;         // T+1 log variances
  MatrixXi k_beta;    // (K+1) x T
  VectorXi k_v;       // T
  VectorXi mix;       // T mixture components
  VectorXd q2_beta;   // K+1
  double q2_v = 1.0;
  VectorXd pi_beta;   // K+1
  double pi_v = 0.01;
};

struct GibbsState {
  std::vector<PortfolioState> port;
  VectorXd lambda;  // K+1
  double tau2 = 1.0;
  bool ridge = false;
};

GibbsState initial_state(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper);

/// Blocked draw of break indicators and states for every portfolio: beta breaks
/// (states integrated out), beta path, SV mixture components, variance breaks,
/// log-variance path. Portfolio i uses the substream (seed, iter, i+1).
void sample_states(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper, GibbsState& state,
                   std::uint64_t seed, std::uint64_t iter, int workers = 1, bool use_likelihood = true);

/// Conjugate updates of break probabilities and break-size variances.
void sample_breaks(const Hyperparams& hyper, GibbsState& state, std::uint64_t seed, std::uint64_t iter);

/// Normal draw of lambda and inverse Gamma-2 draw of tau2 from r_it = z_it' lambda + e_it,
/// z_it = [1, beta_{i,1..K,t}].
void sample_risk_prices(const MatrixXd& returns, const Hyperparams& hyper, GibbsState& state, Rng& rng,
                        bool use_likelihood = true);

// Conjugate building blocks.
double sample_break_probability(double a, double b, long n_breaks, long n_periods, Rng& rng);
double sample_break_variance(double shape, double scale, long n_breaks, double sum_sq_increments, Rng& rng);
double sample_tau2(double psi0, double Psi0, long n_obs, double ssr, Rng& rng);
/// Returns the posterior mean and covariance of lambda; `ridge` is set when jitter was needed.
std::pair<VectorXd, MatrixXd> lambda_posterior(const MatrixXd& ZtZ, const VectorXd& Ztr, double tau2,
                                               double prior_mean, double prior_var, bool& ridge);

struct GibbsOptions {
  int n_iter = 2000;
  int burn = -1;  // -1: n_iter / 2
  int thin = 5;
  std::uint64_t seed = 0;
  int workers = 1;
  bool prior_only = false;
  bool store_paths = true;
  long iteration_offset = 0;  // set to the previous n_iter when restarting a chain
};

struct AbortInfo {
  long iteration = 0;
  ErrorKind kind = ErrorKind::NumericalError;
  std::string message;
};

struct PosteriorDraws {
  Eigen::Index n_assets = 0;
  Eigen::Index n_coef = 0;  // K+1
  Eigen::Index n_periods = 0;
  bool has_paths = true;
  std::vector<long> iteration;
  // Path blocks, one entry per stored draw, laid out [i][j][t] or [i][t].
  std::vector<std::vector<double>> B;
  std::vector<std::vector<double>> lnsig2;
  std::vector<std::vector<std::uint8_t>> K_beta;
  std::vector<std::vector<std::uint8_t>> K_sigma;
  // Scalar blocks: rows are draws.
  MatrixXd q2_beta;  // draws x N*(K+1)
  MatrixXd q2_v;     // draws x N
  MatrixXd pi_beta;  // draws x N*(K+1)
  MatrixXd pi_v;     // draws x N
  MatrixXd lambda;   // draws x (K+1)
  VectorXd tau2;
  std::vector<char> ridge;
  std::optional<AbortInfo> abort;
  GibbsState last;

  Eigen::Index size() const { return static_cast<Eigen::Index>(iteration.size()); }
  Eigen::Index beta_offset(Eigen::Index i, Eigen::Index j, Eigen::Index t) const {
    return (i * n_coef + j) * n_periods + t;
  }
  Eigen::Index sigma_offset(Eigen::Index i, Eigen::Index t) const { return i * n_periods + t; }
};

/// Runs the sampler; on a step error the draws collected so far are returned
/// with `abort` set. `restart` continues a chain from a previous final state.
PosteriorDraws gibbs_run(const MatrixXd& returns, const MatrixXd& factors, const Hyperparams& hyper,
                         const GibbsOptions& opts, const GibbsState* restart = nullptr);

struct BreakProbabilities {
  std::vector<MatrixXd> beta;  // per portfolio, (K+1) x T
  MatrixXd sigma;              // N x T
};

BreakProbabilities break_probabilities(const PosteriorDraws& draws);

/// Posterior mean of beta paths, per portfolio (K+1) x T.
std::vector<MatrixXd> posterior_mean_beta(const PosteriorDraws& draws);

}  // namespace capshare
