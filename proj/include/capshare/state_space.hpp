#pragma once

#include <Eigen/Dense>
#include <vector>

#include "capshare/rng.hpp"

namespace capshare {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Random-walk state space with switching innovations:
///   y_t = x_t' s_t + e_t,                e_t ~ N(0, H_t)
///   s_t = s_{t-1} + diag(k_t) w_t,       w_t ~ N(0, diag(q2))
///   s_0 ~ N(m0, P0)
/// Observations run t = 1..T and are stored 0-based (column t-1 of X).
/// Entries with observed[t] == 0 carry no likelihood.
struct RwModel {
  MatrixXd X;  // p x T
  VectorXd y;  // T
  VectorXd H;  // T
  std::vector<char> observed;
  VectorXd m0;
  MatrixXd P0;
  VectorXd q2;

  Eigen::Index dim() const { return m0.size(); }
  Eigen::Index length() const { return y.size(); }
  bool has_obs(Eigen::Index t) const { return observed.empty() || observed[static_cast<std::size_t>(t)] != 0; }
};

struct FilterOutput {
  std::vector<VectorXd> m;  // T+1 filtered means, m[0] = m0
  std::vector<MatrixXd> P;  // T+1 filtered covariances
  double loglik = 0.0;
};

FilterOutput forward_filter(const RwModel& model, const MatrixXi& K);

/// One Gerlach-Carter-Kohn sweep: draws each column of K (p x T) from its
/// conditional given the other columns with the states integrated out.
/// `pi` holds the per-component break probabilities.
void gck_sample(const RwModel& model, const VectorXd& pi, MatrixXi& K, Rng& rng);

/// Forward filter, backward sampler. Returns states s_0..s_T as p x (T+1).
MatrixXd ffbs(const RwModel& model, const MatrixXi& K, Rng& rng);

struct SmootherOutput {
  MatrixXd mean;             // p x (T+1)
  std::vector<MatrixXd> cov;  // T+1
};

/// Rauch-Tung-Striebel smoothed moments (deterministic counterpart of ffbs).
SmootherOutput smoother_moments(const RwModel& model, const MatrixXi& K);

/// Draw from N(mean, cov) for a positive semi-definite cov.
VectorXd sample_mvn(const VectorXd& mean, const MatrixXd& cov, Rng& rng);

}  // namespace capshare
