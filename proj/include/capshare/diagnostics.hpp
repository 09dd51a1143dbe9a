#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capshare/btvbsv.hpp"

namespace capshare {

/// Newey-West (Bartlett) long-run variance of x; bandwidth floor(4 (n/100)^{2/9}) when lag < 0.
double spectral_density_zero(const double* x, std::size_t n, int lag = -1);

/// Geweke mean-equality z between the first `first` and last `last` fractions of
/// the chain. Empty when the chain (or either window) has no variation.
std::optional<double> geweke_z(const std::vector<double>& chain, double first = 0.1, double last = 0.5);

struct BlockDiagnostics {
  std::string block;
  long n_chains = 0;
  long n_excluded = 0;
  double rejection_rate_5 = 0.0;
  double rejection_rate_10 = 0.0;
  std::vector<double> z;
};

struct ConvergenceReport {
  std::vector<BlockDiagnostics> blocks;  // B, K, Sigma, Q, pi, lambda
  long excluded = 0;

  const BlockDiagnostics& block(const std::string& name) const;
};

inline constexpr double kGewekeCrit5 = 1.959963984540054;
inline constexpr double kGewekeCrit10 = 1.6448536269514722;

/// Rejection summary for a set of chains (rows = draws, columns = chains).
BlockDiagnostics diagnose_block(const std::string& name, const MatrixXd& chains, double first = 0.1,
                                double last = 0.5);

ConvergenceReport convergence_diagnostics(const PosteriorDraws& draws, double first = 0.1, double last = 0.5);

}  // namespace capshare
