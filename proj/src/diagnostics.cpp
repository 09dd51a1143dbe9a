#include "capshare/diagnostics.hpp"

#include <cmath>

namespace capshare {

double spectral_density_zero(const double* x, std::size_t n, int lag) {
  if (n < 2) return 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m += x[i];
  m /= static_cast<double>(n);
  auto acov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = k; i < n; ++i) s += (x[i] - m) * (x[i - k] - m);
    return s / static_cast<double>(n);
  };
  const std::size_t L = lag >= 0 ? static_cast<std::size_t>(lag)
                                 : static_cast<std::size_t>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
  double s = acov(0);
  for (std::size_t k = 1; k <= std::min(L, n - 1); ++k)
    s += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(L + 1)) * acov(k);
  return std::max(s, 0.0);
}

std::optional<double> geweke_z(const std::vector<double>& chain, double first, double last) {
  const std::size_t n = chain.size();
  const auto na = static_cast<std::size_t>(std::floor(first * static_cast<double>(n)));
  const auto nb = static_cast<std::size_t>(std::floor(last * static_cast<double>(n)));
  if (na < 2 || nb < 2 || na + nb > n) return std::nullopt;
  const double* a = chain.data();
  const double* b = chain.data() + (n - nb);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < na; ++i) ma += a[i];
  for (std::size_t i = 0; i < nb; ++i) mb += b[i];
  ma /= static_cast<double>(na);
  mb /= static_cast<double>(nb);
  const double va = spectral_density_zero(a, na) / static_cast<double>(na);
  const double vb = spectral_density_zero(b, nb) / static_cast<double>(nb);
  const double se = std::sqrt(va + vb);
  if (!(se > 0.0) || !std::isfinite(se)) return std::nullopt;
  return (ma - mb) / se;
}

BlockDiagnostics diagnose_block(const std::string& name, const MatrixXd& chains, double first, double last) {
  BlockDiagnostics b;
  b.block = name;
  long rej5 = 0, rej10 = 0;
  std::vector<double> c(static_cast<std::size_t>(chains.rows()));
  for (Eigen::Index j = 0; j < chains.cols(); ++j) {
    ++b.n_chains;
    for (Eigen::Index d = 0; d < chains.rows(); ++d) c[static_cast<std::size_t>(d)] = chains(d, j);
    const auto z = geweke_z(c, first, last);
    if (!z) {
      ++b.n_excluded;
      continue;
    }
    b.z.push_back(*z);
    if (std::abs(*z) > kGewekeCrit5) ++rej5;
    if (std::abs(*z) > kGewekeCrit10) ++rej10;
  }
  if (!b.z.empty()) {
    b.rejection_rate_5 = static_cast<double>(rej5) / static_cast<double>(b.z.size());
    b.rejection_rate_10 = static_cast<double>(rej10) / static_cast<double>(b.z.size());
  }
  return b;
}

const BlockDiagnostics& ConvergenceReport::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.block == name) return b;
  throw Error(ErrorKind::InvalidInput, "no diagnostics block '" + name + "'");
}

namespace {

template <class Vec>
MatrixXd stack_paths(const std::vector<Vec>& paths) {
  if (paths.empty()) return MatrixXd(0, 0);
  MatrixXd m(static_cast<Eigen::Index>(paths.size()), static_cast<Eigen::Index>(paths.front().size()));
  for (std::size_t d = 0; d < paths.size(); ++d)
    for (std::size_t k = 0; k < paths[d].size(); ++k)
      m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = static_cast<double>(paths[d][k]);
  return m;
}

MatrixXd hcat(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd m(a.rows(), a.cols() + b.cols());
  m << a, b;
  return m;
}

}  // namespace

ConvergenceReport convergence_diagnostics(const PosteriorDraws& draws, double first, double last) {
  if (draws.size() < 200) throw Error(ErrorKind::InsufficientData, "convergence_diagnostics: need at least 200 draws");
  ConvergenceReport r;
  if (draws.has_paths) {
    r.blocks.push_back(diagnose_block("B", stack_paths(draws.B), first, last));
    r.blocks.push_back(diagnose_block("K", hcat(stack_paths(draws.K_beta), stack_paths(draws.K_sigma)), first, last));
    r.blocks.push_back(diagnose_block("Sigma", stack_paths(draws.lnsig2), first, last));
  }
  r.blocks.push_back(diagnose_block("Q", hcat(draws.q2_beta, draws.q2_v), first, last));
  r.blocks.push_back(diagnose_block("pi", hcat(draws.pi_beta, draws.pi_v), first, last));
  MatrixXd lt(draws.size(), draws.lambda.cols() + 1);
  lt << draws.lambda, draws.tau2;
  r.blocks.push_back(diagnose_block("lambda", lt, first, last));
  for (const auto& b : r.blocks) r.excluded += b.n_excluded;
  return r;
}

}  // namespace capshare
