#include "capshare/fmb.hpp"

#include <algorithm>
#include <cmath>

#include "capshare/parallel.hpp"

namespace capshare {

namespace {

MatrixXd with_constant(const MatrixXd& X) {
  MatrixXd D(X.rows(), X.cols() + 1);
  D.col(0).setOnes();
  D.rightCols(X.cols()) = X;
  return D;
}

// (D'D)^-1 D' with a rank check.
MatrixXd projector(const MatrixXd& D, const char* who) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
  qr.setThreshold(1e-12);
  if (qr.rank() < D.cols()) throw Error(ErrorKind::SingularDesign, std::string(who) + ": design is rank deficient");
  return (D.transpose() * D).ldlt().solve(D.transpose());
}

std::vector<double> column_values(const MatrixXd& m, Eigen::Index j) {
  return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
}

}  // namespace

std::pair<ReturnPanel, FactorSet> align(const ReturnPanel& panel, const FactorSet& factors) {
  if (panel.dates == factors.dates) return {panel, factors};
  if (panel.dates.empty() || factors.dates.empty()) throw Error(ErrorKind::NoOverlap, "empty panel or factor set");
  const MonthIndex from = std::max(panel.dates.front(), factors.dates.front());
  const MonthIndex to = std::min(panel.dates.back(), factors.dates.back());
  if (to < from) throw Error(ErrorKind::NoOverlap, "panel and factors do not overlap");
  const auto p0 = std::find(panel.dates.begin(), panel.dates.end(), from) - panel.dates.begin();
  const auto f0 = std::find(factors.dates.begin(), factors.dates.end(), from) - factors.dates.begin();
  const Eigen::Index T = to - from + 1;
  ReturnPanel p = panel.columns(p0, T);
  FactorSet f = factors.rows(f0, T);
  if (p.dates != f.dates) throw Error(ErrorKind::FrequencyError, "panel and factor calendars are not contiguous");
  return {std::move(p), std::move(f)};
}

FirstPass first_pass(const MatrixXd& returns, const MatrixXd& factors) {
  const Eigen::Index T = returns.cols();
  const Eigen::Index K = factors.cols();
  if (factors.rows() != T) throw Error(ErrorKind::DimensionError, "first_pass: factors and returns misaligned");
  if (T <= K + 2) throw Error(ErrorKind::DimensionError, "first_pass: need T > K + 2");
  const MatrixXd D = with_constant(factors);
  const MatrixXd P = projector(D, "first_pass");
  FirstPass out;
  out.betas = returns * P.transpose();
  out.residuals = returns - out.betas * D.transpose();
  return out;
}

FirstPass first_pass(const ReturnPanel& panel, const FactorSet& factors) {
  const auto [p, f] = align(panel, factors);
  return first_pass(p.returns, f.values);
}

FmbResult second_pass(const MatrixXd& returns, const MatrixXd& betas) {
  const Eigen::Index N = returns.rows();
  const Eigen::Index T = returns.cols();
  const Eigen::Index K = betas.cols() - 1;
  if (betas.rows() != N || K < 0) throw Error(ErrorKind::DimensionError, "second_pass: betas do not match the panel");
  if (N <= K + 2 && K > 0) throw Error(ErrorKind::DimensionError, "second_pass: need N > K + 2");
  if (T < 1) throw Error(ErrorKind::DimensionError, "second_pass: empty panel");

  MatrixXd X(N, K + 1);
  X.col(0).setOnes();
  X.rightCols(K) = betas.rightCols(K);
  const MatrixXd P = projector(X, "second_pass");

  FmbResult out;
  out.betas = betas;
  out.lambda_t = (P * returns).transpose();
  const MatrixXd resid = returns - X * out.lambda_t.transpose();
  out.per_period_r2.resize(T);
  VectorXd adj(T);
  const double nd = static_cast<double>(N);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double m = returns.col(t).mean();
    const double sst = (returns.col(t).array() - m).square().sum();
    const double ssr = resid.col(t).squaredNorm();
    double r2 = K == 0 ? 0.0 : (sst > 0.0 ? 1.0 - ssr / sst : 1.0);
    r2 = std::clamp(r2, 0.0, 1.0);
    out.per_period_r2[t] = r2;
    adj[t] = 1.0 - (1.0 - r2) * (nd - 1.0) / (nd - static_cast<double>(K) - 1.0);
  }
  out.r2_bar = adj.mean();
  out.lambda = out.lambda_t.colwise().mean().transpose();
  out.lambda_se.resize(K + 1);
  for (Eigen::Index j = 0; j <= K; ++j)
    out.lambda_se[j] = sample_std(out.lambda_t.col(j)) / std::sqrt(static_cast<double>(T));
  return out;
}

FmbResult fama_macbeth(const MatrixXd& returns, const MatrixXd& factors) {
  return second_pass(returns, first_pass(returns, factors).betas);
}

std::vector<Eigen::Index> draw_blocks(Eigen::Index n, Eigen::Index block_len, Rng& rng) {
  if (block_len < 1 || block_len > n)
    throw Error(ErrorKind::InvalidBlock, "block length must lie in [1, length]");
  const Eigen::Index nb = (n + block_len - 1) / block_len;
  std::uniform_int_distribution<Eigen::Index> pick(0, nb - 1);
  std::vector<Eigen::Index> picks;
  // Enough picks to fill n even if every pick is the short trailing block.
  Eigen::Index filled = 0;
  while (filled < n) {
    const Eigen::Index b = pick(rng);
    picks.push_back(b);
    filled += std::min(block_len, n - b * block_len);
  }
  return picks;
}

std::vector<Eigen::Index> assemble_blocks(Eigen::Index n, Eigen::Index block_len, const std::vector<Eigen::Index>& picks) {
  if (block_len < 1 || block_len > n)
    throw Error(ErrorKind::InvalidBlock, "block length must lie in [1, length]");
  const Eigen::Index nb = (n + block_len - 1) / block_len;
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index b : picks) {
    if (b < 0 || b >= nb) throw Error(ErrorKind::InvalidBlock, "block pick out of range");
    const Eigen::Index start = b * block_len;
    const Eigen::Index stop = std::min(start + block_len, n);
    for (Eigen::Index i = start; i < stop && static_cast<Eigen::Index>(idx.size()) < n; ++i) idx.push_back(i);
    if (static_cast<Eigen::Index>(idx.size()) == n) break;
  }
  if (static_cast<Eigen::Index>(idx.size()) != n) throw Error(ErrorKind::InvalidBlock, "block picks do not fill the axis");
  return idx;
}

std::vector<Eigen::Index> block_indices(Eigen::Index n, Eigen::Index block_len, Rng& rng) {
  return assemble_blocks(n, block_len, draw_blocks(n, block_len, rng));
}

VectorXd block_resample(const VectorXd& series, Eigen::Index block_len, Rng& rng) {
  const auto idx = block_indices(series.size(), block_len, rng);
  VectorXd out(series.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = series[idx[i]];
  return out;
}

MatrixXd block_resample_panel(const MatrixXd& panel, Eigen::Index block_len, Rng& rng) {
  const auto idx = block_indices(panel.cols(), block_len, rng);
  MatrixXd out(panel.rows(), panel.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = panel.col(idx[i]);
  return out;
}

std::string significance_stars(const Interval& ci95, const Interval& ci90) {
  if (ci95.lo > 0.0 || ci95.hi < 0.0) return "**";
  if (ci90.lo > 0.0 || ci90.hi < 0.0) return "*";
  return "";
}

BootstrapResult fmb_bootstrap(const MatrixXd& returns, const MatrixXd& factors, const BootstrapOptions& opts) {
  const Eigen::Index N = returns.rows();
  const Eigen::Index T = returns.cols();
  const Eigen::Index K = factors.cols();
  if (opts.n_sims < 1) throw Error(ErrorKind::ParameterError, "fmb_bootstrap: n_sims must be positive");

  const FirstPass fp = first_pass(returns, factors);
  BootstrapResult res;
  res.point = second_pass(returns, fp.betas);
  res.n_sims = opts.n_sims;
  res.seed = opts.seed;
  res.block_ts = opts.block_ts > 0 ? opts.block_ts
                                   : std::max(1, static_cast<int>(std::lround(std::pow(static_cast<double>(T), 0.2))));
  res.block_cs = opts.block_cs;
  if (res.block_ts > T - 1) throw Error(ErrorKind::InvalidBlock, "fmb_bootstrap: time block longer than the sample");
  if (res.block_cs < 0 || res.block_cs > N) throw Error(ErrorKind::InvalidBlock, "fmb_bootstrap: cross-sectional block exceeds N");

  // Factor AR(1) dynamics (with intercept) and their residuals, (T-1) x K.
  VectorXd ar_c(K), ar_rho(K);
  MatrixXd ar_resid(T - 1, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Ar1Fit a = ar1_fit(VectorXd(factors.col(k)), true);
    ar_c[k] = a.intercept;
    ar_rho[k] = a.rho;
    ar_resid.col(k) = a.residuals;
  }
  const MatrixXd alpha_beta = fp.betas;

  const int cols = static_cast<int>(K + 2);
  MatrixXd draws(opts.n_sims, cols);
  std::vector<char> ok(static_cast<std::size_t>(opts.n_sims), 0);

  parallel_for(static_cast<std::size_t>(opts.n_sims), opts.workers, [&](std::size_t rep) {
    Rng rng = substream(opts.seed, {static_cast<std::uint64_t>(rep)});
    try {
      const auto eidx = block_indices(T - 1, res.block_ts, rng);
      MatrixXd f(T, K);
      f.row(0) = factors.row(0);
      for (Eigen::Index t = 1; t < T; ++t)
        f.row(t) = (ar_c + ar_rho.cwiseProduct(f.row(t - 1).transpose()) + ar_resid.row(eidx[t - 1]).transpose()).transpose();

      const auto ridx = block_indices(T, res.block_ts, rng);
      MatrixXd r = alpha_beta * with_constant(f).transpose();
      for (Eigen::Index t = 0; t < T; ++t) r.col(t) += fp.residuals.col(ridx[t]);

      const FirstPass bp = first_pass(r, f);
      FmbResult sp = second_pass(r, bp.betas);
      if (res.block_cs > 0) {
        // Pricing errors resampled in portfolio blocks, one draw shared by every period.
        MatrixXd X(N, K + 1);
        X.col(0).setOnes();
        X.rightCols(K) = bp.betas.rightCols(K);
        const MatrixXd fitted = X * sp.lambda_t.transpose();
        const MatrixXd err = r - fitted;
        const auto pidx = block_indices(N, res.block_cs, rng);
        MatrixXd rr = fitted;
        for (Eigen::Index i = 0; i < N; ++i) rr.row(i) += err.row(pidx[i]);
        sp = second_pass(rr, bp.betas);
      }
      draws.row(static_cast<Eigen::Index>(rep)).head(K + 1) = sp.lambda.transpose();
      draws(static_cast<Eigen::Index>(rep), K + 1) = sp.r2_bar;
      ok[rep] = std::isfinite(sp.r2_bar) && sp.lambda.allFinite();
    } catch (const Error&) {
      ok[rep] = 0;
    }
  });

  Eigen::Index good = 0;
  for (char c : ok) good += c;
  res.failed = opts.n_sims - static_cast<int>(good);
  if (good == 0) throw Error(ErrorKind::NumericalError, "fmb_bootstrap: every replication failed");
  res.draws.resize(good, cols);
  for (Eigen::Index rep = 0, g = 0; rep < opts.n_sims; ++rep)
    if (ok[static_cast<std::size_t>(rep)]) res.draws.row(g++) = draws.row(rep);

  for (int j = 0; j < cols; ++j) {
    const auto v = column_values(res.draws, j);
    res.ci95.push_back({quantile(v, 0.025), quantile(v, 0.975)});
    res.ci90.push_back({quantile(v, 0.05), quantile(v, 0.95)});
    res.stars.push_back(significance_stars(res.ci95.back(), res.ci90.back()));
  }
  return res;
}

BootstrapResult fmb_bootstrap(const ReturnPanel& panel, const FactorSet& factors, const BootstrapOptions& opts) {
  const auto [p, f] = align(panel, factors);
  return fmb_bootstrap(p.returns, f.values, opts);
}

std::vector<RollingFmbRow> rolling_fmb(const ReturnPanel& panel, const FactorSet& factors, int window, int workers) {
  const auto [p, f] = align(panel, factors);
  const Eigen::Index T = p.n_periods();
  if (window < 1 || window > T) throw Error(ErrorKind::ParameterError, "rolling_fmb: window must lie in [1, T]");
  const Eigen::Index n_windows = T - window + 1;
  std::vector<RollingFmbRow> rows(static_cast<std::size_t>(n_windows));
  parallel_for(static_cast<std::size_t>(n_windows), workers, [&](std::size_t w) {
    const Eigen::Index s = static_cast<Eigen::Index>(w);
    const MatrixXd r = p.returns.middleCols(s, window);
    const FmbResult fm = fama_macbeth(r, f.values.middleRows(s, window));
    RollingFmbRow& row = rows[w];
    row.date = p.dates[static_cast<std::size_t>(s + window - 1)];
    row.lambda = fm.lambda;
    row.lambda_se = fm.lambda_se;
    row.betas = fm.betas;
    row.r2_bar = fm.r2_bar;
  });
  return rows;
}

std::vector<ScatterRow> beta_scatter(const ReturnPanel& panel, const MatrixXd& betas) {
  const Eigen::Index N = panel.n_assets();
  if (betas.rows() != N || betas.cols() < 2) throw Error(ErrorKind::DimensionError, "beta_scatter: betas do not match the panel");
  const VectorXd mr = panel.returns.rowwise().mean();
  const OlsFit fit = ols(mr, betas.rightCols(betas.cols() - 1), true);
  std::vector<ScatterRow> rows;
  for (Eigen::Index i = 0; i < N; ++i)
    rows.push_back({panel.names[static_cast<std::size_t>(i)], mr[i], betas(i, 1), fit.fitted[i], fit.r2});
  return rows;
}

}  // namespace capshare
