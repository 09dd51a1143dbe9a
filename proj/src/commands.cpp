#include "capshare/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "capshare/btvbsv.hpp"
#include "capshare/diagnostics.hpp"
#include "capshare/disaggregation.hpp"
#include "capshare/factors.hpp"
#include "capshare/lrr.hpp"
#include "capshare/mgarch.hpp"

namespace fs = std::filesystem;

namespace capshare {

namespace {

struct Context {
  const RunConfig& cfg;
  fs::path out;
  std::ostream& log;
  std::vector<std::string> outputs;
  std::vector<std::string> inputs;  // config keys naming input files

  std::string input(const std::string& key) {
    const std::string p = cfg.require(key);
    inputs.push_back(key);
    return p;
  }
  std::string path(const std::string& name) {
    outputs.push_back(name);
    return (out / name).string();
  }
  void table(const std::string& name, const Table& t) { write_table(path(name), t); }
};

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- shared loaders --------------------------------------------------------

std::optional<MonthIndex> date_key(const RunConfig& cfg, const std::string& key) {
  if (!cfg.has(key) || cfg.get(key).empty()) return std::nullopt;
  return parse_yyyymm(cfg.get(key), key);
}

struct PanelData {
  ReturnPanel panel;
  FactorSet factors;
};

PanelData load_panel_and_factors(Context& c) {
  ReturnPanel panel = load_french_panel(c.input("panel"));
  FactorSet f = factors_from_table(read_table(c.input("factors")));
  const auto wanted = c.cfg.get_list("factor_names");
  if (!wanted.empty()) {
    MatrixXd v(f.n_periods(), static_cast<Eigen::Index>(wanted.size()));
    for (std::size_t j = 0; j < wanted.size(); ++j) v.col(static_cast<Eigen::Index>(j)) = f.column(wanted[j]);
    f = FactorSet(f.dates, wanted, v);
  }
  auto [p, fa] = align(panel, f);
  const auto from = date_key(c.cfg, "from");
  const auto to = date_key(c.cfg, "to");
  if (from || to) {
    const MonthIndex lo = from.value_or(p.dates.front());
    const MonthIndex hi = to.value_or(p.dates.back());
    Eigen::Index first = -1, last = -1;
    for (std::size_t t = 0; t < p.dates.size(); ++t) {
      if (p.dates[t] >= lo && p.dates[t] <= hi) {
        if (first < 0) first = static_cast<Eigen::Index>(t);
        last = static_cast<Eigen::Index>(t);
      }
    }
    if (first < 0) throw Error(ErrorKind::EmptyWindow, "no months between 'from' and 'to'");
    p = p.columns(first, last - first + 1);
    fa = fa.rows(first, last - first + 1);
  }
  const long max_port = c.cfg.get_int("max_portfolios", 0);
  if (max_port > 0 && max_port < p.n_assets()) {
    std::vector<std::string> names(p.names.begin(), p.names.begin() + max_port);
    p = ReturnPanel(p.dates, names, p.returns.topRows(max_port));
  }
  c.log << "panel: " << p.n_assets() << " portfolios x " << p.n_periods() << " months (" << format_yyyymm(p.dates.front())
        << "-" << format_yyyymm(p.dates.back()) << ")\n";
  return {std::move(p), std::move(fa)};
}

std::vector<std::string> coef_names(const FactorSet& f) {
  std::vector<std::string> n{"beta_0"};
  n.insert(n.end(), f.names.begin(), f.names.end());
  return n;
}

// ---- interpolate -------------------------------------------------------------

ChowLinOptions chow_lin_options(const RunConfig& cfg) {
  ChowLinOptions o;
  o.opc = static_cast<int>(cfg.get_int("opc", 1));
  if (o.opc != 0 && o.opc != 1) throw Error(ErrorKind::ConfigError, "opc must be 0 or 1");
  const std::string el = cfg.get("element", "first");
  if (el == "first") o.element = Element::First;
  else if (el == "last") o.element = Element::Last;
  else throw Error(ErrorKind::ConfigError, "element must be 'first' or 'last'");
  const std::string ob = cfg.get("objective", "wls");
  if (ob == "wls") o.objective = Objective::WLS;
  else if (ob == "ll") o.objective = Objective::LL;
  else throw Error(ErrorKind::ConfigError, "objective must be 'wls' or 'll'");
  o.grid.lo = cfg.get_double("grid_lo", o.grid.lo);
  o.grid.hi = cfg.get_double("grid_hi", o.grid.hi);
  o.grid.n = static_cast<int>(cfg.get_int("grid_n", o.grid.n));
  if (!(o.grid.lo > 0.0 && o.grid.lo < o.grid.hi && o.grid.hi < 1.0 && o.grid.n >= 2))
    throw Error(ErrorKind::ConfigError, "rho grid needs 0 < grid_lo < grid_hi < 1 and grid_n >= 2");
  o.workers = cfg.workers();
  return o;
}

void cmd_interpolate(Context& c) {
  const TimeSeries ls_raw = load_fred_series(c.input("labour_share"), Units::Ratio);
  if (ls_raw.frequency != Frequency::Quarterly) throw Error(ErrorKind::FrequencyError, "labour_share must be quarterly");
  const double div = c.cfg.get_double("labour_share_divisor", 1.0);
  const TimeSeries ls(ls_raw.start, ls_raw.frequency, ls_raw.values / div, Units::Ratio);
  const TimeSeries com = load_fred_series(c.input("compensation"));
  const TimeSeries pi = load_fred_series(c.input("personal_income"));
  if (com.frequency != Frequency::Monthly || pi.frequency != Frequency::Monthly)
    throw Error(ErrorKind::FrequencyError, "compensation and personal_income must be monthly");

  const TimeSeries ks_q = capital_share(ls);
  const TimeSeries ind = build_indicator(com, pi);
  // Restrict to quarters fully covered by the indicator.
  MonthIndex q0 = std::max(ks_q.start, ind.start);
  while ((month_of(q0) - 1) % 3 != 0) ++q0;
  MonthIndex q1 = std::min(ks_q.end(), ind.end() - 2);
  q1 -= (month_of(q1) - 1) % 3;
  if (q1 < q0) throw Error(ErrorKind::NoOverlap, "labour share and income series share no full quarter");
  const TimeSeries y = ks_q.slice(q0, q1);
  const ChowLinOptions opts = chow_lin_options(c.cfg);
  const ChowLinFit fit = chow_lin(y, ind, opts);
  c.log << "chow-lin: rho = " << fit.rho << " (grid index " << fit.rho_index << "), beta_ind = " << fit.beta_ind << "\n";

  c.table("ks_monthly.csv", series_table(fit.monthly, "KS"));
  c.table("indicator.csv", series_table(ind, "Ind"));

  Table s;
  s.set_meta("units", "ratio");
  s.set_meta("opc", std::to_string(opts.opc));
  s.set_meta("element", std::string(to_string(opts.element)));
  s.set_meta("objective", std::string(to_string(opts.objective)));
  s.columns = {"quantity", "value", "stderr"};
  std::size_t k = 0;
  if (fit.beta0) s.rows.push_back({"beta_0", fmt(*fit.beta0), fmt(fit.stderrs[static_cast<Eigen::Index>(k++)])});
  s.rows.push_back({"beta_ind", fmt(fit.beta_ind), fmt(fit.stderrs[static_cast<Eigen::Index>(k)])});
  s.rows.push_back({"rho", fmt(fit.rho), "nan"});
  s.rows.push_back({"rho_index", std::to_string(fit.rho_index), "nan"});
  s.rows.push_back({"objective", fmt(fit.objective_value), "nan"});
  s.rows.push_back({"sigma2", fmt(fit.sigma2), "nan"});
  s.rows.push_back({"aic", fmt(fit.aic), "nan"});
  s.rows.push_back({"bic", fmt(fit.bic), "nan"});
  c.table("chow_lin.csv", s);

  // gamma_q = ES_q / LS_q with ES_q the first month of each quarter.
  std::vector<double> es;
  for (MonthIndex q = q0; q <= q1; q += 3) es.push_back(1.0 - ind.values[ind.index_of(q)]);
  const TimeSeries es_q(q0, Frequency::Quarterly, Eigen::Map<VectorXd>(es.data(), static_cast<Eigen::Index>(es.size())),
                        Units::Ratio);
  const GammaSummary g = gamma_diagnostic(es_q, ls.slice(q0, q1));
  Table gt;
  gt.set_meta("units", "ratio");
  gt.columns = {"n", "min", "q1", "median", "mean", "q3", "max", "std"};
  gt.rows.push_back({std::to_string(g.n), fmt(g.min), fmt(g.q1), fmt(g.median), fmt(g.mean), fmt(g.q3), fmt(g.max), fmt(g.std)});
  c.table("gamma.csv", gt);
}

// ---- factors -------------------------------------------------------------------

Table descriptive_table(const FactorSet& f) {
  Table t;
  t.set_meta("units", "percent");
  t.columns = {"factor", "from", "to", "n", "mean", "median", "std", "sharpe"};
  for (Eigen::Index j = 0; j < f.n_factors(); ++j) {
    const TimeSeries s(f.dates.front(), Frequency::Monthly, f.values.col(j), Units::Percent);
    const auto rows = descriptive_stats(s, {{s.start, s.end()}});
    for (const auto& r : rows)
      t.rows.push_back({f.names[static_cast<std::size_t>(j)], format_yyyymm(r.window.from), format_yyyymm(r.window.to),
                        std::to_string(r.n), fmt(r.mean), fmt(r.median), fmt(r.std), r.sharpe ? fmt(*r.sharpe) : "nan"});
  }
  return t;
}

void cmd_factors(Context& c) {
  const TimeSeries ks = series_from_table(read_table(c.input("ks")), c.cfg.get("ks_column", "KS"));
  const int h = static_cast<int>(c.cfg.get_int("horizon", 12));
  const TimeSeries F = ks_growth_factor(ks, h, GrowthMode::Monthly);
  const Variability var = ks_variability(F, c.cfg.get_bool("include_sigma2", true));
  c.log << "F_KS AR(1): rho = " << var.ar1.rho << ", resid variance = " << var.ar1.resid_variance << "\n";

  std::vector<std::pair<std::string, TimeSeries>> cols{{"F_KS", to_percent(F)}, {"EF2_KS", to_percent(var.series)}};
  if (c.cfg.has("fmp_base")) {
    const ReturnPanel base = load_french_panel(c.input("fmp_base"));
    // Align base returns (and optional instruments) with the factor.
    std::vector<MonthIndex> dates;
    for (MonthIndex m : base.dates)
      if (F.index_of(m) >= 0) dates.push_back(m);
    if (dates.size() < 10) throw Error(ErrorKind::NoOverlap, "fmp_base overlaps the factor in fewer than 10 months");
    const auto T = static_cast<Eigen::Index>(dates.size());
    const auto b0 = std::find(base.dates.begin(), base.dates.end(), dates.front()) - base.dates.begin();
    const MatrixXd x = base.returns.middleCols(b0, T).transpose();
    MatrixXd z(T, 0);
    if (c.cfg.has("fmp_instruments")) {
      const FactorSet inst = factors_from_table(read_table(c.input("fmp_instruments")));
      z.resize(T, inst.n_factors());
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto it = std::find(inst.dates.begin(), inst.dates.end(), dates[static_cast<std::size_t>(t)]);
        if (it == inst.dates.end()) throw Error(ErrorKind::NoOverlap, "fmp_instruments do not cover " + format_yyyymm(dates[static_cast<std::size_t>(t)]));
        z.row(t) = inst.values.row(it - inst.dates.begin());
      }
    }
    const TimeSeries Fp = to_percent(F).slice(dates.front(), dates.back());
    const MimickingPortfolio mp = mimicking_portfolio(Fp, x, z);
    cols.emplace_back("FMP", mp.fmp);
    Table ft;
    ft.set_meta("units", "percent");
    ft.set_meta("r2", fmt(mp.fit.r2));
    ft.columns = {"term", "coefficient", "stderr", "t"};
    for (Eigen::Index k = 0; k < mp.fit.coefficients.size(); ++k) {
      std::string term = k == 0 ? "const"
                         : k <= mp.n_base ? "x_" + base.names[static_cast<std::size_t>(k - 1)]
                                          : "z_" + std::to_string(k - 1 - mp.n_base);
      ft.rows.push_back({term, fmt(mp.fit.coefficients[k]), fmt(mp.fit.stderrs[k]), fmt(mp.fit.tstats[k])});
    }
    c.table("fmp_fit.csv", ft);
  }
  const FactorSet fs = FactorSet::from_series(cols);
  Table t = factors_table(fs, Units::Percent);
  t.set_meta("horizon", std::to_string(h));
  t.set_meta("ar1_rho", fmt(var.ar1.rho));
  t.set_meta("ar1_resid_variance", fmt(var.ar1.resid_variance));
  c.table("factors.csv", t);
  c.table("descriptive.csv", descriptive_table(fs));
}

// ---- Fama-MacBeth family --------------------------------------------------------

void write_fmb_point(Context& c, const PanelData& d, const FmbResult& r) {
  const auto names = coef_names(d.factors);
  Table t;
  t.set_meta("units", "percent");
  t.columns = {"quantity", "estimate", "fm_stderr", "t"};
  for (Eigen::Index k = 0; k < r.lambda.size(); ++k)
    t.rows.push_back({names[static_cast<std::size_t>(k)], fmt(r.lambda[k]), fmt(r.lambda_se[k]), fmt(r.lambda[k] / r.lambda_se[k])});
  t.rows.push_back({"R2_bar", fmt(r.r2_bar), "nan", "nan"});
  c.table("fmb.csv", t);

  Table b;
  b.set_meta("units", "ratio");
  b.columns = {"portfolio"};
  b.columns.insert(b.columns.end(), names.begin(), names.end());
  for (Eigen::Index i = 0; i < r.betas.rows(); ++i) {
    std::vector<std::string> row{d.panel.names[static_cast<std::size_t>(i)]};
    for (Eigen::Index k = 0; k < r.betas.cols(); ++k) row.push_back(fmt(r.betas(i, k)));
    b.rows.push_back(std::move(row));
  }
  c.table("betas.csv", b);

  Table lt;
  lt.set_meta("units", "percent");
  lt.columns = {"date"};
  lt.columns.insert(lt.columns.end(), names.begin(), names.end());
  lt.columns.push_back("r2");
  for (Eigen::Index t2 = 0; t2 < r.lambda_t.rows(); ++t2) {
    std::vector<std::string> row{format_yyyymm(d.panel.dates[static_cast<std::size_t>(t2)])};
    for (Eigen::Index k = 0; k < r.lambda_t.cols(); ++k) row.push_back(fmt(r.lambda_t(t2, k)));
    row.push_back(fmt(r.per_period_r2[t2]));
    lt.rows.push_back(std::move(row));
  }
  c.table("lambda_t.csv", lt);

  Table sc;
  sc.set_meta("units", "percent");
  sc.columns = {"portfolio", "mean_return", "beta", "fitted", "r2"};
  for (const auto& s : beta_scatter(d.panel, r.betas))
    sc.rows.push_back({s.portfolio, fmt(s.mean_return), fmt(s.beta), fmt(s.fitted), fmt(s.r2)});
  c.table("beta_scatter.csv", sc);
}

void cmd_fmb(Context& c) {
  const PanelData d = load_panel_and_factors(c);
  const FmbResult r = fama_macbeth(d.panel.returns, d.factors.values);
  write_fmb_point(c, d, r);
}

void cmd_fmb_boot(Context& c) {
  const PanelData d = load_panel_and_factors(c);
  BootstrapOptions o;
  o.n_sims = static_cast<int>(c.cfg.get_int("n_sims", o.n_sims));
  o.block_ts = static_cast<int>(c.cfg.get_int("block_ts", o.block_ts));
  o.block_cs = static_cast<int>(c.cfg.get_int("block_cs", o.block_cs));
  o.seed = c.cfg.seed();
  o.workers = c.cfg.workers();
  const BootstrapResult b = fmb_bootstrap(d.panel.returns, d.factors.values, o);
  c.log << "bootstrap: " << b.draws.rows() << " replications (" << b.failed << " failed), block_ts = " << b.block_ts
        << ", block_cs = " << b.block_cs << "\n";
  write_fmb_point(c, d, b.point);

  auto names = coef_names(d.factors);
  names.push_back("R2_bar");
  Table s;
  s.set_meta("units", "percent");
  s.set_meta("n_sims", std::to_string(b.n_sims));
  s.set_meta("failed", std::to_string(b.failed));
  s.set_meta("block_ts", std::to_string(b.block_ts));
  s.set_meta("block_cs", std::to_string(b.block_cs));
  s.set_meta("seed", std::to_string(b.seed));
  s.columns = {"quantity", "estimate", "ci95_lo", "ci95_hi", "ci90_lo", "ci90_hi", "stars"};
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double est = k + 1 < names.size() ? b.point.lambda[static_cast<Eigen::Index>(k)] : b.point.r2_bar;
    s.rows.push_back({names[k], fmt(est), fmt(b.ci95[k].lo), fmt(b.ci95[k].hi), fmt(b.ci90[k].lo), fmt(b.ci90[k].hi),
                      b.stars[k].empty() ? "-" : b.stars[k]});
  }
  c.table("fmb_boot.csv", s);

  Table dr;
  dr.set_meta("units", "percent");
  dr.set_meta("seed", std::to_string(b.seed));
  dr.columns = names;
  for (Eigen::Index r = 0; r < b.draws.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index k = 0; k < b.draws.cols(); ++k) row.push_back(fmt(b.draws(r, k)));
    dr.rows.push_back(std::move(row));
  }
  c.table("fmb_boot_draws.csv", dr);

  std::ofstream txt(c.path("risk_prices.txt"));
  txt << risk_price_table({{c.cfg.get("panel_label", "Portfolios"), b}}, d.factors.names);
}

void cmd_rolling_fmb(Context& c) {
  const PanelData d = load_panel_and_factors(c);
  const int window = static_cast<int>(c.cfg.get_int("window", 60));
  const auto rows = rolling_fmb(d.panel, d.factors, window, c.cfg.workers());
  const auto names = coef_names(d.factors);
  Table t;
  t.set_meta("units", "percent");
  t.set_meta("window", std::to_string(window));
  t.columns = {"date", "quantity", "estimate", "stderr", "ci95_lo", "ci95_hi"};
  for (const auto& r : rows) {
    for (Eigen::Index k = 0; k < r.lambda.size(); ++k) {
      const double e = r.lambda[k], se = r.lambda_se[k];
      t.rows.push_back({format_yyyymm(r.date), names[static_cast<std::size_t>(k)], fmt(e), fmt(se),
                        fmt(e - kGewekeCrit5 * se), fmt(e + kGewekeCrit5 * se)});
    }
    t.rows.push_back({format_yyyymm(r.date), "R2_bar", fmt(r.r2_bar), "nan", "nan", "nan"});
  }
  c.table("rolling_fmb.csv", t);
}

// ---- B-TVB-SV ---------------------------------------------------------------------

void apply_hyper_overrides(const RunConfig& cfg, Hyperparams& h) {
  const std::map<std::string, double*> fields{
      {"mu_lnsig2", &h.mu_lnsig2}, {"var_lnsig2", &h.var_lnsig2}, {"a_beta", &h.a_beta},     {"b_beta", &h.b_beta},
      {"a_v", &h.a_v},             {"b_v", &h.b_v},               {"gamma_beta", &h.gamma_beta}, {"theta_beta", &h.theta_beta},
      {"gamma_v", &h.gamma_v},     {"theta_v", &h.theta_v},       {"lambda_mean", &h.lambda_mean}, {"lambda_var", &h.lambda_var},
      {"psi0", &h.psi0},           {"Psi0", &h.Psi0}};
  for (const auto& [k, v] : cfg.values) {
    if (k.rfind("hyper.", 0) != 0) continue;
    const std::string name = k.substr(6);
    const auto it = fields.find(name);
    if (it == fields.end()) throw Error(ErrorKind::ConfigError, "unknown hyperparameter '" + name + "'");
    *it->second = cfg.get_double(k, *it->second);
  }
  if (cfg.has("hyper.var_beta")) h.var_beta.setConstant(cfg.get_double("hyper.var_beta", 10.0));
  h.validate();
}

void cmd_btvbsv(Context& c) {
  PanelData d = load_panel_and_factors(c);
  const std::string prior = c.cfg.get("priors", "training");
  Hyperparams h;
  MatrixXd R = d.panel.returns;
  MatrixXd F = d.factors.values;
  std::vector<MonthIndex> dates = d.panel.dates;
  if (prior == "training") {
    const int years = static_cast<int>(c.cfg.get_int("training_years", 10));
    h = init_priors(R, F, years);
    const Eigen::Index m = 12L * years;
    R = R.rightCols(R.cols() - m).eval();
    F = F.bottomRows(F.rows() - m).eval();
    dates.erase(dates.begin(), dates.begin() + m);
  } else if (prior == "default") {
    h = default_hyperparams(R.rows(), F.cols());
  } else {
    throw Error(ErrorKind::ConfigError, "priors must be 'training' or 'default'");
  }
  apply_hyper_overrides(c.cfg, h);

  GibbsOptions o;
  o.n_iter = static_cast<int>(c.cfg.get_int("n_iter", o.n_iter));
  o.burn = static_cast<int>(c.cfg.get_int("burn", o.burn));
  o.thin = static_cast<int>(c.cfg.get_int("thin", o.thin));
  o.seed = c.cfg.seed();
  o.workers = c.cfg.workers();
  o.prior_only = c.cfg.get_bool("prior_only", false);
  o.store_paths = c.cfg.get_bool("store_paths", true);
  std::optional<GibbsState> restart;
  if (c.cfg.has("restart")) {
    const auto j = read_json(c.input("restart"));
    restart = state_from_json(j.at("state"));
    o.iteration_offset = j.at("next_iteration").get<long>();
  }
  const PosteriorDraws draws = gibbs_run(R, F, h, o, restart ? &*restart : nullptr);
  c.log << "gibbs: " << draws.size() << " stored draws";
  if (draws.abort) c.log << " (aborted: " << draws.abort->message << ")";
  c.log << "\n";

  const auto names = coef_names(d.factors);
  c.table("draws.csv", draws_table(draws, names));
  std::vector<std::string> date_s;
  for (MonthIndex m : dates) date_s.push_back(format_yyyymm(m));
  nlohmann::json man{{"format", "one record per stored draw; columns documented in README"},
                     {"n_assets", draws.n_assets},
                     {"n_coef", draws.n_coef},
                     {"n_periods", draws.n_periods},
                     {"n_draws", draws.size()},
                     {"coefficients", names},
                     {"portfolios", d.panel.names},
                     {"dates", date_s},
                     {"seed", o.seed},
                     {"n_iter", o.n_iter},
                     {"burn", o.burn},
                     {"thin", o.thin},
                     {"iteration_offset", o.iteration_offset},
                     {"prior_only", o.prior_only},
                     {"hyperparameters", hyperparams_json(h)}};
  if (draws.abort) man["abort"] = {{"iteration", draws.abort->iteration}, {"kind", std::string(to_string(draws.abort->kind))},
                                   {"message", draws.abort->message}};
  write_json(c.path("draws_manifest.json"), man);
  write_json(c.path("state.json"), {{"next_iteration", o.iteration_offset + o.n_iter}, {"state", state_json(draws.last)}});

  Table conv;
  conv.columns = {"block", "n_chains", "n_excluded", "rejection_rate_5", "rejection_rate_10"};
  if (draws.size() >= 200) {
    conv.set_meta("status", "ok");
    const ConvergenceReport rep = convergence_diagnostics(draws);
    for (const auto& b : rep.blocks)
      conv.rows.push_back({b.block, std::to_string(b.n_chains), std::to_string(b.n_excluded), fmt(b.rejection_rate_5),
                           fmt(b.rejection_rate_10)});
  } else {
    conv.set_meta("status", "insufficient_draws");
    conv.set_meta("n_draws", std::to_string(draws.size()));
  }
  c.table("convergence.csv", conv);

  Table lam;
  lam.set_meta("units", "percent");
  lam.columns = {"quantity", "mean", "sd", "q025", "q975"};
  for (Eigen::Index k = 0; k <= draws.lambda.cols(); ++k) {
    const VectorXd col = k < draws.lambda.cols() ? VectorXd(draws.lambda.col(k)) : draws.tau2;
    if (col.size() == 0) break;
    std::vector<double> v(col.data(), col.data() + col.size());
    lam.rows.push_back({k < draws.lambda.cols() ? names[static_cast<std::size_t>(k)] : "tau2", fmt(col.mean()),
                        col.size() > 1 ? fmt(sample_std(col)) : "nan", fmt(quantile(v, 0.025)), fmt(quantile(v, 0.975))});
  }
  c.table("lambda_summary.csv", lam);

  if (draws.has_paths && draws.size() > 0) {
    const auto mb = posterior_mean_beta(draws);
    const BreakProbabilities bp = break_probabilities(draws);
    Table bt;
    bt.set_meta("units", "ratio");
    bt.columns = {"date", "portfolio", "coefficient", "beta_mean", "break_prob"};
    Table st;
    st.set_meta("units", "ratio");
    st.columns = {"date", "portfolio", "volatility_break_prob"};
    for (Eigen::Index i = 0; i < draws.n_assets; ++i) {
      for (Eigen::Index t = 0; t < draws.n_periods; ++t) {
        const std::string ds = date_s[static_cast<std::size_t>(t)];
        for (Eigen::Index j = 0; j < draws.n_coef; ++j)
          bt.rows.push_back({ds, d.panel.names[static_cast<std::size_t>(i)], names[static_cast<std::size_t>(j)],
                             fmt(mb[static_cast<std::size_t>(i)](j, t)), fmt(bp.beta[static_cast<std::size_t>(i)](j, t))});
        st.rows.push_back({ds, d.panel.names[static_cast<std::size_t>(i)], fmt(bp.sigma(i, t))});
      }
    }
    c.table("beta_paths.csv", bt);
    c.table("volatility_breaks.csv", st);
  }
  if (draws.abort) throw Error(draws.abort->kind, draws.abort->message);
}

// ---- mGARCH -------------------------------------------------------------------------

void cmd_mgarch(Context& c) {
  const PanelData d = load_panel_and_factors(c);
  const std::string fname = c.cfg.get("factor", d.factors.names.front());
  const VectorXd F = d.factors.column(fname);
  const std::string rs = c.cfg.get("return_series", "mean");
  VectorXd r;
  if (rs == "mean") {
    r = d.panel.returns.colwise().mean().transpose();
  } else {
    const auto it = std::find(d.panel.names.begin(), d.panel.names.end(), rs);
    if (it == d.panel.names.end()) throw Error(ErrorKind::ConfigError, "return_series '" + rs + "' is not a portfolio");
    r = d.panel.returns.row(it - d.panel.names.begin()).transpose();
  }
  MGarchOptions o;
  o.max_iter = static_cast<int>(c.cfg.get_int("max_iter", o.max_iter));
  o.fix_lambda1 = c.cfg.get_bool("fix_lambda1", false);
  const MGarchFit full = mgarch_fit(r, F, o);
  Table ft;
  ft.set_meta("units", "percent");
  ft.set_meta("loglik", fmt(full.loglik));
  ft.set_meta("converged", full.converged ? "1" : "0");
  ft.columns = {"parameter", "estimate", "stderr"};
  ft.rows.push_back({"beta0", fmt(full.beta0), fmt(full.stderrs[0])});
  ft.rows.push_back({"lambda0", fmt(full.lambda0), fmt(full.stderrs[1])});
  ft.rows.push_back({"lambda1", fmt(full.lambda1), fmt(full.stderrs[2])});
  c.table("mgarch_full.csv", ft);

  const int window = static_cast<int>(c.cfg.get_int("window", 60));
  const auto rows = rolling_mgarch(r, F, window, o, c.cfg.workers());
  Table rt;
  rt.set_meta("units", "percent");
  rt.set_meta("window", std::to_string(window));
  rt.columns = {"date", "beta0", "lambda0", "lambda1", "lambda1_se", "ci95_lo", "ci95_hi", "loglik", "converged"};
  for (const auto& row : rows) {
    const MGarchFit& f = row.fit;
    rt.rows.push_back({format_yyyymm(d.panel.dates[static_cast<std::size_t>(row.end)]), fmt(f.beta0), fmt(f.lambda0),
                       fmt(f.lambda1), fmt(f.stderrs[2]), fmt(f.lambda1 - kGewekeCrit5 * f.stderrs[2]),
                       fmt(f.lambda1 + kGewekeCrit5 * f.stderrs[2]), fmt(f.loglik), f.converged ? "1" : "0"});
  }
  c.table("rolling_mgarch.csv", rt);

  const OlsFit s = sanity_check_regression(r, F);
  Table st;
  st.set_meta("r2", fmt(s.r2));
  st.columns = {"term", "coefficient", "stderr", "t", "p"};
  const std::vector<std::string> terms{"const", "lag_log_e2", fname};
  for (Eigen::Index k = 0; k < 3; ++k)
    st.rows.push_back({terms[static_cast<std::size_t>(k)], fmt(s.coefficients[k]), fmt(s.stderrs[k]), fmt(s.tstats[k]),
                       fmt(s.pvalues[k])});
  c.table("sanity_check.csv", st);
}

// ---- LRR ------------------------------------------------------------------------------

LrrParams lrr_params(const RunConfig& cfg) {
  LrrParams p;
  const std::map<std::string, double*> fields{
      {"delta", &p.delta},       {"gamma", &p.gamma},       {"psi", &p.psi},         {"mu", &p.mu},
      {"mu_d", &p.mu_d},         {"rho", &p.rho},           {"phi_e", &p.phi_e},     {"phi", &p.phi},
      {"phi_d", &p.phi_d},       {"sigma", &p.sigma},       {"w_h", &p.w_h},         {"kappa1", &p.kappa1},
      {"kappa1m", &p.kappa1m},   {"rho_ks", &p.rho_ks},     {"Sigma_xi", &p.Sigma_xi}, {"sigma_ks", &p.sigma_ks},
      {"c_d", &p.c_d},           {"x0", &p.x0},             {"kappa0", &p.kappa0},   {"kappa0m", &p.kappa0m},
      {"A0", &p.A0},             {"A0m", &p.A0m}};
  for (const auto& [k, v] : cfg.values) {
    if (k.rfind("lrr.", 0) != 0) continue;
    const std::string name = k.substr(4);
    if (name == "w_l") {
      p.w_l = cfg.get_double(k, 0.0);
      continue;
    }
    if (name == "T" || name == "EF2" || name == "mc_T" || name == "factor") continue;
    const auto it = fields.find(name);
    if (it == fields.end()) throw Error(ErrorKind::ConfigError, "unknown LRR parameter '" + name + "'");
    *it->second = cfg.get_double(k, *it->second);
  }
  p.validate();
  return p;
}

void cmd_lrr(Context& c) {
  const LrrParams p = lrr_params(c.cfg);
  VectorXd F;
  std::string source;
  if (c.cfg.has("factors")) {
    const Table t = read_table(c.input("factors"));
    const std::string col = c.cfg.get("lrr.factor", "F_KS");
    F = t.numeric_column(col);
    if (t.meta_value("units") == "percent") F /= 100.0;
    source = "file";
  } else {
    const long T = c.cfg.get_int("lrr.T", 1000);
    F = simulate_system(p, T, c.cfg.seed()).F_KS;
    source = "simulated";
  }
  const double EF2 = c.cfg.get_double("lrr.EF2", F.squaredNorm() / static_cast<double>(F.size()));
  LrrSolution s = solve_coefficients(p, F);
  s.premiums = premiums(p, F, EF2);

  Table co;
  co.set_meta("factor_source", source);
  co.set_meta("EF2", fmt(EF2));
  co.columns = {"quantity", "value"};
  const std::vector<std::pair<std::string, double>> scal{
      {"theta", s.theta},         {"A1", s.A1},
      {"A1m", s.A1m},             {"lambda_eta", s.lambda_eta},
      {"lambda_e", s.lambda_e},   {"lambda_re", s.lambda_re},
      {"lambda_me", s.lambda_me}, {"lambda_xi_per_eks", s.xi_coef},
      {"lambda_rxi_per_eks", s.rxi_coef}, {"lambda_mxi_per_eks", s.mxi_coef},
      {"premium_consumption_conditional", s.premiums.conditional_consumption},
      {"premium_equity_conditional_mean", s.premiums.conditional_equity.mean()},
      {"premium_consumption_unconditional", s.premiums.unconditional_consumption},
      {"premium_equity_unconditional", s.premiums.unconditional_equity}};
  for (const auto& [k, v] : scal) co.rows.push_back({k, fmt(v)});
  c.table("lrr_coefficients.csv", co);

  Table pt;
  pt.columns = {"t", "F_KS", "A2", "A2m", "lambda_xi", "lambda_rxi", "lambda_mxi", "lambda_u_xi", "lambda_u_rxi",
                "lambda_u_mxi", "premium_equity_conditional"};
  for (Eigen::Index t = 0; t < F.size(); ++t)
    pt.rows.push_back({std::to_string(t), fmt(F[t]), fmt(s.A2_path[t]), fmt(s.A2m_path[t]), fmt(s.lambda_xi_path[t]),
                       fmt(s.lambda_rxi_path[t]), fmt(s.lambda_mxi_path[t]), fmt(s.lambda_u_xi_path[t]),
                       fmt(s.lambda_u_rxi_path[t]), fmt(s.lambda_u_mxi_path[t]), fmt(s.premiums.conditional_equity[t])});
  c.table("lrr_paths.csv", pt);

  const long mc_T = c.cfg.get_int("lrr.mc_T", 0);
  if (mc_T > 0) {
    const LrrPaths sim = simulate_system(p, mc_T, c.cfg.seed());
    const VectorXd q = (-(sim.dm.array() * sim.dr_m.array()) + 0.5 * sim.dr_m.array().square()).matrix();
    const double EF2s = sim.F_KS.squaredNorm() / static_cast<double>(mc_T);
    const LrrPremiums cf = premiums(p, sim.F_KS, EF2s);
    const double se = sample_std(q) / std::sqrt(static_cast<double>(mc_T));
    Table mt;
    mt.columns = {"quantity", "closed_form", "simulated", "mc_stderr", "z"};
    mt.rows.push_back({"premium_equity_unconditional", fmt(cf.unconditional_equity), fmt(q.mean()), fmt(se),
                       fmt((q.mean() - cf.unconditional_equity) / se)});
    c.table("lrr_mc_check.csv", mt);
  }
}

// ---- OLS ------------------------------------------------------------------------------

std::map<MonthIndex, double> load_dated_column(const std::string& path, const std::string& column) {
  std::ifstream probe(path);
  if (!probe) throw Error(ErrorKind::InvalidInput, "cannot open '" + path + "'");
  std::string first;
  while (std::getline(probe, first) && (first.empty() || first[0] == '#')) {
  }
  std::map<MonthIndex, double> out;
  const bool fred = first.find("DATE") != std::string::npos || first.find("observation_date") != std::string::npos;
  if (fred) {
    const TimeSeries s = load_fred_series(path);
    for (Eigen::Index i = 0; i < s.size(); ++i) out[s.date(i)] = s.values[i];
  } else {
    const Table t = read_table(path);
    const VectorXd v = t.numeric_column(column);
    for (std::size_t i = 0; i < t.rows.size(); ++i) out[parse_yyyymm(t.text(i, "date"), path)] = v[static_cast<Eigen::Index>(i)];
  }
  return out;
}

void cmd_ols(Context& c) {
  const auto y_map = load_dated_column(c.input("y_file"), c.cfg.get("y_column", "F_KS"));
  const auto x_cols = c.cfg.get_list("x_columns");
  const std::string x_file = c.input("x_file");
  std::vector<std::map<MonthIndex, double>> xs;
  const std::vector<std::string> names = x_cols.empty() ? std::vector<std::string>{"VALUE"} : x_cols;
  for (const auto& n : names) xs.push_back(load_dated_column(x_file, n));
  std::vector<MonthIndex> dates;
  for (const auto& [m, v] : y_map) {
    bool ok = true;
    for (const auto& x : xs) ok = ok && x.count(m);
    if (ok) dates.push_back(m);
  }
  if (dates.empty()) throw Error(ErrorKind::NoOverlap, "ols: y and x share no dates");
  const auto n = static_cast<Eigen::Index>(dates.size());
  VectorXd y(n);
  MatrixXd X(n, static_cast<Eigen::Index>(xs.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = y_map.at(dates[static_cast<std::size_t>(i)]);
    for (std::size_t j = 0; j < xs.size(); ++j) X(i, static_cast<Eigen::Index>(j)) = xs[j].at(dates[static_cast<std::size_t>(i)]);
  }
  const std::string tr = c.cfg.get("y_transform", "none");
  if (tr == "square") y = y.array().square().matrix();
  else if (tr != "none") throw Error(ErrorKind::ConfigError, "y_transform must be 'none' or 'square'");
  if (c.cfg.get_bool("demean", false)) {
    y.array() -= y.mean();
    X.rowwise() -= X.colwise().mean();
  }
  const bool intercept = c.cfg.get_bool("intercept", true);
  const OlsFit f = ols(y, X, intercept);
  Table t;
  t.set_meta("n", std::to_string(n));
  t.set_meta("r2", fmt(f.r2));
  t.set_meta("adj_r2", fmt(f.adj_r2));
  t.set_meta("from", format_yyyymm(dates.front()));
  t.set_meta("to", format_yyyymm(dates.back()));
  t.columns = {"term", "coefficient", "stderr", "t", "p"};
  Eigen::Index k = 0;
  if (intercept) {
    t.rows.push_back({"const", fmt(f.coefficients[0]), fmt(f.stderrs[0]), fmt(f.tstats[0]), fmt(f.pvalues[0])});
    k = 1;
  }
  for (std::size_t j = 0; j < names.size(); ++j, ++k)
    t.rows.push_back({names[j], fmt(f.coefficients[k]), fmt(f.stderrs[k]), fmt(f.tstats[k]), fmt(f.pvalues[k])});
  c.table("ols.csv", t);
  c.log << "ols: n = " << n << ", R2 = " << f.r2 << "\n";
}

using Handler = void (*)(Context&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h{{"interpolate", cmd_interpolate}, {"factors", cmd_factors},
                                                {"fmb", cmd_fmb},                 {"fmb-boot", cmd_fmb_boot},
                                                {"rolling-fmb", cmd_rolling_fmb}, {"btvbsv", cmd_btvbsv},
                                                {"mgarch", cmd_mgarch},           {"lrr", cmd_lrr},
                                                {"ols", cmd_ols}};
  return h;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"interpolate", "factors", "fmb",    "fmb-boot", "rolling-fmb",
                                              "btvbsv",      "mgarch",  "lrr",    "ols"};
  return names;
}

std::string risk_price_table(const std::vector<std::pair<std::string, BootstrapResult>>& columns,
                             const std::vector<std::string>& factor_names) {
  if (columns.empty()) throw Error(ErrorKind::InvalidInput, "risk_price_table: no columns");
  const auto K = static_cast<std::size_t>(columns.front().second.point.lambda.size()) - 1;
  if (factor_names.size() != K) throw Error(ErrorKind::DimensionError, "risk_price_table: one name per factor required");
  std::vector<std::string> labels{"beta_0"};
  labels.insert(labels.end(), factor_names.begin(), factor_names.end());
  labels.push_back("R2_bar");

  std::vector<std::vector<std::string>> cells(2 * labels.size() + 1);
  cells[0].push_back("");
  for (std::size_t r = 0; r < labels.size(); ++r) {
    cells[1 + 2 * r].push_back(labels[r]);
    cells[2 + 2 * r].push_back("");
  }
  for (const auto& [name, b] : columns) {
    if (static_cast<std::size_t>(b.point.lambda.size()) != K + 1)
      throw Error(ErrorKind::DimensionError, "risk_price_table: columns disagree on the factor count");
    cells[0].push_back(name);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const bool r2 = r == labels.size() - 1;
      const double est = r2 ? b.point.r2_bar : b.point.lambda[static_cast<Eigen::Index>(r)];
      cells[1 + 2 * r].push_back(fixed(est) + (r2 ? "" : b.stars[r]));
      cells[2 + 2 * r].push_back("[" + fixed(b.ci95[r].lo) + ", " + fixed(b.ci95[r].hi) + "]");
    }
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t j = 0; j < row.size(); ++j) {
      line += row[j];
      if (j + 1 < row.size()) line += std::string(width[j] - row[j].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path out = cfg.get("out_dir", ".");
  try {
    fs::create_directories(out);
  } catch (const std::exception& e) {
    log << "error: cannot create output directory '" << out.string() << "': " << e.what() << "\n";
    return 2;
  }
  Context ctx{cfg, out, log, {}, {}};
  try {
    const auto it = handlers().find(command);
    if (it == handlers().end()) throw Error(ErrorKind::ConfigError, "unknown command '" + command + "'");
    cfg.seed();
    cfg.workers();
    it->second(ctx);
  } catch (const std::exception& e) {
    nlohmann::json rec = error_record(e, command);
    rec["outputs"] = ctx.outputs;
    try {
      write_json((out / "error.json").string(), rec);
    } catch (...) {
    }
    log << "error [" << rec["kind"].get<std::string>() << "]: " << e.what() << "\n";
    return 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RunConfig replay = cfg;
  replay.values.erase("out_dir");
  for (const auto& k : ctx.inputs) replay.set(k, fs::absolute(cfg.get(k)).string());
  {
    std::ofstream rc(out / "run.cfg");
    rc << "command = " << command << "\n" << render_config(replay);
  }
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& k : ctx.inputs) {
    const std::string p = cfg.get(k);
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    inputs.push_back({{"key", k}, {"path", fs::absolute(p).string()}, {"bytes", ec ? -1 : static_cast<long long>(size)}});
  }
  nlohmann::json man{{"command", command},
                     {"software", "capshare"},
                     {"version", kVersion},
                     {"seed", cfg.seed()},
                     {"workers", cfg.workers()},
                     {"config", replay.values},
                     {"inputs", inputs},
                     {"outputs", ctx.outputs},
                     {"started_utc", utc_now()},
                     {"wall_time_seconds", secs}};
  write_json((out / "manifest.json").string(), man);
  log << "wrote " << ctx.outputs.size() << " artifacts to " << out.string() << " in " << secs << " s\n";
  return 0;
}

int replay_manifest(const std::string& manifest_path, const std::string& out_dir, std::ostream& log) {
  nlohmann::json m;
  try {
    m = read_json(manifest_path);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  RunConfig cfg;
  for (const auto& [k, v] : m.at("config").items()) cfg.set(k, v.get<std::string>());
  cfg.set("out_dir", out_dir);
  return run_command(m.at("command").get<std::string>(), cfg, log);
}

}  // namespace capshare
