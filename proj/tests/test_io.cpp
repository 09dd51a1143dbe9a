#include <cmath>
#include <sstream>

#include "capshare/errors.hpp"
#include "capshare/io.hpp"
#include "capshare/rng.hpp"
#include "doctest.h"

using namespace capshare;

namespace {

template <class F>
Error catch_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorKind::InvalidInput, "");
}

const char* kFrench =
    "This file was created by CMPT_ME_BEME_RETS using the 201808 CRSP database.\n"
    "\n"
    "  Average Value Weighted Returns -- Monthly\n"
    ",SMALL LoBM,ME1 BM2,BIG HiBM\n"
    "196401,   1.25,  -0.50,   3.10\n"
    "196402,   0.75,   2.00,  -1.05\n"
    "\n"
    "  Average Value Weighted Returns -- Annual\n"
    ",SMALL LoBM,ME1 BM2,BIG HiBM\n"
    "1964,   10.0,  11.0,  12.0\n";

ReturnPanel french(const std::string& text) {
  std::istringstream in(text);
  return parse_french_panel(in, "fixture.csv");
}

TimeSeries fred(const std::string& text) {
  std::istringstream in(text);
  return parse_fred_series(in, "fred.csv");
}

MatrixXd random_matrix(std::uint64_t seed, Eigen::Index r, Eigen::Index c) {
  Rng rng = substream(seed, {});
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = std_normal(rng) * std::pow(10.0, std::floor(6 * std_normal(rng)));
  return m;
}

Table roundtrip(const Table& t) {
  std::stringstream ss;
  write_table(ss, t);
  return read_table(ss);
}

}  // namespace

TEST_CASE("French panel: well-formed fixture") {
  const ReturnPanel p = french(kFrench);
  CHECK(p.n_periods() == 2);
  CHECK(p.n_assets() == 3);
  CHECK(p.names[1] == "ME1 BM2");
  CHECK(p.dates[0] == make_month(1964, 1));
  CHECK(p.returns(2, 1) == -1.05);
  CHECK(p.returns(0, 0) == 1.25);
}

TEST_CASE("French panel: errors carry the line") {
  SUBCASE("missing-value sentinel") {
    std::string s = kFrench;
    s.replace(s.find("2.00"), 4, "-99.99");
    const Error e = catch_error([&] { french(s); });
    CHECK(e.kind() == ErrorKind::ParseError);
    REQUIRE(e.line().has_value());
    CHECK(*e.line() == 6);
    CHECK(std::string(e.what()).find("196402") != std::string::npos);
  }
  SUBCASE("ragged row") {
    std::string s = kFrench;
    s.replace(s.find("-0.50,"), 6, "");
    const Error e = catch_error([&] { french(s); });
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(*e.line() == 5);
  }
  SUBCASE("month out of range") {
    std::string s = kFrench;
    s.replace(s.find("196402"), 6, "196413");
    CHECK(catch_error([&] { french(s); }).kind() == ErrorKind::ParseError);
  }
  SUBCASE("non-numeric value") {
    std::string s = kFrench;
    s.replace(s.find("3.10"), 4, "x.y");
    CHECK(*catch_error([&] { french(s); }).line() == 5);
  }
  SUBCASE("dates skip a month") {
    std::string s = kFrench;
    s.replace(s.find("196402"), 6, "196403");
    CHECK(*catch_error([&] { french(s); }).line() == 6);
  }
  SUBCASE("no header") { CHECK(catch_error([&] { french("hello\n\n"); }).kind() == ErrorKind::ParseError); }
}

TEST_CASE("FRED series: frequency inference") {
  const TimeSeries m = fred("DATE,VALUE\n2000-01-01,1.5\n2000-02-01,1.6\n2000-03-01,1.7\n");
  CHECK(m.frequency == Frequency::Monthly);
  CHECK(m.size() == 3);
  CHECK(m.start == make_month(2000, 1));
  CHECK(m.values[2] == 1.7);
  const TimeSeries q = fred("DATE,VALUE\n2000-01-01,1\n2000-04-01,2\n2000-07-01,3\n");
  CHECK(q.frequency == Frequency::Quarterly);
  CHECK(q.end() == make_month(2000, 7));

  const Error gap = catch_error([] { fred("DATE,VALUE\n2000-01-01,1\n2000-04-01,2\n2000-10-01,3\n"); });
  CHECK(gap.kind() == ErrorKind::FrequencyError);
  CHECK(std::string(gap.what()).find("200004") != std::string::npos);
  CHECK(std::string(gap.what()).find("200010") != std::string::npos);
  CHECK(catch_error([] { fred("DATE,VALUE\n2000-01-01,1\n2000-03-01,2\n"); }).kind() == ErrorKind::FrequencyError);
  CHECK(catch_error([] { fred("DATE,VALUE\n2000-01-01,1\n2000-02-01,.\n"); }).kind() == ErrorKind::ParseError);
  CHECK(catch_error([] { fred("DATE,VALUE\n2000/01/01,1\n2000-02-01,2\n"); }).kind() == ErrorKind::ParseError);
}

TEST_CASE("configuration") {
  std::istringstream in(
      "# comment\n"
      "command = fmb-boot\n"
      "n_sims=500   # trailing comment\n"
      "portfolios = a, b ,c\n"
      "verbose = yes\n"
      "window = 60\n");
  const RunConfig c = parse_config(in);
  CHECK(c.get("command") == "fmb-boot");
  CHECK(c.get_int("n_sims", 0) == 500);
  CHECK(c.get_int("missing", 7) == 7);
  CHECK(c.get_bool("verbose", false));
  CHECK(c.get_list("portfolios") == std::vector<std::string>{"a", "b", "c"});
  CHECK(c.seed() == 0);
  CHECK(c.workers() == 1);
  CHECK(c.get_double("window", 0) == 60.0);

  std::istringstream again(render_config(c));
  CHECK(parse_config(again).values == c.values);

  RunConfig bad;
  bad.set("seed", "-3");
  CHECK(catch_error([&] { bad.seed(); }).kind() == ErrorKind::ConfigError);
  bad.set("workers", "0");
  CHECK(catch_error([&] { bad.workers(); }).kind() == ErrorKind::ConfigError);
  CHECK(catch_error([&] { bad.require("nothing"); }).kind() == ErrorKind::ConfigError);
  std::istringstream broken("a = 1\nno equals here\n");
  const Error e = catch_error([&] { parse_config(broken); });
  CHECK(e.kind() == ErrorKind::ConfigError);
  CHECK(*e.line() == 2);
}

TEST_CASE("number formatting round-trips exactly") {
  Rng rng = substream(1, {});
  for (int i = 0; i < 10000; ++i) {
    const double v = std_normal(rng) * std::pow(10.0, 40.0 * std_normal(rng));
    CHECK(parse_double(fmt(v), "x") == v);
  }
  CHECK(std::isnan(parse_double(fmt(std::nan("")), "x")));
  CHECK(parse_double(fmt(-INFINITY), "x") == -INFINITY);
  CHECK(parse_double("5e-324", "x") > 0);
  CHECK(catch_error([] { parse_double("1.5abc", "x"); }).kind() == ErrorKind::ParseError);
}

TEST_CASE("table round-trips") {
  SUBCASE("series") {
    const TimeSeries s(make_quarter(1990, 2), Frequency::Quarterly, random_matrix(2, 30, 1).col(0), Units::Percent);
    const Table t = roundtrip(series_table(s, "ks"));
    CHECK(t.meta_value("units") == "percent");
    const TimeSeries b = series_from_table(t, "ks");
    CHECK(b.start == s.start);
    CHECK(b.frequency == s.frequency);
    CHECK(b.units == s.units);
    CHECK(b.values == s.values);
  }
  SUBCASE("factors") {
    std::vector<MonthIndex> d;
    for (int i = 0; i < 40; ++i) d.push_back(make_month(2001, 1) + i);
    const FactorSet f(d, {"F_KS", "MKT"}, random_matrix(3, 40, 2));
    const FactorSet b = factors_from_table(roundtrip(factors_table(f)));
    CHECK(b.dates == f.dates);
    CHECK(b.names == f.names);
    CHECK(b.values == f.values);
  }
  SUBCASE("panel") {
    const ReturnPanel p = french(kFrench);
    const ReturnPanel b = panel_from_table(roundtrip(panel_table(p)));
    CHECK(b.names == p.names);
    CHECK(b.dates == p.dates);
    CHECK(b.returns == p.returns);
  }
  SUBCASE("generic table with metadata") {
    Table t;
    t.set_meta("seed", "12");
    t.set_meta("units", "percent");
    t.set_meta("seed", "13");
    t.columns = {"name", "value"};
    t.rows = {{"a", fmt(0.1)}, {"b", fmt(-2.5e-300)}};
    const Table b = roundtrip(t);
    CHECK(b.meta == t.meta);
    CHECK(b.meta_value("seed") == "13");
    CHECK(b.rows == t.rows);
    CHECK(b.number(1, "value") == -2.5e-300);
    CHECK_THROWS_AS(b.col("missing"), Error);
  }
  SUBCASE("ragged table rows are rejected") {
    std::istringstream in("a,b\n1,2\n3\n");
    const Error e = catch_error([&] { read_table(in); });
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(*e.line() == 3);
  }
}

TEST_CASE("posterior draws and chain state round-trip") {
  const Eigen::Index N = 2, T = 30;
  Rng rng = substream(4, {});
  MatrixXd F(T, 1), R(N, T);
  for (Eigen::Index t = 0; t < T; ++t) F(t, 0) = std_normal(rng);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index t = 0; t < T; ++t) R(i, t) = 0.5 + (1.0 + i) * F(t, 0) + 0.1 * std_normal(rng);
  GibbsOptions o;
  o.n_iter = 40;
  o.burn = 10;
  o.thin = 3;
  o.seed = 5;
  const PosteriorDraws d = gibbs_run(R, F, default_hyperparams(N, 1), o);
  REQUIRE(d.size() == 10);

  const PosteriorDraws b = draws_from_table(roundtrip(draws_table(d, {"const", "F_KS"})));
  CHECK(b.iteration == d.iteration);
  CHECK(b.ridge == d.ridge);
  CHECK(b.lambda == d.lambda);
  CHECK(b.tau2 == d.tau2);
  CHECK(b.q2_beta == d.q2_beta);
  CHECK(b.q2_v == d.q2_v);
  CHECK(b.pi_beta == d.pi_beta);
  CHECK(b.pi_v == d.pi_v);
  CHECK(b.B == d.B);
  CHECK(b.lnsig2 == d.lnsig2);
  CHECK(b.K_beta == d.K_beta);
  CHECK(b.K_sigma == d.K_sigma);
  CHECK_THROWS_AS(draws_table(d, {"const"}), Error);

  // JSON state goes through text, as in a restart file.
  const GibbsState s = state_from_json(nlohmann::json::parse(state_json(d.last).dump()));
  REQUIRE(s.port.size() == d.last.port.size());
  for (std::size_t i = 0; i < s.port.size(); ++i) {
    CHECK(s.port[i].beta == d.last.port[i].beta);
    CHECK(s.port[i].h == d.last.port[i].h);
    CHECK(s.port[i].k_beta == d.last.port[i].k_beta);
    CHECK(s.port[i].k_v == d.last.port[i].k_v);
    CHECK(s.port[i].mix == d.last.port[i].mix);
    CHECK(s.port[i].q2_beta == d.last.port[i].q2_beta);
    CHECK(s.port[i].q2_v == d.last.port[i].q2_v);
    CHECK(s.port[i].pi_v == d.last.port[i].pi_v);
  }
  CHECK(s.lambda == d.last.lambda);
  CHECK(s.tau2 == d.last.tau2);

  const Hyperparams h = default_hyperparams(N, 1);
  const Hyperparams hb = hyperparams_from_json(nlohmann::json::parse(hyperparams_json(h).dump()));
  CHECK(hb.mu_beta == h.mu_beta);
  CHECK(hb.var_beta == h.var_beta);
  CHECK(hb.a_beta == h.a_beta);
  CHECK(hb.Psi0 == h.Psi0);
}

TEST_CASE("error records") {
  const Error e(ErrorKind::ParseError, "bad row", 12);
  const nlohmann::json j = error_record(e, "fmb");
  CHECK(j["status"] == "error");
  CHECK(j["kind"] == "ParseError");
  CHECK(j["line"] == 12);
  CHECK(j["command"] == "fmb");
  const nlohmann::json k = error_record(std::runtime_error("boom"), "ols");
  CHECK(k["kind"] == "InternalError");
  CHECK_FALSE(k.contains("line"));
}
