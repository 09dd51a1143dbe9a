#include "capshare/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace capshare {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool blank(const std::string& line) { return trim(line).empty(); }

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidInput, "cannot open '" + path + "'");
  return in;
}

Error parse_error(const std::string& source, long line, const std::string& what) {
  return Error(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + what, line);
}

bool is_yyyymm(const std::string& s) {
  return s.size() == 6 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  if (t == "nan") return std::nan("");
  if (t == "inf") return INFINITY;
  if (t == "-inf") return -INFINITY;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || (errno == ERANGE && std::isinf(v)))
    throw Error(ErrorKind::ParseError, context + ": not a number '" + t + "'");
  return v;
}

MonthIndex parse_yyyymm(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  if (!is_yyyymm(t)) throw Error(ErrorKind::ParseError, context + ": malformed date '" + t + "' (want YYYYMM)");
  const int y = std::stoi(t.substr(0, 4));
  const int m = std::stoi(t.substr(4, 2));
  if (m < 1 || m > 12) throw Error(ErrorKind::ParseError, context + ": month out of range in '" + t + "'");
  return make_month(y, m);
}

ReturnPanel parse_french_panel(std::istream& in, const std::string& source) {
  std::string line;
  long lineno = 0;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto cells = split_csv(line);
    if (cells.size() >= 3 && cells[0].empty()) {
      names.assign(cells.begin() + 1, cells.end());
      break;
    }
    if (!cells.empty() && is_yyyymm(cells[0])) throw parse_error(source, lineno, "data row before the header row");
  }
  if (names.empty()) throw Error(ErrorKind::ParseError, source + ": no header row of portfolio names found");

  std::vector<MonthIndex> dates;
  std::vector<std::vector<double>> cols(names.size());
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) {
      if (dates.empty()) continue;
      break;
    }
    const auto cells = split_csv(line);
    if (!is_yyyymm(cells[0])) {
      if (dates.empty()) throw parse_error(source, lineno, "malformed date '" + cells[0] + "'");
      break;
    }
    const MonthIndex d = parse_yyyymm(cells[0], source + ":" + std::to_string(lineno));
    if (!dates.empty() && d != dates.back() + 1)
      throw parse_error(source, lineno, "date " + cells[0] + " does not follow " + format_yyyymm(dates.back()));
    if (cells.size() != names.size() + 1)
      throw parse_error(source, lineno,
                        "ragged row: " + std::to_string(cells.size() - 1) + " values for " + std::to_string(names.size()) +
                            " portfolios");
    for (std::size_t j = 0; j < names.size(); ++j) {
      double v;
      try {
        v = parse_double(cells[j + 1], source + ":" + std::to_string(lineno));
      } catch (const Error&) {
        throw parse_error(source, lineno, "bad value '" + cells[j + 1] + "'");
      }
      if (v == kFrenchMissing || v == -999.0)
        throw parse_error(source, lineno, "missing-value sentinel in row " + cells[0] + ", column '" + names[j] + "'");
      cols[j].push_back(v);
    }
    dates.push_back(d);
  }
  if (dates.empty()) throw Error(ErrorKind::ParseError, source + ": no data rows");
  MatrixXd r(static_cast<Eigen::Index>(names.size()), static_cast<Eigen::Index>(dates.size()));
  for (std::size_t j = 0; j < names.size(); ++j)
    for (std::size_t t = 0; t < dates.size(); ++t) r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)) = cols[j][t];
  return ReturnPanel(std::move(dates), std::move(names), std::move(r));
}

ReturnPanel load_french_panel(const std::string& path) {
  auto in = open_in(path);
  return parse_french_panel(in, path);
}

TimeSeries parse_fred_series(std::istream& in, const std::string& source, Units units) {
  std::string line;
  long lineno = 0;
  bool header = false;
  std::vector<MonthIndex> dates;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto cells = split_csv(line);
    if (!header) {
      header = true;
      if (cells.size() != 2) throw parse_error(source, lineno, "expected a two-column DATE,VALUE header");
      if (!cells[0].empty() && std::isalpha(static_cast<unsigned char>(cells[0][0]))) continue;
    }
    if (cells.size() != 2) throw parse_error(source, lineno, "expected two columns");
    const std::string& d = cells[0];
    if (d.size() < 7 || d[4] != '-') throw parse_error(source, lineno, "malformed date '" + d + "' (want YYYY-MM-DD)");
    int y = 0, m = 0;
    if (std::from_chars(d.data(), d.data() + 4, y).ec != std::errc() ||
        std::from_chars(d.data() + 5, d.data() + 7, m).ec != std::errc() || m < 1 || m > 12)
      throw parse_error(source, lineno, "malformed date '" + d + "'");
    if (d.size() >= 10 && d.substr(7, 3) != "-01")
      throw parse_error(source, lineno, "date '" + d + "' is not the first day of a period");
    if (cells[1] == ".") throw parse_error(source, lineno, "missing value on " + d);
    double v;
    try {
      v = parse_double(cells[1], source);
    } catch (const Error&) {
      throw parse_error(source, lineno, "bad value '" + cells[1] + "'");
    }
    dates.push_back(make_month(y, m));
    vals.push_back(v);
  }
  if (dates.size() < 2) throw Error(ErrorKind::ParseError, source + ": need at least two observations");
  const long step = dates[1] - dates[0];
  if (step != 1 && step != 3)
    throw Error(ErrorKind::FrequencyError, source + ": first spacing of " + std::to_string(step) +
                                               " months is neither monthly nor quarterly");
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (dates[i] - dates[i - 1] != step)
      throw Error(ErrorKind::FrequencyError, source + ": gap between " + format_yyyymm(dates[i - 1]) + " and " +
                                                 format_yyyymm(dates[i]) + " breaks the " +
                                                 (step == 1 ? "monthly" : "quarterly") + " spacing");
  }
  VectorXd v = Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return TimeSeries(dates.front(), step == 1 ? Frequency::Monthly : Frequency::Quarterly, std::move(v), units);
}

TimeSeries load_fred_series(const std::string& path, Units units) {
  auto in = open_in(path);
  return parse_fred_series(in, path, units);
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end() || it->second.empty()) throw Error(ErrorKind::ConfigError, "missing required setting '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    return parse_double(get(key), key);
  } catch (const Error&) {
    throw Error(ErrorKind::ConfigError, "setting '" + key + "' is not a number: '" + get(key) + "'");
  }
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get(key);
  long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(ErrorKind::ConfigError, "setting '" + key + "' is not an integer: '" + s + "'");
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string s = get(key);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw Error(ErrorKind::ConfigError, "setting '" + key + "' is not a boolean: '" + get(key) + "'");
}

std::uint64_t RunConfig::seed() const {
  const std::string s = get("seed", "0");
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(ErrorKind::ConfigError, "seed must be a non-negative integer: '" + s + "'");
  return v;
}

int RunConfig::workers() const {
  const long w = get_int("workers", 1);
  if (w < 1) throw Error(ErrorKind::ConfigError, "workers must be >= 1");
  return static_cast<int>(w);
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  for (auto& s : split_csv(get(key)))
    if (!s.empty()) out.push_back(s);
  return out;
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (blank(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, source + ":" + std::to_string(lineno) + ": expected key = value", lineno);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::ConfigError, source + ":" + std::to_string(lineno) + ": empty key", lineno);
    cfg.values[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path + "'");
  return parse_config(in, path);
}

std::string render_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg.values) s += k + " = " + v + "\n";
  return s;
}

std::size_t Table::col(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorKind::InvalidInput, "table has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::string Table::meta_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return fallback;
}

void Table::set_meta(const std::string& key, const std::string& value) {
  for (auto& kv : meta)
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  meta.emplace_back(key, value);
}

double Table::number(std::size_t row, const std::string& name) const {
  return parse_double(rows.at(row).at(col(name)), "column '" + name + "'");
}

const std::string& Table::text(std::size_t row, const std::string& name) const { return rows.at(row).at(col(name)); }

VectorXd Table::numeric_column(const std::string& name) const {
  const std::size_t c = col(name);
  VectorXd v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_double(rows[i][c], "column '" + name + "'");
  return v;
}

void write_table(std::ostream& out, const Table& t) {
  for (const auto& [k, v] : t.meta) out << "# " << k << "=" << v << "\n";
  out << join(t.columns) << "\n";
  for (const auto& r : t.rows) {
    if (r.size() != t.columns.size()) throw Error(ErrorKind::DimensionError, "table row width does not match its header");
    out << join(r) << "\n";
  }
}

void write_table(const std::string& path, const Table& t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write '" + path + "'");
  write_table(out, t);
}

Table read_table(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  long lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header && line.rfind("#", 0) == 0) {
      const std::string body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) t.meta.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (!have_header) {
      t.columns = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size()) throw parse_error(source, lineno, "ragged row");
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw Error(ErrorKind::ParseError, source + ": empty table");
  return t;
}

Table read_table(const std::string& path) {
  auto in = open_in(path);
  return read_table(in, path);
}

Table series_table(const TimeSeries& s, const std::string& name) {
  Table t;
  t.set_meta("frequency", std::string(to_string(s.frequency)));
  t.set_meta("units", std::string(to_string(s.units)));
  t.columns = {"date", name};
  for (Eigen::Index i = 0; i < s.size(); ++i) t.rows.push_back({format_yyyymm(s.date(i)), fmt(s.values[i])});
  return t;
}

TimeSeries series_from_table(const Table& t, const std::string& name) {
  if (t.rows.empty()) throw Error(ErrorKind::InvalidInput, "series table is empty");
  const Frequency f = t.meta_value("frequency", "monthly") == "quarterly" ? Frequency::Quarterly : Frequency::Monthly;
  const Units u = units_from_string(t.meta_value("units", "ratio"));
  const MonthIndex start = parse_yyyymm(t.text(0, "date"), "series table");
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    if (parse_yyyymm(t.text(i, "date"), "series table") != start + static_cast<long>(i) * step_months(f))
      throw Error(ErrorKind::FrequencyError, "series table dates are not evenly spaced at row " + std::to_string(i + 1));
  return TimeSeries(start, f, t.numeric_column(name), u);
}

Table factors_table(const FactorSet& f, Units units) {
  Table t;
  t.set_meta("frequency", "monthly");
  t.set_meta("units", std::string(to_string(units)));
  t.columns = {"date"};
  t.columns.insert(t.columns.end(), f.names.begin(), f.names.end());
  for (Eigen::Index r = 0; r < f.n_periods(); ++r) {
    std::vector<std::string> row{format_yyyymm(f.dates[static_cast<std::size_t>(r)])};
    for (Eigen::Index c = 0; c < f.n_factors(); ++c) row.push_back(fmt(f.values(r, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

FactorSet factors_from_table(const Table& t) {
  std::vector<MonthIndex> dates;
  for (std::size_t i = 0; i < t.rows.size(); ++i) dates.push_back(parse_yyyymm(t.text(i, "date"), "factor table"));
  std::vector<std::string> names;
  for (const auto& c : t.columns)
    if (c != "date") names.push_back(c);
  MatrixXd v(static_cast<Eigen::Index>(dates.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) v.col(static_cast<Eigen::Index>(j)) = t.numeric_column(names[j]);
  return FactorSet(std::move(dates), std::move(names), std::move(v));
}

Table panel_table(const ReturnPanel& p) {
  Table t;
  t.set_meta("frequency", "monthly");
  t.set_meta("units", "percent");
  t.columns = {"date"};
  t.columns.insert(t.columns.end(), p.names.begin(), p.names.end());
  for (Eigen::Index c = 0; c < p.n_periods(); ++c) {
    std::vector<std::string> row{format_yyyymm(p.dates[static_cast<std::size_t>(c)])};
    for (Eigen::Index i = 0; i < p.n_assets(); ++i) row.push_back(fmt(p.returns(i, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

ReturnPanel panel_from_table(const Table& t) {
  const FactorSet f = factors_from_table(t);
  return ReturnPanel(f.dates, f.names, f.values.transpose());
}

Table draws_table(const PosteriorDraws& d, const std::vector<std::string>& coef_names) {
  const Eigen::Index N = d.n_assets, p = d.n_coef, T = d.n_periods;
  if (static_cast<Eigen::Index>(coef_names.size()) != p)
    throw Error(ErrorKind::DimensionError, "draws_table: one name per coefficient required");
  Table t;
  t.set_meta("n_assets", std::to_string(N));
  t.set_meta("n_coef", std::to_string(p));
  t.set_meta("n_periods", std::to_string(T));
  t.set_meta("has_paths", d.has_paths ? "1" : "0");
  t.set_meta("coefficients", [&] {
    std::string s;
    for (std::size_t j = 0; j < coef_names.size(); ++j) s += (j ? ";" : "") + coef_names[j];
    return s;
  }());
  t.columns = {"iteration", "ridge"};
  for (const auto& n : coef_names) t.columns.push_back("lambda_" + n);
  t.columns.push_back("tau2");
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < p; ++j) t.columns.push_back("q2_beta_" + std::to_string(i) + "_" + std::to_string(j));
  for (Eigen::Index i = 0; i < N; ++i) t.columns.push_back("q2_v_" + std::to_string(i));
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < p; ++j) t.columns.push_back("pi_beta_" + std::to_string(i) + "_" + std::to_string(j));
  for (Eigen::Index i = 0; i < N; ++i) t.columns.push_back("pi_v_" + std::to_string(i));
  if (d.has_paths) {
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index s = 0; s < T; ++s)
          t.columns.push_back("B_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(s));
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index s = 0; s < T; ++s) t.columns.push_back("lnsig2_" + std::to_string(i) + "_" + std::to_string(s));
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index s = 0; s < T; ++s)
          t.columns.push_back("Kb_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(s));
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index s = 0; s < T; ++s) t.columns.push_back("Ks_" + std::to_string(i) + "_" + std::to_string(s));
  }
  for (Eigen::Index r = 0; r < d.size(); ++r) {
    std::vector<std::string> row;
    row.reserve(t.columns.size());
    row.push_back(std::to_string(d.iteration[static_cast<std::size_t>(r)]));
    row.push_back(d.ridge[static_cast<std::size_t>(r)] ? "1" : "0");
    for (Eigen::Index j = 0; j < p; ++j) row.push_back(fmt(d.lambda(r, j)));
    row.push_back(fmt(d.tau2[r]));
    for (Eigen::Index c = 0; c < d.q2_beta.cols(); ++c) row.push_back(fmt(d.q2_beta(r, c)));
    for (Eigen::Index c = 0; c < d.q2_v.cols(); ++c) row.push_back(fmt(d.q2_v(r, c)));
    for (Eigen::Index c = 0; c < d.pi_beta.cols(); ++c) row.push_back(fmt(d.pi_beta(r, c)));
    for (Eigen::Index c = 0; c < d.pi_v.cols(); ++c) row.push_back(fmt(d.pi_v(r, c)));
    if (d.has_paths) {
      const auto ur = static_cast<std::size_t>(r);
      for (double v : d.B[ur]) row.push_back(fmt(v));
      for (double v : d.lnsig2[ur]) row.push_back(fmt(v));
      for (auto v : d.K_beta[ur]) row.push_back(std::to_string(v));
      for (auto v : d.K_sigma[ur]) row.push_back(std::to_string(v));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

PosteriorDraws draws_from_table(const Table& t) {
  PosteriorDraws d;
  auto meta_int = [&](const std::string& k) {
    const std::string v = t.meta_value(k);
    if (v.empty()) throw Error(ErrorKind::ParseError, "draw file is missing '" + k + "' in its header");
    return static_cast<Eigen::Index>(std::stol(v));
  };
  d.n_assets = meta_int("n_assets");
  d.n_coef = meta_int("n_coef");
  d.n_periods = meta_int("n_periods");
  d.has_paths = meta_int("has_paths") != 0;
  const Eigen::Index N = d.n_assets, p = d.n_coef, T = d.n_periods;
  const auto R = static_cast<Eigen::Index>(t.rows.size());
  d.lambda.resize(R, p);
  d.tau2.resize(R);
  d.q2_beta.resize(R, N * p);
  d.q2_v.resize(R, N);
  d.pi_beta.resize(R, N * p);
  d.pi_v.resize(R, N);
  const std::size_t expected = 3 + static_cast<std::size_t>(p + 2 * N * p + 2 * N) +
                               (d.has_paths ? static_cast<std::size_t>(2 * N * p * T + 2 * N * T) : 0);
  if (t.columns.size() != expected) throw Error(ErrorKind::ParseError, "draw file column count does not match its header");
  for (Eigen::Index r = 0; r < R; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    std::size_t c = 0;
    auto next = [&] { return parse_double(row[c++], "draw file"); };
    d.iteration.push_back(std::stol(row[c++]));
    d.ridge.push_back(row[c++] == "1" ? 1 : 0);
    for (Eigen::Index j = 0; j < p; ++j) d.lambda(r, j) = next();
    d.tau2[r] = next();
    for (Eigen::Index k = 0; k < N * p; ++k) d.q2_beta(r, k) = next();
    for (Eigen::Index k = 0; k < N; ++k) d.q2_v(r, k) = next();
    for (Eigen::Index k = 0; k < N * p; ++k) d.pi_beta(r, k) = next();
    for (Eigen::Index k = 0; k < N; ++k) d.pi_v(r, k) = next();
    if (d.has_paths) {
      auto& B = d.B.emplace_back(static_cast<std::size_t>(N * p * T));
      for (auto& v : B) v = next();
      auto& L = d.lnsig2.emplace_back(static_cast<std::size_t>(N * T));
      for (auto& v : L) v = next();
      auto& Kb = d.K_beta.emplace_back(static_cast<std::size_t>(N * p * T));
      for (auto& v : Kb) v = static_cast<std::uint8_t>(std::stoi(row[c++]));
      auto& Ks = d.K_sigma.emplace_back(static_cast<std::size_t>(N * T));
      for (auto& v : Ks) v = static_cast<std::uint8_t>(std::stoi(row[c++]));
    }
  }
  return d;
}

namespace {

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    j.push_back(row);
  }
  return j;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorKind::ParseError, "expected a JSON matrix");
  const auto R = static_cast<Eigen::Index>(j.size());
  const Eigen::Index C = R ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd m(R, C);
  for (Eigen::Index r = 0; r < R; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != C)
      throw Error(ErrorKind::ParseError, "ragged JSON matrix");
    for (Eigen::Index c = 0; c < C; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

template <class V>
nlohmann::json vec_json(const V& v) {
  std::vector<typename V::Scalar> out(v.data(), v.data() + v.size());
  return out;
}

VectorXd vecd(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

VectorXi veci(const nlohmann::json& j) {
  const auto v = j.get<std::vector<int>>();
  return Eigen::Map<const VectorXi>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json hyperparams_json(const Hyperparams& h) {
  return {{"mu_beta", matrix_json(h.mu_beta)},  {"var_beta", matrix_json(h.var_beta)}, {"mu_lnsig2", h.mu_lnsig2},
          {"var_lnsig2", h.var_lnsig2},         {"a_beta", h.a_beta},                  {"b_beta", h.b_beta},
          {"a_v", h.a_v},                       {"b_v", h.b_v},                        {"gamma_beta", h.gamma_beta},
          {"theta_beta", h.theta_beta},         {"gamma_v", h.gamma_v},                {"theta_v", h.theta_v},
          {"lambda_mean", h.lambda_mean},       {"lambda_var", h.lambda_var},          {"psi0", h.psi0},
          {"Psi0", h.Psi0}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.mu_beta = matrix_from_json(j.at("mu_beta"));
  h.var_beta = matrix_from_json(j.at("var_beta"));
  h.mu_lnsig2 = j.at("mu_lnsig2");
  h.var_lnsig2 = j.at("var_lnsig2");
  h.a_beta = j.at("a_beta");
  h.b_beta = j.at("b_beta");
  h.a_v = j.at("a_v");
  h.b_v = j.at("b_v");
  h.gamma_beta = j.at("gamma_beta");
  h.theta_beta = j.at("theta_beta");
  h.gamma_v = j.at("gamma_v");
  h.theta_v = j.at("theta_v");
  h.lambda_mean = j.at("lambda_mean");
  h.lambda_var = j.at("lambda_var");
  h.psi0 = j.at("psi0");
  h.Psi0 = j.at("Psi0");
  return h;
}

nlohmann::json state_json(const GibbsState& s) {
  nlohmann::json ports = nlohmann::json::array();
  for (const auto& ps : s.port) {
    MatrixXd kb = ps.k_beta.cast<double>();
    ports.push_back({{"beta", matrix_json(ps.beta)},
                     {"h", vec_json(ps.h)},
                     {"k_beta", matrix_json(kb)},
                     {"k_v", vec_json(ps.k_v)},
                     {"mix", vec_json(ps.mix)},
                     {"q2_beta", vec_json(ps.q2_beta)},
                     {"q2_v", ps.q2_v},
                     {"pi_beta", vec_json(ps.pi_beta)},
                     {"pi_v", ps.pi_v}});
  }
  return {{"portfolios", ports}, {"lambda", vec_json(s.lambda)}, {"tau2", s.tau2}, {"ridge", s.ridge}};
}

GibbsState state_from_json(const nlohmann::json& j) {
  GibbsState s;
  for (const auto& pj : j.at("portfolios")) {
    PortfolioState ps;
    ps.beta = matrix_from_json(pj.at("beta"));
    ps.h = vecd(pj.at("h"));
    ps.k_beta = matrix_from_json(pj.at("k_beta")).cast<int>();
    ps.k_v = veci(pj.at("k_v"));
    ps.mix = veci(pj.at("mix"));
    ps.q2_beta = vecd(pj.at("q2_beta"));
    ps.q2_v = pj.at("q2_v");
    ps.pi_beta = vecd(pj.at("pi_beta"));
    ps.pi_v = pj.at("pi_v");
    s.port.push_back(std::move(ps));
  }
  s.lambda = vecd(j.at("lambda"));
  s.tau2 = j.at("tau2");
  s.ridge = j.at("ridge");
  return s;
}

nlohmann::json error_record(const std::exception& e, const std::string& command) {
  nlohmann::json j{{"status", "error"}, {"command", command}, {"message", e.what()}};
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    j["kind"] = std::string(to_string(err->kind()));
    if (err->line()) j["line"] = *err->line();
  } else {
    j["kind"] = "InternalError";
  }
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

}  // namespace capshare
