#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "capshare/btvbsv.hpp"
#include "capshare/core.hpp"
#include "capshare/factors.hpp"
#include "json.hpp"

namespace capshare {

inline constexpr double kFrenchMissing = -99.99;

/// Monthly section of a French-library CSV: banner lines, a header row whose
/// first cell is empty, then YYYYMM rows in percent. Reading stops at the
/// first blank or non-date line after the data begins (annual sections).
ReturnPanel parse_french_panel(std::istream& in, const std::string& source = "<stream>");
ReturnPanel load_french_panel(const std::string& path);

/// Two-column DATE,VALUE file (YYYY-MM-DD); frequency is inferred from the spacing.
TimeSeries parse_fred_series(std::istream& in, const std::string& source = "<stream>", Units units = Units::Level);
TimeSeries load_fred_series(const std::string& path, Units units = Units::Level);

/// Flat `key = value` configuration with `#` comments.
struct RunConfig {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values[key] = value; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t seed() const;
  int workers() const;
  std::vector<std::string> get_list(const std::string& key) const;
};

RunConfig parse_config(std::istream& in, const std::string& source = "<stream>");
RunConfig load_config(const std::string& path);
std::string render_config(const RunConfig& cfg);

/// Text table with `# key=value` header lines; numbers are written with %.17g
/// so a write/read cycle reproduces every double exactly.
struct Table {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const;
  std::string meta_value(const std::string& key, const std::string& fallback = "") const;
  void set_meta(const std::string& key, const std::string& value);
  double number(std::size_t row, const std::string& name) const;
  const std::string& text(std::size_t row, const std::string& name) const;
  VectorXd numeric_column(const std::string& name) const;
};

std::string fmt(double v);
double parse_double(const std::string& s, const std::string& context);

void write_table(std::ostream& out, const Table& t);
void write_table(const std::string& path, const Table& t);
Table read_table(std::istream& in, const std::string& source = "<stream>");
Table read_table(const std::string& path);

/// date column (YYYYMM) plus one value column; frequency and units in the header.
Table series_table(const TimeSeries& s, const std::string& name);
TimeSeries series_from_table(const Table& t, const std::string& name);

Table factors_table(const FactorSet& f, Units units = Units::Percent);
FactorSet factors_from_table(const Table& t);

Table panel_table(const ReturnPanel& p);
ReturnPanel panel_from_table(const Table& t);

MonthIndex parse_yyyymm(const std::string& s, const std::string& context);

/// Columnar draw file: one record per stored draw.
Table draws_table(const PosteriorDraws& d, const std::vector<std::string>& coef_names);
PosteriorDraws draws_from_table(const Table& t);

nlohmann::json hyperparams_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);
nlohmann::json state_json(const GibbsState& s);
GibbsState state_from_json(const nlohmann::json& j);

nlohmann::json error_record(const std::exception& e, const std::string& command);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace capshare
