#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "clusterpower/catalog.hpp"
#include "clusterpower/error.hpp"
#include "clusterpower/gof.hpp"
#include "clusterpower/power.hpp"
#include "clusterpower/process.hpp"
#include "clusterpower/version.hpp"

namespace clusterpower {

/// Environment variable naming the directory relative output paths resolve against.
inline constexpr const char* kOutputDirEnv = "CLUSTERPOWER_OUTPUT_DIR";

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, result.ptr);
}

/// 64-bit FNV-1a, as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delimiter = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delimiter, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Days since 1970-01-01 of a proleptic Gregorian date.
inline constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

/// "YYYY-MM-DD" with optional "THH:MM[:SS]" (or a space) in UTC, as a decimal
/// year: year + elapsed seconds of that year / seconds in that year.
inline std::optional<double> parse_datetime_year(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  const std::string str(text);
  char sep = 0;
  const int n = std::sscanf(str.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n != 3 && n < 6) return std::nullopt;
  if (n >= 4 && sep != 'T' && sep != ' ') return std::nullopt;
  static constexpr int kMonthDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (mo < 1 || mo > 12 || d < 1) return std::nullopt;
  const int month_days = kMonthDays[mo - 1] + (mo == 2 && is_leap(y) ? 1 : 0);
  if (d > month_days || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0.0 || s >= 61.0) {
    return std::nullopt;
  }
  const auto start = days_from_civil(y, 1, 1);
  const double elapsed = static_cast<double>(days_from_civil(y, static_cast<unsigned>(mo),
                                                             static_cast<unsigned>(d)) -
                                             start) *
                             86400.0 +
                         h * 3600.0 + mi * 60.0 + s;
  const double year_seconds = (is_leap(y) ? 366.0 : 365.0) * 86400.0;
  return static_cast<double>(y) + elapsed / year_seconds;
}

inline std::optional<double> parse_time(std::string_view text) {
  if (auto v = parse_number(text)) return v;
  return parse_datetime_year(text);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Catalog ingestion
// ---------------------------------------------------------------------------

struct IngestOptions {
  std::string time_column = "time";
  std::optional<std::string> magnitude_column;
  std::optional<double> cutoff;
  /// Window overrides in absolute decimal years.
  std::optional<double> window_start;
  std::optional<double> window_end;
};

struct IngestedCatalog {
  EventCatalog catalog;
  double origin_year = 0.0;  ///< absolute year of catalog time 0
  std::vector<double> magnitudes;  ///< aligned with catalog times when a magnitude column was read
  std::string source;
  std::size_t n_rows = 0;
  std::size_t n_below_cutoff = 0;
  std::size_t n_duplicates = 0;
};

/// Reads a comma-delimited catalog with a header row. `# key=value` lines
/// before the header may set window_start and window_length.
inline IngestedCatalog parse_catalog(std::istream& in, const IngestOptions& options,
                                     std::string source = "<stream>") {
  std::map<std::string, double, std::less<>> metadata;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      const auto body = detail::trim(view.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        if (auto v = detail::parse_number(detail::trim(body.substr(eq + 1)))) {
          metadata[std::string(detail::trim(body.substr(0, eq)))] = *v;
        }
      }
      continue;
    }
    header_line = line;
    header = detail::split_fields(header_line);
    break;
  }
  if (header.empty()) {
    throw Error(ErrorKind::Parse, source + ": missing header row");
  }
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto time_col = column(options.time_column);
  if (!time_col) {
    throw Error(ErrorKind::Parse,
                source + ": line " + std::to_string(line_no) + ": no column '" +
                    options.time_column + "'");
  }
  std::optional<std::size_t> mag_col;
  if (options.magnitude_column) {
    mag_col = column(*options.magnitude_column);
    if (!mag_col) {
      throw Error(ErrorKind::Parse, source + ": line " + std::to_string(line_no) +
                                        ": no column '" + *options.magnitude_column + "'");
    }
  } else if (options.cutoff) {
    mag_col = column("magnitude");
  }
  detail::require_param(!options.cutoff || mag_col.has_value(),
                        "a magnitude cutoff needs a magnitude column");

  IngestedCatalog out;
  out.source = source;
  std::vector<std::pair<double, double>> rows;  // (time, magnitude)
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = detail::split_fields(view);
    auto fail = [&](const std::string& what) {
      throw Error(ErrorKind::Parse, source + ": line " + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() <= *time_col || (mag_col && fields.size() <= *mag_col)) {
      fail("missing field");
    }
    const auto t = detail::parse_time(fields[*time_col]);
    if (!t) fail("cannot parse time '" + std::string(fields[*time_col]) + "'");
    double magnitude = std::numeric_limits<double>::quiet_NaN();
    if (mag_col) {
      const auto m = detail::parse_number(fields[*mag_col]);
      if (!m) fail("cannot parse magnitude '" + std::string(fields[*mag_col]) + "'");
      magnitude = *m;
    }
    ++out.n_rows;
    if (options.cutoff && magnitude < *options.cutoff) {
      ++out.n_below_cutoff;
      continue;
    }
    rows.emplace_back(*t, magnitude);
  }
  if (rows.empty()) {
    throw Error(ErrorKind::EmptyAfterFilter, source + ": no events left after filtering");
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> times;
  for (const auto& [t, m] : rows) {
    if (!times.empty() && times.back() == t) {
      ++out.n_duplicates;
      continue;
    }
    times.push_back(t);
    if (mag_col) out.magnitudes.push_back(m);
  }

  double start = std::floor(times.front());
  double end = std::floor(times.back()) + 1.0;
  if (auto it = metadata.find("window_start"); it != metadata.end()) start = it->second;
  if (auto it = metadata.find("window_length"); it != metadata.end()) end = start + it->second;
  if (options.window_start) start = *options.window_start;
  if (options.window_end) end = *options.window_end;
  detail::require_param(end > start, "window end must follow window start");

  std::vector<double> shifted;
  shifted.reserve(times.size());
  for (double t : times) {
    if (t < start || t >= end) {
      throw Error(ErrorKind::InvalidParameter,
                  source + ": event at " + format_double(t) + " lies outside the window");
    }
    const double s = t - start;
    if (!shifted.empty() && s <= shifted.back()) {
      ++out.n_duplicates;
      continue;
    }
    shifted.push_back(s);
  }
  out.origin_year = start;
  out.catalog = EventCatalog(std::move(shifted), SimulationWindow{end - start});
  return out;
}

inline IngestedCatalog ingest_catalog(const std::filesystem::path& path,
                                      const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, "cannot open catalog " + path.string());
  return parse_catalog(in, options, path.string());
}

/// Catalog CSV that ingest_catalog reads back to an identical EventCatalog.
inline std::string render_catalog_csv(const EventCatalog& catalog, double origin_year = 0.0,
                                      std::span<const double> magnitudes = {}) {
  detail::require_param(magnitudes.empty() || magnitudes.size() == catalog.size(),
                        "magnitudes must align with event times");
  std::string out;
  out += "# window_start=" + format_double(origin_year) + "\n";
  out += "# window_length=" + format_double(catalog.window().length_years) + "\n";
  out += magnitudes.empty() ? "time\n" : "time,magnitude\n";
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    out += format_double(origin_year + catalog[i]);
    if (!magnitudes.empty()) out += "," + format_double(magnitudes[i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

enum class OutputFormat { Csv, Json };

struct ResultMetadata {
  std::string command;
  Seed master_seed = 0;
  std::string config_hash;
  std::string version = std::string(kVersion);
};

/// Resolves a relative output path against $CLUSTERPOWER_OUTPUT_DIR when set.
inline std::filesystem::path resolve_output_path(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0') {
    return std::filesystem::path(dir) / path;
  }
  return path;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  const auto resolved = resolve_output_path(path);
  std::ofstream out(resolved, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Unwritable, "cannot write " + resolved.string());
  out << content;
  out.flush();
  if (!out) throw Error(ErrorKind::Unwritable, "failed writing " + resolved.string());
}

namespace detail {

inline std::string csv_preamble(const ResultMetadata& meta,
                                const std::vector<std::pair<std::string, std::string>>& extra) {
  std::string out;
  out += "# clusterpower " + meta.version + "\n";
  out += "# command=" + meta.command + "\n";
  out += "# master_seed=" + std::to_string(meta.master_seed) + "\n";
  out += "# config_hash=" + meta.config_hash + "\n";
  for (const auto& [k, v] : extra) out += "# " + k + "=" + v + "\n";
  return out;
}

inline nlohmann::ordered_json json_metadata(const ResultMetadata& meta) {
  nlohmann::ordered_json j;
  j["tool"] = "clusterpower";
  j["version"] = meta.version;
  j["command"] = meta.command;
  j["master_seed"] = meta.master_seed;
  j["config_hash"] = meta.config_hash;
  return j;
}

inline nlohmann::ordered_json json_power(const PowerEstimate& p) {
  nlohmann::ordered_json j;
  j["power"] = p.power;
  j["std_error"] = p.std_error;
  j["alpha"] = p.alpha;
  j["n_effective"] = p.n_effective;
  return j;
}

inline nlohmann::ordered_json json_histogram(const Histogram& h) {
  auto rows = nlohmann::ordered_json::array();
  const auto edges = h.edges();
  for (std::size_t i = 0; i < h.bins(); ++i) {
    nlohmann::ordered_json row;
    row["bin_start"] = edges[i];
    row["bin_end"] = edges[i + 1];
    row["count"] = h.counts()[i];
    row["fraction"] = h.fraction(i);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string csv_histogram_rows(const Histogram& h) {
  std::string out = "bin_start,bin_end,count,fraction\n";
  const auto edges = h.edges();
  for (std::size_t i = 0; i < h.bins(); ++i) {
    out += format_double(edges[i]) + "," + format_double(edges[i + 1]) + "," +
           std::to_string(h.counts()[i]) + "," + format_double(h.fraction(i)) + "\n";
  }
  return out;
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

inline std::string render_power_study(const PowerStudy& study, const ResultMetadata& meta,
                                      OutputFormat format) {
  detail::require(!study.distribution.p_values.empty(), ErrorKind::EmptySample,
                  "no p-values to emit");
  const auto& d = study.distribution;
  if (format == OutputFormat::Json) {
    auto j = detail::json_metadata(meta);
    j["power"] = detail::json_power(study.power);
    j["n_trials"] = d.n_trials;
    j["n_untestable"] = d.n_untestable;
    j["ensemble_mean_rate"] = study.ensemble_mean_rate;
    if (study.null_rate) j["null_rate"] = *study.null_rate;
    j["histogram"] = detail::json_histogram(d.histogram);
    return detail::dump(j);
  }
  std::vector<std::pair<std::string, std::string>> extra{
      {"power", format_double(study.power.power)},
      {"std_error", format_double(study.power.std_error)},
      {"alpha", format_double(study.power.alpha)},
      {"n_effective", std::to_string(study.power.n_effective)},
      {"n_trials", std::to_string(d.n_trials)},
      {"n_untestable", std::to_string(d.n_untestable)},
      {"ensemble_mean_rate", format_double(study.ensemble_mean_rate)}};
  if (study.null_rate) extra.emplace_back("null_rate", format_double(*study.null_rate));
  return detail::csv_preamble(meta, extra) + detail::csv_histogram_rows(d.histogram);
}

/// Long format: one row per (clusters_per_century, events_per_decade) cell.
inline std::string render_power_grid(const PowerGrid& grid, const ResultMetadata& meta,
                                     OutputFormat format) {
  if (format == OutputFormat::Json) {
    auto j = detail::json_metadata(meta);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& cell : grid.cells) {
      nlohmann::ordered_json row;
      row["clusters_per_century"] = cell.clusters_per_century;
      row["events_per_decade"] = cell.events_per_decade;
      if (cell.estimate) {
        row["power"] = cell.estimate->power;
        row["std_error"] = cell.estimate->std_error;
        row["n_effective"] = cell.estimate->n_effective;
      } else {
        row["power"] = nullptr;
        row["std_error"] = nullptr;
        row["error"] = cell.error;
      }
      rows.push_back(std::move(row));
    }
    j["grid"] = std::move(rows);
    return detail::dump(j);
  }
  std::string out = detail::csv_preamble(meta, {});
  out += "clusters_per_century,events_per_decade,power,std_error,n_effective,error\n";
  for (const auto& cell : grid.cells) {
    out += format_double(cell.clusters_per_century) + "," + format_double(cell.events_per_decade);
    if (cell.estimate) {
      out += "," + format_double(cell.estimate->power) + "," +
             format_double(cell.estimate->std_error) + "," +
             std::to_string(cell.estimate->n_effective) + ",\n";
    } else {
      out += ",,,," + cell.error + "\n";
    }
  }
  return out;
}

inline std::string render_rate_statistics(const RateStatistics& stats, const ResultMetadata& meta,
                                          OutputFormat format) {
  if (format == OutputFormat::Json) {
    auto j = detail::json_metadata(meta);
    j["n_samples"] = stats.n_samples;
    j["mean_rate"] = stats.mean_rate;
    j["std_rate"] = stats.std_rate;
    auto q = nlohmann::ordered_json::array();
    for (const auto& [level, rate] : stats.quantiles) q.push_back({{"level", level}, {"rate", rate}});
    j["quantiles"] = std::move(q);
    return detail::dump(j);
  }
  std::string out = detail::csv_preamble(meta, {{"n_samples", std::to_string(stats.n_samples)},
                                                {"mean_rate", format_double(stats.mean_rate)},
                                                {"std_rate", format_double(stats.std_rate)}});
  out += "level,rate\n";
  for (const auto& [level, rate] : stats.quantiles) {
    out += format_double(level) + "," + format_double(rate) + "\n";
  }
  return out;
}

/// One histogram block per hypothesized rate.
inline std::string render_rate_study(const std::vector<RateStudyEntry>& entries,
                                     const ResultMetadata& meta, OutputFormat format) {
  if (format == OutputFormat::Json) {
    auto j = detail::json_metadata(meta);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
      nlohmann::ordered_json row;
      row["label"] = e.label;
      row["null_rate"] = e.rate;
      row["power"] = detail::json_power(e.power);
      row["n_untestable"] = e.distribution.n_untestable;
      row["histogram"] = detail::json_histogram(e.distribution.histogram);
      rows.push_back(std::move(row));
    }
    j["studies"] = std::move(rows);
    return detail::dump(j);
  }
  std::string out = detail::csv_preamble(meta, {});
  out += "label,null_rate,power,std_error,bin_start,bin_end,count,fraction\n";
  for (const auto& e : entries) {
    const auto& h = e.distribution.histogram;
    for (std::size_t i = 0; i < h.bins(); ++i) {
      out += e.label + "," + format_double(e.rate) + "," + format_double(e.power.power) + "," +
             format_double(e.power.std_error) + "," + format_double(h.edges()[i]) + "," +
             format_double(h.edges()[i + 1]) + "," + std::to_string(h.counts()[i]) + "," +
             format_double(h.fraction(i)) + "\n";
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const TestOutcome& o) {
  nlohmann::ordered_json j;
  j["test"] = to_string(o.test);
  j["statistic"] = o.statistic;
  j["p_value"] = o.p_value;
  if (o.null_rate) {
    j["null_rate"] = *o.null_rate;
  } else {
    j["null_rate"] = "estimated-from-sample";
  }
  j["fitted_rate"] = o.fitted_rate;
  j["n_events"] = o.n_events;
  j["calibration"] = to_string(o.calibration);
  j["dof"] = o.dof;
  return j;
}

inline std::string render_test_outcome(const TestOutcome& outcome, const ResultMetadata& meta,
                                       OutputFormat format) {
  if (format == OutputFormat::Json) {
    auto j = detail::json_metadata(meta);
    j["outcome"] = to_json(outcome);
    return detail::dump(j);
  }
  std::string out = detail::csv_preamble(meta, {});
  out += "test,statistic,p_value,null_rate,fitted_rate,n_events,calibration,dof\n";
  out += std::string(to_string(outcome.test)) + "," + format_double(outcome.statistic) + "," +
         format_double(outcome.p_value) + "," +
         (outcome.null_rate ? format_double(*outcome.null_rate) : "estimated-from-sample") + "," +
         format_double(outcome.fitted_rate) + "," + std::to_string(outcome.n_events) + "," +
         std::string(to_string(outcome.calibration)) + "," + std::to_string(outcome.dof) + "\n";
  return out;
}

/// Null-statistic quantiles of a calibration.
inline std::string render_calibration(const NullCalibration& cal, double alpha,
                                      const ResultMetadata& meta, OutputFormat format) {
  static constexpr double kLevels[] = {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99};
  const auto stats = cal.statistics();
  if (format == OutputFormat::Json) {
    auto j = detail::json_metadata(meta);
    j["test"] = to_string(cal.test());
    if (cal.null_rate()) j["null_rate"] = *cal.null_rate();
    j["window_years"] = cal.window().length_years;
    j["n_trials"] = cal.n_trials();
    j["n_testable"] = stats.size();
    j["alpha"] = alpha;
    j["critical_value"] = cal.critical_value(alpha);
    auto q = nlohmann::ordered_json::array();
    for (double level : kLevels) q.push_back({{"level", level}, {"statistic", quantile(stats, level)}});
    j["quantiles"] = std::move(q);
    return detail::dump(j);
  }
  std::string out = detail::csv_preamble(
      meta, {{"test", std::string(to_string(cal.test()))},
             {"null_rate", cal.null_rate() ? format_double(*cal.null_rate()) : "conditional"},
             {"window_years", format_double(cal.window().length_years)},
             {"n_trials", std::to_string(cal.n_trials())},
             {"n_testable", std::to_string(stats.size())},
             {"alpha", format_double(alpha)},
             {"critical_value", format_double(cal.critical_value(alpha))}});
  out += "level,statistic\n";
  for (double level : kLevels) {
    out += format_double(level) + "," + format_double(quantile(stats, level)) + "\n";
  }
  return out;
}

/// Renders fully before touching the file, so a failed render writes nothing.
template <class Result, class... Extra>
void emit_results(const Result& result, OutputFormat format, const std::filesystem::path& path,
                  const ResultMetadata& meta, Extra&&... extra) {
  std::string content;
  if constexpr (std::is_same_v<Result, PowerStudy>) {
    content = render_power_study(result, meta, format);
  } else if constexpr (std::is_same_v<Result, PowerGrid>) {
    content = render_power_grid(result, meta, format);
  } else if constexpr (std::is_same_v<Result, RateStatistics>) {
    content = render_rate_statistics(result, meta, format);
  } else if constexpr (std::is_same_v<Result, std::vector<RateStudyEntry>>) {
    content = render_rate_study(result, meta, format);
  } else if constexpr (std::is_same_v<Result, TestOutcome>) {
    content = render_test_outcome(result, meta, format);
  } else if constexpr (std::is_same_v<Result, NullCalibration>) {
    content = render_calibration(result, std::forward<Extra>(extra)..., meta, format);
  } else {
    static_assert(sizeof(Result) == 0, "no renderer for this result type");
  }
  write_text_file(path, content);
}

}  // namespace clusterpower
