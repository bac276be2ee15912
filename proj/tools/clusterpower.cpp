#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clusterpower/clusterpower.hpp"

namespace cp = clusterpower;

namespace {

struct Flags {
  double clusters = 3.0;
  double events_per_decade = 4.0;
  double duration = 15.0;
  double years = 110.0;
  std::string onset_rule = "reject";
  bool poisson = false;
  double rate = 0.12;

  std::string catalog;
  std::string time_column = "time";
  std::string magnitude_column;
  std::optional<double> cutoff;
  std::optional<double> window_start;
  std::optional<double> window_end;

  std::string test = "ks";
  std::string calibration = "monte-carlo";
  std::size_t calibration_trials = 10000;
  std::string ks_alternative = "two-sided";
  std::size_t min_events = 3;
  double bin_width = 1.0;
  double min_expected = 5.0;
  int gap_order = 3;
  std::string overlap = "non-overlapping";
  int bins = 0;

  std::size_t trials = 10000;
  double alpha = 0.05;
  cp::Seed seed = 42;
  std::optional<double> null_rate;
  std::optional<double> null_quantile;
  std::string untestable = "exclude";
  unsigned workers = 0;

  std::string cluster_axis = "2,3,4,5";
  std::string event_axis = "2,3,4,5";
  std::string levels = "0.7,0.9";
  std::string rate_quantiles;
  std::size_t samples = 10000;

  std::string output;
  std::string format = "csv";
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto v = cp::detail::parse_number(cp::detail::trim(item));
    if (!v) throw cp::Error(cp::ErrorKind::InvalidParameter, std::string("cannot parse ") + what);
    values.push_back(*v);
  }
  if (values.empty()) throw cp::Error(cp::ErrorKind::InvalidParameter, std::string(what) + " is empty");
  return values;
}

void add_process(CLI::App* app, Flags& f) {
  app->add_option("--clusters", f.clusters, "cluster onsets per century")->capture_default_str();
  app->add_option("--events-per-decade", f.events_per_decade, "in-cluster events per decade")
      ->capture_default_str();
  app->add_option("--duration", f.duration, "cluster duration in years")->capture_default_str();
  app->add_option("--years", f.years, "observation window in years")->capture_default_str();
  app->add_option("--onset-rule", f.onset_rule, "overlapping onsets: reject or defer")
      ->check(CLI::IsMember({"reject", "defer"}))
      ->capture_default_str();
  app->add_flag("--poisson", f.poisson, "simulate a homogeneous Poisson process instead");
  app->add_option("--rate", f.rate, "Poisson rate in events per year")->capture_default_str();
}

void add_catalog(CLI::App* app, Flags& f) {
  app->add_option("--catalog", f.catalog, "catalog CSV with a header row")->required();
  app->add_option("--time-column", f.time_column, "name of the time column")->capture_default_str();
  app->add_option("--magnitude-column", f.magnitude_column, "name of the magnitude column");
  app->add_option("--cutoff", f.cutoff, "drop events below this magnitude");
  app->add_option("--window-start", f.window_start, "window start, decimal year");
  app->add_option("--window-end", f.window_end, "window end, decimal year");
}

void add_test(CLI::App* app, Flags& f) {
  app->add_option("--test", f.test, "ks, counts or inter")
      ->check(CLI::IsMember({"ks", "counts", "inter"}))
      ->capture_default_str();
  app->add_option("--calibration", f.calibration, "analytic or monte-carlo")
      ->check(CLI::IsMember({"analytic", "monte-carlo"}))
      ->capture_default_str();
  app->add_option("--calibration-trials", f.calibration_trials, "null samples per calibration")
      ->capture_default_str();
  app->add_option("--ks-alternative", f.ks_alternative, "two-sided or short-gaps")
      ->check(CLI::IsMember({"two-sided", "short-gaps"}))
      ->capture_default_str();
  app->add_option("--min-events", f.min_events, "fewest events a catalog needs to be tested")
      ->capture_default_str();
  app->add_option("--bin-width", f.bin_width, "count-test bin width in years")->capture_default_str();
  app->add_option("--min-expected", f.min_expected, "smallest expected count per category")
      ->capture_default_str();
  app->add_option("--gap-order", f.gap_order, "events spanned by one inter-event gap")
      ->capture_default_str();
  app->add_option("--overlap", f.overlap, "non-overlapping or sliding gaps")
      ->check(CLI::IsMember({"non-overlapping", "sliding"}))
      ->capture_default_str();
  app->add_option("--bins", f.bins, "inter-event bins, 0 for automatic")->capture_default_str();
  app->add_option("--null-rate", f.null_rate, "fixed null rate for the inter test");
}

void add_power(CLI::App* app, Flags& f) {
  app->add_option("--trials", f.trials, "simulated catalogs")->capture_default_str();
  app->add_option("--alpha", f.alpha, "significance level")->capture_default_str();
  app->add_option("--null-quantile", f.null_quantile,
                  "inter test: null rate at this quantile of the ensemble rates");
  app->add_option("--untestable", f.untestable, "exclude or accept sparse catalogs")
      ->check(CLI::IsMember({"exclude", "accept"}))
      ->capture_default_str();
  app->add_option("--workers", f.workers, "worker threads, 0 for all cores")->capture_default_str();
}

void add_seed(CLI::App* app, Flags& f) {
  app->add_option("--seed", f.seed, "master seed")->capture_default_str();
}

void add_output(CLI::App* app, Flags& f, bool with_format = true) {
  app->add_option("--output", f.output, "result file; relative paths honour CLUSTERPOWER_OUTPUT_DIR");
  if (with_format) {
    app->add_option("--format", f.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  }
}

cp::ProcessModel make_process(const Flags& f) {
  const cp::SimulationWindow window{f.years};
  if (f.poisson) return cp::PoissonProcess{{f.rate}, window};
  cp::ClusterProcessParams p;
  p.clusters_per_century = f.clusters;
  p.in_cluster_events_per_decade = f.events_per_decade;
  p.cluster_duration_years = f.duration;
  p.window = window;
  p.onset_rule = f.onset_rule == "defer" ? cp::OnsetRule::Defer : cp::OnsetRule::Reject;
  return p;
}

cp::RunConfig make_config(const std::string& command, const Flags& f, bool uses_catalog,
                          bool uses_process) {
  cp::RunConfig c;
  c.command = command;
  if (uses_process) c.process = make_process(f);
  if (uses_catalog) {
    c.catalog_path = f.catalog;
    c.ingest.time_column = f.time_column;
    if (!f.magnitude_column.empty()) c.ingest.magnitude_column = f.magnitude_column;
    c.ingest.cutoff = f.cutoff;
    c.ingest.window_start = f.window_start;
    c.ingest.window_end = f.window_end;
  }
  c.test.id = f.test == "counts"  ? cp::TestId::Chi2Counts
              : f.test == "inter" ? cp::TestId::Chi2InterNEvent
                                  : cp::TestId::KsInterevent;
  c.test.calibration =
      f.calibration == "analytic" ? cp::Calibration::Analytic : cp::Calibration::MonteCarlo;
  c.test.calibration_trials = f.calibration_trials;
  c.test.ks.alternative =
      f.ks_alternative == "short-gaps" ? cp::KsAlternative::ShortGaps : cp::KsAlternative::TwoSided;
  c.test.ks.min_events = f.min_events;
  c.test.counts.min_events = f.min_events;
  c.test.counts.bin_width_years = f.bin_width;
  c.test.counts.min_expected = f.min_expected;
  c.test.inter.n = f.gap_order;
  c.test.inter.overlap =
      f.overlap == "sliding" ? cp::GapOverlap::Sliding : cp::GapOverlap::NonOverlapping;
  c.test.inter.bins = f.bins;
  c.alpha = f.alpha;
  if (f.null_rate && f.null_quantile) {
    throw cp::Error(cp::ErrorKind::InvalidParameter,
                    "--null-rate and --null-quantile are mutually exclusive");
  }
  if (f.null_rate) c.null_rate = cp::NullRatePolicy::fixed(*f.null_rate);
  if (f.null_quantile) c.null_rate = cp::NullRatePolicy::at_quantile(*f.null_quantile);
  c.untestable =
      f.untestable == "accept" ? cp::UntestablePolicy::CountAsAccept : cp::UntestablePolicy::Exclude;
  c.n_trials = f.trials;
  c.seed = f.seed;
  c.cluster_axis = parse_list(f.cluster_axis, "--cluster-axis");
  c.event_axis = parse_list(f.event_axis, "--event-axis");
  c.levels = parse_list(f.levels, "--levels");
  c.n_samples = f.samples;
  if (!f.output.empty()) c.output = f.output;
  c.format = f.format == "json" ? cp::OutputFormat::Json : cp::OutputFormat::Csv;
  c.workers = f.workers;
  c.validate();
  return c;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_outcome(const cp::TestOutcome& o) {
  std::cout << "test=" << cp::to_string(o.test) << " statistic=" << cp::format_double(o.statistic)
            << " p_value=" << cp::format_double(o.p_value) << " n_events=" << o.n_events
            << " fitted_rate=" << cp::format_double(o.fitted_rate)
            << " calibration=" << cp::to_string(o.calibration);
  if (o.test != cp::TestId::KsInterevent) std::cout << " dof=" << o.dof;
  std::cout << "\n";
}

cp::TestOutcome test_catalog(const cp::RunConfig& c, const cp::EventCatalog& catalog) {
  std::optional<double> null_rate;
  if (c.test.id == cp::TestId::Chi2InterNEvent) {
    cp::detail::require_param(c.null_rate.kind == cp::NullRatePolicy::Kind::Fixed,
                              "the inter test on one catalog needs --null-rate");
    null_rate = c.null_rate.value;
  }
  const cp::CatalogTester tester(c.test, catalog.window(), null_rate, c.seed);
  return tester(catalog);
}

int run_simulate(const cp::RunConfig& c) {
  const auto catalog = cp::sample_catalog(*c.process, cp::derive_seed(c.seed, cp::Stream::Catalog, 0));
  const auto text = cp::detail::csv_preamble(c.metadata(), {}) + cp::render_catalog_csv(catalog);
  if (c.output) {
    cp::write_text_file(*c.output, text);
    std::cout << "events=" << catalog.size() << " rate=" << num(cp::mean_rate(catalog))
              << " output=" << cp::resolve_output_path(*c.output).string() << "\n";
  } else {
    std::cout << text;
  }
  return 0;
}

int run_test(const cp::RunConfig& c, bool report_ingest) {
  const auto ingested = cp::ingest_catalog(*c.catalog_path, c.ingest);
  if (report_ingest) {
    std::cout << "rows=" << ingested.n_rows << " below_cutoff=" << ingested.n_below_cutoff
              << " duplicates=" << ingested.n_duplicates << " events=" << ingested.catalog.size()
              << " window_start=" << cp::format_double(ingested.origin_year)
              << " window_years=" << cp::format_double(ingested.catalog.window().length_years)
              << "\n";
  }
  const auto outcome = test_catalog(c, ingested.catalog);
  print_outcome(outcome);
  if (c.output) cp::emit_results(outcome, c.format, *c.output, c.metadata());
  return 0;
}

int run_power(const cp::RunConfig& c, const std::string& rate_quantiles) {
  const auto config = c.power_config();
  if (!rate_quantiles.empty()) {
    const auto levels = parse_list(rate_quantiles, "--rate-quantiles");
    const auto entries = cp::quantile_rate_study(config, levels);
    for (const auto& e : entries) {
      std::cout << "null=" << e.label << " rate=" << num(e.rate) << " power=" << num(e.power.power)
                << " std_error=" << num(e.power.std_error)
                << " n_effective=" << e.power.n_effective << "\n";
    }
    if (c.output) cp::emit_results(entries, c.format, *c.output, c.metadata());
    return 0;
  }
  const auto study = cp::run_power_study(config);
  std::cout << "power=" << num(study.power.power) << " std_error=" << num(study.power.std_error)
            << " alpha=" << cp::format_double(study.power.alpha)
            << " n_effective=" << study.power.n_effective
            << " n_untestable=" << study.distribution.n_untestable
            << " trials=" << study.distribution.n_trials << " test=" << cp::to_string(c.test.id)
            << " calibration=" << cp::to_string(c.test.calibration)
            << " mean_rate=" << num(study.ensemble_mean_rate);
  if (study.null_rate) std::cout << " null_rate=" << num(*study.null_rate);
  std::cout << " seed=" << c.seed << "\n";
  if (c.output) cp::emit_results(study, c.format, *c.output, c.metadata());
  return 0;
}

int run_sweep(const cp::RunConfig& c) {
  const auto grid = cp::sweep_grid(c.power_config(), c.cluster_axis, c.event_axis);
  std::cout << "clusters_per_century,events_per_decade,power,std_error\n";
  for (const auto& cell : grid.cells) {
    std::cout << cp::format_double(cell.clusters_per_century) << ","
              << cp::format_double(cell.events_per_decade) << ",";
    if (cell.estimate) {
      std::cout << num(cell.estimate->power) << "," << num(cell.estimate->std_error) << "\n";
    } else {
      std::cout << ",  # " << cell.error << "\n";
    }
  }
  if (c.output) cp::emit_results(grid, c.format, *c.output, c.metadata());
  return 0;
}

int run_calibrate(const cp::RunConfig& c) {
  const auto& poisson = std::get<cp::PoissonProcess>(*c.process);
  const auto cal =
      cp::build_null_calibration(c.test, poisson.params.rate, poisson.window, c.n_trials, c.seed);
  std::cout << "test=" << cp::to_string(cal.test()) << " null_rate=" << cp::format_double(poisson.params.rate)
            << " trials=" << cal.n_trials() << " testable=" << cal.statistics().size()
            << " alpha=" << cp::format_double(c.alpha)
            << " critical_value=" << cp::format_double(cal.critical_value(c.alpha)) << "\n";
  if (c.output) cp::emit_results(cal, c.format, *c.output, c.metadata(), c.alpha);
  return 0;
}

int run_ratestats(const cp::RunConfig& c) {
  const auto stats = cp::rate_statistics(*c.process, c.n_samples, c.levels, c.seed);
  std::cout << "samples=" << stats.n_samples << " mean_rate=" << num(stats.mean_rate)
            << " std_rate=" << num(stats.std_rate);
  for (const auto& [level, rate] : stats.quantiles) {
    std::cout << " q" << cp::format_double(level) << "=" << num(rate);
  }
  std::cout << "\n";
  if (c.output) cp::emit_results(stats, c.format, *c.output, c.metadata());
  return 0;
}

std::string quote(const std::string& text) {
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

int report(std::string_view kind, const std::string& message) {
  std::cerr << "error kind=" << kind << " message=" << quote(message) << "\n";
  return 1;
}

/// Reads flat `key = value` lines; keys are long flag names without dashes.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cp::Error(cp::ErrorKind::FileNotFound, "cannot open config " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = cp::detail::trim(line);
    if (view.empty() || view.front() == '#' || view.front() == ';' || view.front() == '[') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw cp::Error(cp::ErrorKind::Parse,
                      path + ": line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(cp::detail::trim(view.substr(0, eq)));
    for (auto& ch : key) {
      if (ch == '_') ch = '-';
    }
    entries.emplace_back(key, std::string(cp::detail::trim(view.substr(eq + 1))));
  }
  return entries;
}

/// Splices config-file entries in front of the command-line flags, so that
/// with last-wins parsing the command line takes precedence.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!config_path) return args;
  const auto sub_it = std::find_if(args.begin(), args.end(),
                                   [](const std::string& a) { return !a.empty() && a[0] != '-'; });
  if (sub_it == args.end()) {
    throw cp::Error(cp::ErrorKind::InvalidParameter, "--config needs a subcommand");
  }
  CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
  if (sub == nullptr) throw cp::Error(cp::ErrorKind::InvalidParameter, "unknown subcommand " + *sub_it);
  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config_file(*config_path)) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw cp::Error(cp::ErrorKind::InvalidParameter,
                      "config key '" + key + "' is not a flag of " + *sub_it);
    }
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes") injected.push_back("--" + key);
    } else {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  args.insert(sub_it + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo power of clustering tests for event catalogs", "clusterpower"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cp::kVersion));
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "flat key = value file of flags; command-line flags win");
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "emit one simulated catalog as CSV");
  add_process(simulate, f);
  add_seed(simulate, f);
  add_output(simulate, f, false);

  auto* test = app.add_subcommand("test", "test one catalog file");
  add_catalog(test, f);
  add_test(test, f);
  add_seed(test, f);
  add_output(test, f);

  auto* ingest = app.add_subcommand("ingest", "ingest a catalog with filtering, report it, and test it");
  add_catalog(ingest, f);
  add_test(ingest, f);
  add_seed(ingest, f);
  add_output(ingest, f);

  auto* power = app.add_subcommand("power", "power of a test against a simulated process");
  add_process(power, f);
  add_test(power, f);
  add_power(power, f);
  add_seed(power, f);
  add_output(power, f);
  power->add_option("--rate-quantiles", f.rate_quantiles,
                    "inter test at the ensemble mean rate and these rate quantiles, e.g. 0.7,0.9");

  auto* sweep = app.add_subcommand("sweep", "power over a clusters x events-per-decade grid");
  add_process(sweep, f);
  add_test(sweep, f);
  add_power(sweep, f);
  add_seed(sweep, f);
  add_output(sweep, f);
  sweep->add_option("--cluster-axis", f.cluster_axis, "clusters per century values")
      ->capture_default_str();
  sweep->add_option("--event-axis", f.event_axis, "in-cluster events per decade values")
      ->capture_default_str();

  auto* calibrate = app.add_subcommand("calibrate", "Monte Carlo null distribution of a test statistic");
  calibrate->add_option("--rate", f.rate, "null Poisson rate")->capture_default_str();
  calibrate->add_option("--years", f.years, "observation window in years")->capture_default_str();
  add_test(calibrate, f);
  calibrate->add_option("--trials", f.trials, "null samples")->capture_default_str();
  calibrate->add_option("--alpha", f.alpha, "level for the critical value")->capture_default_str();
  add_seed(calibrate, f);
  add_output(calibrate, f);

  auto* ratestats = app.add_subcommand("ratestats", "per-catalog mean rate statistics of a process");
  add_process(ratestats, f);
  ratestats->add_option("--samples", f.samples, "simulated catalogs")->capture_default_str();
  ratestats->add_option("--levels", f.levels, "quantile levels")->capture_default_str();
  add_seed(ratestats, f);
  add_output(ratestats, f);

  for (auto* sub : app.get_subcommands({})) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << cp::kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    report("usage", e.what());
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  } catch (const cp::Error& e) {
    return report(cp::to_string(e.kind()), e.what());
  }

  try {
    if (simulate->parsed()) return run_simulate(make_config("simulate", f, false, true));
    if (test->parsed()) return run_test(make_config("test", f, true, false), false);
    if (ingest->parsed()) return run_test(make_config("ingest", f, true, false), true);
    if (power->parsed()) {
      auto c = make_config("power", f, false, true);
      if (!f.rate_quantiles.empty()) c.command = "power --rate-quantiles " + f.rate_quantiles;
      return run_power(c, f.rate_quantiles);
    }
    if (sweep->parsed()) return run_sweep(make_config("sweep", f, false, true));
    if (calibrate->parsed()) {
      f.poisson = true;
      return run_calibrate(make_config("calibrate", f, false, true));
    }
    if (ratestats->parsed()) return run_ratestats(make_config("ratestats", f, false, true));
  } catch (const cp::Error& e) {
    std::string message = e.what();
    if (cp::is_untestable(e.kind())) message = "catalog is untestable: " + message;
    return report(cp::to_string(e.kind()), message);
  } catch (const std::exception& e) {
    return report("internal", e.what());
  }
  return report("usage", "no subcommand");
}
