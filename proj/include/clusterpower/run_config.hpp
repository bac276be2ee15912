#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clusterpower/gof.hpp"
#include "clusterpower/io.hpp"
#include "clusterpower/power.hpp"
#include "clusterpower/process.hpp"

namespace clusterpower {

inline constexpr std::string_view to_string(OnsetRule rule) {
  return rule == OnsetRule::Reject ? "reject" : "defer";
}

inline constexpr std::string_view to_string(KsAlternative alternative) {
  return alternative == KsAlternative::TwoSided ? "two-sided" : "short-gaps";
}

inline constexpr std::string_view to_string(GapOverlap overlap) {
  return overlap == GapOverlap::NonOverlapping ? "non-overlapping" : "sliding";
}

inline constexpr std::string_view to_string(UntestablePolicy policy) {
  return policy == UntestablePolicy::Exclude ? "exclude" : "accept";
}

inline constexpr std::string_view to_string(OutputFormat format) {
  return format == OutputFormat::Csv ? "csv" : "json";
}

/// Everything one CLI invocation does, independent of how it was spelled.
struct RunConfig {
  std::string command;

  std::optional<ProcessModel> process;
  std::optional<std::filesystem::path> catalog_path;
  IngestOptions ingest{};

  TestSpec test{};
  double alpha = 0.05;
  NullRatePolicy null_rate = NullRatePolicy::long_term_mean();
  UntestablePolicy untestable = UntestablePolicy::Exclude;
  std::size_t n_trials = 10000;
  Seed seed = 42;

  std::vector<double> cluster_axis{2.0, 3.0, 4.0, 5.0};
  std::vector<double> event_axis{2.0, 3.0, 4.0, 5.0};
  std::vector<double> levels{0.7, 0.9};
  std::size_t n_samples = 10000;

  std::optional<std::filesystem::path> output;
  OutputFormat format = OutputFormat::Csv;
  unsigned workers = 0;

  void validate() const {
    detail::require_param(process.has_value() != catalog_path.has_value(),
                          "a run needs exactly one input: a process or a catalog path");
    if (catalog_path) detail::require_param(!catalog_path->empty(), "catalog path is empty");
    if (output) {
      detail::require_param(!output->empty() && output->has_filename(),
                            "output path must name a file");
    }
    if (process) clusterpower::validate(*process);
  }

  PowerConfig power_config() const {
    detail::require_param(process.has_value(), "power runs need a simulated process");
    PowerConfig config;
    config.process = *process;
    config.test = test;
    config.n_trials = n_trials;
    config.alpha = alpha;
    config.master_seed = seed;
    config.null_rate = null_rate;
    config.untestable = untestable;
    config.workers = workers;
    return config;
  }

  /// Stable text of every field that affects results. Workers, output path
  /// and format are left out: they never change the numbers.
  std::string canonical() const {
    std::string out;
    auto put = [&out](std::string_view key, const std::string& value) {
      out.append(key).append("=").append(value).append("\n");
    };
    auto num = [](double v) { return format_double(v); };
    auto list = [&num](const std::vector<double>& values) {
      std::string s;
      for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + num(values[i]);
      return s;
    };
    put("command", command);
    if (process) {
      if (const auto* p = std::get_if<ClusterProcessParams>(&*process)) {
        put("process", "cluster");
        put("clusters_per_century", num(p->clusters_per_century));
        put("events_per_decade", num(p->in_cluster_events_per_decade));
        put("cluster_duration", num(p->cluster_duration_years));
        put("onset_rule", std::string(to_string(p->onset_rule)));
      } else {
        put("process", "poisson");
        put("rate", num(std::get<PoissonProcess>(*process).params.rate));
      }
      put("years", num(window_of(*process).length_years));
    }
    if (catalog_path) {
      put("catalog", catalog_path->generic_string());
      put("time_column", ingest.time_column);
      put("magnitude_column", ingest.magnitude_column.value_or(""));
      put("cutoff", ingest.cutoff ? num(*ingest.cutoff) : "");
      put("window_start", ingest.window_start ? num(*ingest.window_start) : "");
      put("window_end", ingest.window_end ? num(*ingest.window_end) : "");
    }
    put("test", std::string(to_string(test.id)));
    put("calibration", std::string(to_string(test.calibration)));
    put("calibration_trials", std::to_string(test.calibration_trials));
    put("ks_alternative", std::string(to_string(test.ks.alternative)));
    put("ks_min_events", std::to_string(test.ks.min_events));
    put("bin_width", num(test.counts.bin_width_years));
    put("min_expected", num(test.counts.min_expected));
    put("counts_min_events", std::to_string(test.counts.min_events));
    put("gap_order", std::to_string(test.inter.n));
    put("overlap", std::string(to_string(test.inter.overlap)));
    put("bins", std::to_string(test.inter.bins));
    put("alpha", num(alpha));
    switch (null_rate.kind) {
      case NullRatePolicy::Kind::LongTermMean: put("null_rate", "mean"); break;
      case NullRatePolicy::Kind::Fixed: put("null_rate", num(null_rate.value)); break;
      case NullRatePolicy::Kind::Quantile: put("null_rate", "q" + num(null_rate.value)); break;
    }
    put("untestable", std::string(to_string(untestable)));
    put("trials", std::to_string(n_trials));
    put("seed", std::to_string(seed));
    put("cluster_axis", list(cluster_axis));
    put("event_axis", list(event_axis));
    put("levels", list(levels));
    put("samples", std::to_string(n_samples));
    return out;
  }

  std::string hash() const { return fnv1a_hex(canonical()); }

  ResultMetadata metadata() const { return {command, seed, hash(), std::string(kVersion)}; }
};

}  // namespace clusterpower
