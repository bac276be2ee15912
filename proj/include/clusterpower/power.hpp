#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "clusterpower/catalog.hpp"
#include "clusterpower/error.hpp"
#include "clusterpower/gof.hpp"
#include "clusterpower/process.hpp"
#include "clusterpower/random.hpp"
#include "clusterpower/stats.hpp"

namespace clusterpower {

// ---------------------------------------------------------------------------
// Parallel execution
// ---------------------------------------------------------------------------

inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(i) for i in [0, n) on up to `workers` threads (0 = all cores).
/// The first exception thrown by any call is rethrown after all threads join.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
          if (i >= n || failed.load(std::memory_order_relaxed)) return;
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

/// Which hypothesized rate test (c) uses.
struct NullRatePolicy {
  enum class Kind { LongTermMean, Fixed, Quantile };
  Kind kind = Kind::LongTermMean;
  double value = 0.0;  ///< rate for Fixed, level for Quantile

  static NullRatePolicy long_term_mean() { return {Kind::LongTermMean, 0.0}; }
  static NullRatePolicy fixed(double rate) { return {Kind::Fixed, rate}; }
  static NullRatePolicy at_quantile(double level) { return {Kind::Quantile, level}; }
};

enum class UntestablePolicy {
  /// Sparse catalogs are left out of the power denominator.
  Exclude,
  /// Sparse catalogs count as "not rejected".
  CountAsAccept,
};

struct PowerConfig {
  ProcessModel process = ClusterProcessParams{};
  TestSpec test{};
  std::size_t n_trials = 10000;
  double alpha = 0.05;
  Seed master_seed = 42;
  NullRatePolicy null_rate = NullRatePolicy::long_term_mean();
  UntestablePolicy untestable = UntestablePolicy::Exclude;
  unsigned workers = 0;

  void validate() const {
    clusterpower::validate(process);
    detail::require_param(n_trials >= 100, "power studies need >= 100 trials");
    detail::require_param(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    test.inter.validate();
    if (null_rate.kind == NullRatePolicy::Kind::Fixed) {
      detail::require_param(null_rate.value > 0.0, "fixed null rate must be positive");
    } else if (null_rate.kind == NullRatePolicy::Kind::Quantile) {
      detail::require_param(null_rate.value > 0.0 && null_rate.value < 1.0,
                            "null-rate quantile level must lie in (0, 1)");
    }
  }
};

inline constexpr std::size_t kPValueBins = 20;

/// Twenty 5%-wide bins over [0, 1]; p = 1 lands in the last bin.
inline Histogram pvalue_histogram(std::span<const double> p_values) {
  detail::require(!p_values.empty(), ErrorKind::EmptySample, "no p-values to histogram");
  auto hist = Histogram::uniform(kPValueBins, 0.0, 1.0);
  for (double p : p_values) {
    detail::require_param(p >= 0.0 && p <= 1.0, "p-values must lie in [0, 1]");
    hist.add(p);
  }
  return hist;
}

struct PValueDistribution {
  std::vector<double> p_values;  ///< testable trials, in trial order
  Histogram histogram = Histogram::uniform(kPValueBins, 0.0, 1.0);
  std::size_t n_untestable = 0;
  std::size_t n_trials = 0;

  /// Fraction of testable trials with p below the first bin edge (0.05).
  double first_bin_fraction() const { return histogram.fraction(0); }
};

struct PowerEstimate {
  double power = 0.0;
  double std_error = 0.0;
  double alpha = 0.05;
  std::size_t n_effective = 0;

  static PowerEstimate from_counts(std::size_t rejections, std::size_t n_effective, double alpha) {
    detail::require(n_effective > 0, ErrorKind::AllUntestable, "no testable samples");
    const double p = static_cast<double>(rejections) / static_cast<double>(n_effective);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n_effective)), alpha, n_effective};
  }
};

struct PowerStudy {
  PValueDistribution distribution;
  PowerEstimate power;
  std::optional<double> null_rate;  ///< test (c) only
  double ensemble_mean_rate = 0.0;
};

namespace detail {

struct Ensemble {
  std::vector<EventCatalog> catalogs;
  std::vector<double> rates;
};

inline Ensemble draw_ensemble(const ProcessModel& model, std::size_t n, Seed master,
                              unsigned workers) {
  Ensemble e;
  e.catalogs.resize(n);
  e.rates.resize(n);
  parallel_for(n, workers, [&](std::size_t i) {
    e.catalogs[i] = sample_catalog(model, derive_seed(master, Stream::Catalog, i));
    e.rates[i] = mean_rate(e.catalogs[i]);
  });
  return e;
}

inline double ensemble_mean(std::span<const double> rates) {
  double sum = 0.0;
  for (double r : rates) sum += r;
  return sum / static_cast<double>(rates.size());
}

inline std::optional<double> resolve_null_rate(const PowerConfig& config,
                                               std::span<const double> rates) {
  if (config.test.id != TestId::Chi2InterNEvent) return std::nullopt;
  switch (config.null_rate.kind) {
    case NullRatePolicy::Kind::Fixed: return config.null_rate.value;
    case NullRatePolicy::Kind::Quantile: return quantile(rates, config.null_rate.value);
    case NullRatePolicy::Kind::LongTermMean: return ensemble_mean(rates);
  }
  return std::nullopt;
}

inline PowerStudy test_ensemble(const PowerConfig& config, const Ensemble& ensemble,
                                std::optional<double> null_rate,
                                std::shared_ptr<const CountConditionalCalibration> shared) {
  detail::require(!null_rate || *null_rate > 0.0, ErrorKind::InvalidParameter,
                  "resolved null rate is zero; the ensemble has no events");
  const CatalogTester tester(config.test, window_of(config.process), null_rate,
                             config.master_seed, std::move(shared));
  const std::size_t n = ensemble.catalogs.size();
  std::vector<std::optional<double>> p(n);
  parallel_for(n, config.workers, [&](std::size_t i) {
    Xoshiro256 tie(derive_seed(config.master_seed, Stream::TieBreak, i));
    try {
      p[i] = tester(ensemble.catalogs[i], uniform01(tie)).p_value;
    } catch (const Error& e) {
      if (!is_untestable(e.kind())) throw;
    }
  });

  PowerStudy study;
  study.null_rate = null_rate;
  study.ensemble_mean_rate = ensemble_mean(ensemble.rates);
  auto& dist = study.distribution;
  dist.n_trials = n;
  std::size_t rejections = 0;
  for (const auto& value : p) {
    if (!value) {
      ++dist.n_untestable;
      continue;
    }
    dist.p_values.push_back(*value);
    dist.histogram.add(*value);
    if (*value < config.alpha) ++rejections;
  }
  const std::size_t n_effective = config.untestable == UntestablePolicy::Exclude
                                      ? dist.p_values.size()
                                      : (dist.p_values.empty() ? 0 : n);
  study.power = PowerEstimate::from_counts(rejections, n_effective, config.alpha);
  return study;
}

inline std::shared_ptr<const CountConditionalCalibration> make_shared_calibration(
    const PowerConfig& config) {
  if (config.test.id == TestId::Chi2InterNEvent ||
      config.test.calibration != Calibration::MonteCarlo) {
    return nullptr;
  }
  return std::make_shared<CountConditionalCalibration>(config.test, window_of(config.process),
                                                       config.master_seed);
}

}  // namespace detail

/// Tests n_trials independent catalogs of the process. Trial i draws its
/// catalog from derive_seed(master, Catalog, i) and its tie-break uniform from
/// derive_seed(master, TieBreak, i): results are identical for any worker count.
inline PowerStudy run_power_study(const PowerConfig& config) {
  config.validate();
  const auto ensemble =
      detail::draw_ensemble(config.process, config.n_trials, config.master_seed, config.workers);
  return detail::test_ensemble(config, ensemble, detail::resolve_null_rate(config, ensemble.rates),
                               detail::make_shared_calibration(config));
}

// ---------------------------------------------------------------------------
// Parameter sweep
// ---------------------------------------------------------------------------

struct PowerCell {
  double clusters_per_century = 0.0;
  double events_per_decade = 0.0;
  std::optional<PowerEstimate> estimate;
  std::string error;  ///< set when the cell could not be estimated
};

struct PowerGrid {
  std::vector<double> cluster_axis;
  std::vector<double> event_axis;
  std::vector<PowerCell> cells;  ///< row-major: cluster index, then event index

  const PowerCell& at(std::size_t i_cluster, std::size_t j_event) const {
    return cells.at(i_cluster * event_axis.size() + j_event);
  }
};

/// Power over a clusters/century x events/decade grid. The base process must
/// be clustered; cell (i, j) uses seed derive_seed(master, GridCell, i * ny + j).
inline PowerGrid sweep_grid(const PowerConfig& base, std::span<const double> cluster_axis,
                            std::span<const double> event_axis) {
  detail::require_param(!cluster_axis.empty() && !event_axis.empty(), "sweep axes must be non-empty");
  const auto* process = std::get_if<ClusterProcessParams>(&base.process);
  detail::require_param(process != nullptr, "sweeps need a clustered process");
  base.validate();

  PowerGrid grid{{cluster_axis.begin(), cluster_axis.end()},
                 {event_axis.begin(), event_axis.end()},
                 {}};
  // Count-conditional calibrations do not depend on the process, so every cell shares one.
  const auto shared = detail::make_shared_calibration(base);
  for (std::size_t i = 0; i < cluster_axis.size(); ++i) {
    for (std::size_t j = 0; j < event_axis.size(); ++j) {
      PowerCell cell{cluster_axis[i], event_axis[j], std::nullopt, {}};
      try {
        PowerConfig config = base;
        auto params = *process;
        params.clusters_per_century = cluster_axis[i];
        params.in_cluster_events_per_decade = event_axis[j];
        config.process = params;
        config.master_seed =
            derive_seed(base.master_seed, Stream::GridCell, i * event_axis.size() + j);
        config.validate();
        const auto ensemble = detail::draw_ensemble(config.process, config.n_trials,
                                                    config.master_seed, config.workers);
        cell.estimate = detail::test_ensemble(
                            config, ensemble, detail::resolve_null_rate(config, ensemble.rates),
                            shared)
                            .power;
      } catch (const Error& e) {
        cell.error = std::string(to_string(e.kind())) + ": " + e.what();
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Test (c) at rates drawn from the ensemble's rate distribution
// ---------------------------------------------------------------------------

struct RateStudyEntry {
  std::string label;  ///< "mean" or "q0.7" etc.
  double rate = 0.0;
  PValueDistribution distribution;
  PowerEstimate power;
};

/// Tests one ensemble against Poisson nulls at its mean rate and at each
/// requested quantile of its per-sample rates.
inline std::vector<RateStudyEntry> quantile_rate_study(const PowerConfig& base,
                                                       std::span<const double> levels) {
  for (double level : levels) {
    detail::require_param(level > 0.0 && level < 1.0, "quantile levels must lie in (0, 1)");
  }
  PowerConfig config = base;
  config.test.id = TestId::Chi2InterNEvent;
  config.validate();
  const auto ensemble =
      detail::draw_ensemble(config.process, config.n_trials, config.master_seed, config.workers);

  std::vector<std::pair<std::string, double>> targets;
  targets.emplace_back("mean", detail::ensemble_mean(ensemble.rates));
  for (double level : levels) {
    char label[32];
    std::snprintf(label, sizeof label, "q%g", level);
    targets.emplace_back(label, quantile(ensemble.rates, level));
  }
  std::vector<RateStudyEntry> out;
  for (const auto& [label, rate] : targets) {
    auto study = detail::test_ensemble(config, ensemble, rate, nullptr);
    out.push_back({label, rate, std::move(study.distribution), study.power});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Self-validation
// ---------------------------------------------------------------------------

struct UniformityResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_values = 0;
};

/// Two-sided KS test of p-values against Uniform[0, 1].
inline UniformityResult uniformity_check(std::span<const double> p_values) {
  detail::require(p_values.size() >= 100, ErrorKind::TooFewEvents,
                  "uniformity check needs at least 100 p-values");
  const double d = ks_statistic(p_values, [](double x) { return std::clamp(x, 0.0, 1.0); });
  return {d, ks_pvalue_asymptotic(d, p_values.size()), p_values.size()};
}

}  // namespace clusterpower
