#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "clusterpower/catalog.hpp"
#include "clusterpower/error.hpp"
#include "clusterpower/process.hpp"
#include "clusterpower/random.hpp"
#include "clusterpower/stats.hpp"

namespace clusterpower {

enum class TestId {
  KsInterevent,    ///< (a) KS of inter-event times against a fitted exponential
  Chi2Counts,      ///< (b) Pearson chi-square of per-bin counts against a fitted Poisson
  Chi2InterNEvent, ///< (c) Pearson chi-square of inter-n-event times at a known rate
};

inline constexpr std::string_view to_string(TestId id) {
  switch (id) {
    case TestId::KsInterevent: return "ks";
    case TestId::Chi2Counts: return "counts";
    case TestId::Chi2InterNEvent: return "inter";
  }
  return "unknown";
}

enum class Calibration { Analytic, MonteCarlo };

inline constexpr std::string_view to_string(Calibration c) {
  return c == Calibration::Analytic ? "analytic" : "monte-carlo";
}

enum class GapOverlap { NonOverlapping, Sliding };

struct KsTestOptions {
  KsAlternative alternative = KsAlternative::TwoSided;
  std::size_t min_events = 3;
};

struct CountsTestOptions {
  double bin_width_years = 1.0;
  double min_expected = 5.0;
  std::size_t min_events = 3;
};

struct InterEventConfig {
  int n = 3;
  GapOverlap overlap = GapOverlap::NonOverlapping;
  int bins = 0;  ///< 0 selects the bin count automatically

  void validate() const {
    detail::require_param(n >= 1, "gap order n must be >= 1");
    detail::require_param(bins == 0 || bins >= 2, "explicit bin count must be >= 2");
  }
};

struct TestOutcome {
  TestId test = TestId::KsInterevent;
  double statistic = 0.0;
  double p_value = 1.0;
  /// Hypothesized rate; empty when the rate was estimated from the catalog.
  std::optional<double> null_rate;
  /// Rate the null distribution was evaluated at.
  double fitted_rate = 0.0;
  std::size_t n_events = 0;
  Calibration calibration = Calibration::Analytic;
  /// Chi-square degrees of freedom; 0 for KS.
  int dof = 0;
};

// ---------------------------------------------------------------------------
// Gap extraction
// ---------------------------------------------------------------------------

inline std::vector<double> inter_event_times(const EventCatalog& catalog) {
  detail::require(catalog.size() >= 2, ErrorKind::TooFewEvents,
                  "inter-event times need at least 2 events");
  const auto t = catalog.times();
  std::vector<double> gaps(t.size() - 1);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) gaps[i] = t[i + 1] - t[i];
  return gaps;
}

/// Waiting times spanning n events. Non-overlapping: t[kn+n] - t[kn]; sliding: t[i+n] - t[i].
inline std::vector<double> inter_n_event_times(const EventCatalog& catalog,
                                               const InterEventConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.n);
  detail::require(catalog.size() >= n + 1, ErrorKind::TooFewEvents,
                  "inter-n-event times need at least n+1 events");
  const auto t = catalog.times();
  std::vector<double> gaps;
  const std::size_t step = config.overlap == GapOverlap::Sliding ? 1 : n;
  for (std::size_t i = 0; i + n < t.size(); i += step) gaps.push_back(t[i + n] - t[i]);
  return gaps;
}

// ---------------------------------------------------------------------------
// Test statistics
// ---------------------------------------------------------------------------

struct KsInterevent {
  double statistic = 0.0;
  double fitted_rate = 0.0;
  std::size_t n_gaps = 0;
};

/// KS distance between the gaps and an exponential at their own MLE rate.
inline KsInterevent ks_interevent_statistic(const EventCatalog& catalog,
                                            const KsTestOptions& options) {
  detail::require(catalog.size() >= std::max<std::size_t>(options.min_events, 2),
                  ErrorKind::TooFewEvents, "too few events for the KS inter-event test");
  const auto gaps = inter_event_times(catalog);
  const double rate = mle_rate(gaps);
  const double d =
      ks_statistic(gaps, [rate](double t) { return -std::expm1(-rate * t); }, options.alternative);
  return {d, rate, gaps.size()};
}

struct CountCategories {
  /// Category i covers counts [lower[i], lower[i+1]); the last is an open tail.
  std::vector<std::int64_t> lower;
  std::vector<double> expected;
};

/// Count categories for n_bins Poisson(mean) counts, tails merged until every
/// expected frequency reaches min_expected. Depends only on the null, never on
/// the observed counts.
inline CountCategories poisson_count_categories(double mean, std::size_t n_bins,
                                                double min_expected) {
  detail::require_param(mean > 0.0, "Poisson mean must be positive");
  const auto top = static_cast<std::int64_t>(std::ceil(mean + 10.0 * std::sqrt(mean) + 10.0));
  const double nb = static_cast<double>(n_bins);
  CountCategories cats;
  for (std::int64_t k = 0; k < top; ++k) {
    cats.lower.push_back(k);
    cats.expected.push_back(nb * poisson_pmf(mean, k));
  }
  cats.lower.push_back(top);
  cats.expected.push_back(nb * poisson_upper_tail(mean, top));

  // Greedy left-to-right pooling; a short final pool joins its neighbour.
  CountCategories merged;
  double pool = 0.0;
  std::int64_t pool_lower = cats.lower.front();
  for (std::size_t i = 0; i < cats.expected.size(); ++i) {
    if (pool == 0.0) pool_lower = cats.lower[i];
    pool += cats.expected[i];
    if (pool >= min_expected) {
      merged.lower.push_back(pool_lower);
      merged.expected.push_back(pool);
      pool = 0.0;
    }
  }
  if (pool > 0.0) {
    if (merged.expected.empty()) {
      merged.lower.push_back(pool_lower);
      merged.expected.push_back(pool);
    } else {
      merged.expected.back() += pool;
    }
  }
  return merged;
}

struct Chi2Counts {
  double statistic = 0.0;
  double fitted_rate = 0.0;
  int categories = 0;
  int dof = 0;  ///< categories - 2; may be < 1 for sparse catalogs
};

inline std::size_t count_bins(const SimulationWindow& window, double bin_width) {
  detail::require_param(bin_width > 0.0, "bin width must be positive");
  const double ratio = window.length_years / bin_width;
  const auto n_bins = static_cast<std::size_t>(std::llround(ratio));
  detail::require_param(std::abs(ratio - static_cast<double>(n_bins)) <= 1e-9 * ratio,
                        "bin width must divide the window length");
  detail::require_param(n_bins >= 10, "window must hold at least 10 bins");
  return n_bins;
}

/// Pearson statistic of per-bin event counts against Poisson(rate_hat * width),
/// rate_hat = events / window.
inline Chi2Counts chi2_counts_statistic(const EventCatalog& catalog,
                                        const CountsTestOptions& options) {
  const std::size_t n_bins = count_bins(catalog.window(), options.bin_width_years);
  detail::require(!catalog.empty(), ErrorKind::DegenerateCategories,
                  "an empty catalog has a single count category");
  detail::require(catalog.size() >= options.min_events, ErrorKind::TooFewEvents,
                  "too few events for the count test");

  std::vector<std::int64_t> per_bin(n_bins, 0);
  for (double t : catalog.times()) {
    const auto bin = static_cast<std::size_t>(t / options.bin_width_years);
    ++per_bin[std::min(bin, n_bins - 1)];
  }
  const double rate = mean_rate(catalog);
  const auto cats =
      poisson_count_categories(rate * options.bin_width_years, n_bins, options.min_expected);
  detail::require(cats.expected.size() >= 2, ErrorKind::DegenerateCategories,
                  "fewer than 2 count categories after merging");

  std::vector<double> observed(cats.expected.size(), 0.0);
  for (std::int64_t c : per_bin) {
    const auto it = std::upper_bound(cats.lower.begin(), cats.lower.end(), c);
    ++observed[static_cast<std::size_t>(it - cats.lower.begin()) - 1];
  }
  Chi2Counts result;
  result.statistic = chi2_statistic(observed, cats.expected);
  result.fitted_rate = rate;
  result.categories = static_cast<int>(cats.expected.size());
  result.dof = result.categories - 2;
  return result;
}

/// Equal-probability bins of the Erlang(n, null_rate) null.
struct InterNEventBinning {
  int bins = 2;
  std::vector<double> interior_edges;  ///< bins - 1 increasing edges
};

/// Expected number of gaps a testable Poisson(null_rate) catalog yields.
inline double expected_null_gaps(const InterEventConfig& config, double null_rate,
                                 const SimulationWindow& window) {
  const double mean = null_rate * window.length_years;
  const auto n = static_cast<std::int64_t>(config.n);
  const auto top = static_cast<std::int64_t>(std::ceil(mean + 12.0 * std::sqrt(mean) + 20.0));
  double mass = 0.0;
  double gaps = 0.0;
  for (std::int64_t k = n + 1; k <= top; ++k) {
    const double p = poisson_pmf(mean, k);
    const auto m = config.overlap == GapOverlap::Sliding ? k - n : (k - 1) / n;
    mass += p;
    gaps += p * static_cast<double>(m);
  }
  return mass > 0.0 ? gaps / mass : 0.0;
}

inline InterNEventBinning inter_n_event_binning(const InterEventConfig& config, double null_rate,
                                                const SimulationWindow& window) {
  config.validate();
  detail::require_param(null_rate > 0.0, "null rate must be positive");
  window.validate();
  InterNEventBinning binning;
  binning.bins = config.bins > 0
                     ? config.bins
                     : std::max(2, static_cast<int>(
                                       std::floor(expected_null_gaps(config, null_rate, window) / 5.0)));
  for (int i = 1; i < binning.bins; ++i) {
    binning.interior_edges.push_back(
        erlang_quantile(config.n, null_rate, static_cast<double>(i) / binning.bins));
  }
  return binning;
}

inline double chi2_inter_n_event_statistic(const EventCatalog& catalog,
                                           const InterEventConfig& config,
                                           const InterNEventBinning& binning) {
  const auto gaps = inter_n_event_times(catalog, config);
  std::vector<double> observed(static_cast<std::size_t>(binning.bins), 0.0);
  for (double g : gaps) {
    const auto it =
        std::upper_bound(binning.interior_edges.begin(), binning.interior_edges.end(), g);
    ++observed[static_cast<std::size_t>(it - binning.interior_edges.begin())];
  }
  const std::vector<double> expected(observed.size(),
                                     static_cast<double>(gaps.size()) / binning.bins);
  return chi2_statistic(observed, expected);
}

// ---------------------------------------------------------------------------
// Monte Carlo null calibration
// ---------------------------------------------------------------------------

/// Empirical upper tail of a test statistic under simulated null catalogs.
/// Immutable after construction.
class NullCalibration {
 public:
  NullCalibration(TestId test, std::optional<double> null_rate, SimulationWindow window,
                  std::size_t n_trials, std::vector<double> statistics)
      : test_(test),
        null_rate_(null_rate),
        window_(window),
        n_trials_(n_trials),
        sorted_(std::move(statistics)) {
    detail::require(!sorted_.empty(), ErrorKind::AllUntestable,
                    "no testable null samples to calibrate against");
    std::sort(sorted_.begin(), sorted_.end());
  }

  /// (1 + #{null statistics >= s}) / (n + 1).
  double pvalue(double s) const {
    const auto [greater, equal] = rank(s);
    return static_cast<double>(1 + greater + equal) / static_cast<double>(sorted_.size() + 1);
  }

  /// Ties with null statistics are broken by u ~ Uniform[0,1), which makes the
  /// p-value of a discrete statistic exactly uniform under the null.
  double randomized_pvalue(double s, double u) const {
    const auto [greater, equal] = rank(s);
    return (static_cast<double>(greater) + u * static_cast<double>(equal + 1)) /
           static_cast<double>(sorted_.size() + 1);
  }

  /// Smallest null statistic whose conservative p-value is <= alpha;
  /// infinity when the calibration is too small to reach alpha.
  double critical_value(double alpha) const {
    const auto n = static_cast<double>(sorted_.size());
    const double max_count = std::floor(alpha * (n + 1.0) - 1.0);
    if (max_count < 1.0) return std::numeric_limits<double>::infinity();
    const auto k = static_cast<std::size_t>(std::min(max_count, n));
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), sorted_[sorted_.size() - k]);
    if (static_cast<std::size_t>(sorted_.end() - it) > k) it = std::upper_bound(it, sorted_.end(), *it);
    return it == sorted_.end() ? std::numeric_limits<double>::infinity() : *it;
  }

  TestId test() const noexcept { return test_; }
  std::optional<double> null_rate() const noexcept { return null_rate_; }
  const SimulationWindow& window() const noexcept { return window_; }
  std::size_t n_trials() const noexcept { return n_trials_; }
  std::span<const double> statistics() const noexcept { return sorted_; }

 private:
  std::pair<std::size_t, std::size_t> rank(double s) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(s));
    const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), s - tol);
    const auto hi = std::upper_bound(lo, sorted_.end(), s + tol);
    return {static_cast<std::size_t>(sorted_.end() - hi), static_cast<std::size_t>(hi - lo)};
  }

  TestId test_;
  std::optional<double> null_rate_;
  SimulationWindow window_;
  std::size_t n_trials_;
  std::vector<double> sorted_;
};

/// A test together with its options and p-value policy.
struct TestSpec {
  TestId id = TestId::KsInterevent;
  Calibration calibration = Calibration::MonteCarlo;
  KsTestOptions ks{};
  CountsTestOptions counts{};
  InterEventConfig inter{};
  std::size_t calibration_trials = 10000;
};

inline constexpr std::size_t kMinCalibrationTrials = 1000;

/// Statistic of `catalog` under `spec`, or nothing if the catalog is untestable.
/// Test (c) needs its precomputed binning.
inline std::optional<double> catalog_statistic(const TestSpec& spec, const EventCatalog& catalog,
                                               const InterNEventBinning* binning = nullptr) {
  try {
    switch (spec.id) {
      case TestId::KsInterevent: return ks_interevent_statistic(catalog, spec.ks).statistic;
      case TestId::Chi2Counts: return chi2_counts_statistic(catalog, spec.counts).statistic;
      case TestId::Chi2InterNEvent:
        detail::require_param(binning != nullptr, "test (c) statistic needs a binning");
        if (catalog.size() < static_cast<std::size_t>(spec.inter.n) + 1) return std::nullopt;
        return chi2_inter_n_event_statistic(catalog, spec.inter, *binning);
    }
  } catch (const Error& e) {
    if (is_untestable(e.kind())) return std::nullopt;
    throw;
  }
  return std::nullopt;
}

/// Calibration from n_trials Poisson(null_rate) catalogs over `window`, with
/// the same estimation policy the test applies to real catalogs. Null samples
/// too sparse to test are skipped.
inline NullCalibration build_null_calibration(const TestSpec& spec, double null_rate,
                                              const SimulationWindow& window,
                                              std::size_t n_trials, Seed seed) {
  detail::require_param(null_rate > 0.0, "null rate must be positive");
  detail::require_param(n_trials >= kMinCalibrationTrials, "calibration needs >= 1000 trials");
  window.validate();
  std::optional<InterNEventBinning> binning;
  if (spec.id == TestId::Chi2InterNEvent) {
    binning = inter_n_event_binning(spec.inter, null_rate, window);
  }
  std::vector<double> stats;
  stats.reserve(n_trials);
  const PoissonParams params{null_rate};
  for (std::size_t i = 0; i < n_trials; ++i) {
    const auto catalog =
        sample_poisson_catalog(params, window, derive_seed(seed, Stream::NullCalibration, i));
    if (auto s = catalog_statistic(spec, catalog, binning ? &*binning : nullptr)) {
      stats.push_back(*s);
    }
  }
  return NullCalibration(spec.id, null_rate, window, n_trials, std::move(stats));
}

/// N uniform order statistics on the window: a Poisson catalog conditioned on N events.
template <class Engine>
EventCatalog uniform_catalog(Engine& engine, std::size_t n_events, const SimulationWindow& window) {
  std::vector<double> times(n_events);
  for (;;) {
    for (auto& t : times) t = uniform01(engine) * window.length_years;
    std::sort(times.begin(), times.end());
    if (std::adjacent_find(times.begin(), times.end()) == times.end()) break;
  }
  return EventCatalog(std::move(times), window);
}

/// Null calibrations conditioned on the catalog's event count. Given N, the
/// KS and count statistics (rate re-estimated per catalog) have a rate-free
/// null distribution, so this is an exact estimated-parameter correction.
/// Tables are built on first use; each depends only on (seed, N), so results
/// do not depend on which thread asks first.
class CountConditionalCalibration {
 public:
  CountConditionalCalibration(TestSpec spec, SimulationWindow window, Seed seed)
      : spec_(std::move(spec)), window_(window), seed_(seed) {
    detail::require_param(spec_.id != TestId::Chi2InterNEvent,
                          "test (c) uses a fixed null rate, not count conditioning");
    detail::require_param(spec_.calibration_trials >= kMinCalibrationTrials,
                          "calibration needs >= 1000 trials");
    window_.validate();
  }

  const NullCalibration& for_count(std::size_t n_events) const {
    std::lock_guard lock(mutex_);
    auto it = tables_.find(n_events);
    if (it == tables_.end()) it = tables_.emplace(n_events, build(n_events)).first;
    return *it->second;
  }

  const TestSpec& spec() const noexcept { return spec_; }
  const SimulationWindow& window() const noexcept { return window_; }

 private:
  std::unique_ptr<NullCalibration> build(std::size_t n_events) const {
    Xoshiro256 engine(derive_seed(seed_, Stream::ConditionalCalibration, n_events));
    std::vector<double> stats;
    stats.reserve(spec_.calibration_trials);
    for (std::size_t i = 0; i < spec_.calibration_trials; ++i) {
      if (auto s = catalog_statistic(spec_, uniform_catalog(engine, n_events, window_))) {
        stats.push_back(*s);
      }
    }
    return std::make_unique<NullCalibration>(spec_.id, std::nullopt, window_,
                                             spec_.calibration_trials, std::move(stats));
  }

  TestSpec spec_;
  SimulationWindow window_;
  Seed seed_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::unique_ptr<NullCalibration>> tables_;
};

namespace detail {

inline double calibrated(const NullCalibration& calibration, double statistic,
                         std::optional<double> tie_uniform) {
  return tie_uniform ? calibration.randomized_pvalue(statistic, *tie_uniform)
                     : calibration.pvalue(statistic);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The three tests
// ---------------------------------------------------------------------------

/// Test (a), asymptotic Kolmogorov p-value. Ignores that the rate was fitted.
inline TestOutcome test_ks_interevent(const EventCatalog& catalog, const KsTestOptions& options) {
  const auto ks = ks_interevent_statistic(catalog, options);
  return {TestId::KsInterevent,
          ks.statistic,
          ks_pvalue_asymptotic(ks.statistic, ks.n_gaps, options.alternative),
          std::nullopt,
          ks.fitted_rate,
          catalog.size(),
          Calibration::Analytic,
          0};
}

/// Test (a) with its p-value from a count-conditional Monte Carlo null.
inline TestOutcome test_ks_interevent(const EventCatalog& catalog, const KsTestOptions& options,
                                      const CountConditionalCalibration& calibration,
                                      std::optional<double> tie_uniform = std::nullopt) {
  detail::require_param(calibration.spec().id == TestId::KsInterevent,
                        "calibration belongs to another test");
  const auto ks = ks_interevent_statistic(catalog, options);
  const auto& table = calibration.for_count(catalog.size());
  return {TestId::KsInterevent,
          ks.statistic,
          detail::calibrated(table, ks.statistic, tie_uniform),
          std::nullopt,
          ks.fitted_rate,
          catalog.size(),
          Calibration::MonteCarlo,
          0};
}

/// Test (b) with the asymptotic chi-square p-value (dof = categories - 2).
inline TestOutcome test_chi2_counts(const EventCatalog& catalog, const CountsTestOptions& options) {
  const auto chi = chi2_counts_statistic(catalog, options);
  detail::require(chi.dof >= 1, ErrorKind::DegenerateCategories,
                  "too few count categories for an asymptotic p-value");
  return {TestId::Chi2Counts,
          chi.statistic,
          chi2_pvalue(chi.statistic, chi.dof),
          std::nullopt,
          chi.fitted_rate,
          catalog.size(),
          Calibration::Analytic,
          chi.dof};
}

inline TestOutcome test_chi2_counts(const EventCatalog& catalog, const CountsTestOptions& options,
                                    const CountConditionalCalibration& calibration,
                                    std::optional<double> tie_uniform = std::nullopt) {
  detail::require_param(calibration.spec().id == TestId::Chi2Counts,
                        "calibration belongs to another test");
  const auto chi = chi2_counts_statistic(catalog, options);
  const auto& table = calibration.for_count(catalog.size());
  return {TestId::Chi2Counts,
          chi.statistic,
          detail::calibrated(table, chi.statistic, tie_uniform),
          std::nullopt,
          chi.fitted_rate,
          catalog.size(),
          Calibration::MonteCarlo,
          chi.dof};
}

/// Test (c) with the asymptotic chi-square p-value (dof = bins - 1).
inline TestOutcome test_chi2_inter_n_event(const EventCatalog& catalog,
                                           const InterEventConfig& config, double null_rate) {
  detail::require_param(null_rate > 0.0, "null rate must be positive");
  const auto binning = inter_n_event_binning(config, null_rate, catalog.window());
  const double stat = chi2_inter_n_event_statistic(catalog, config, binning);
  return {TestId::Chi2InterNEvent,
          stat,
          chi2_pvalue(stat, binning.bins - 1),
          null_rate,
          null_rate,
          catalog.size(),
          Calibration::Analytic,
          binning.bins - 1};
}

/// Test (c) against a Monte Carlo null built at the same rate and window.
inline TestOutcome test_chi2_inter_n_event(const EventCatalog& catalog,
                                           const InterEventConfig& config, double null_rate,
                                           const NullCalibration& calibration,
                                           std::optional<double> tie_uniform = std::nullopt) {
  detail::require_param(null_rate > 0.0, "null rate must be positive");
  detail::require_param(calibration.test() == TestId::Chi2InterNEvent &&
                            calibration.null_rate() == null_rate &&
                            calibration.window() == catalog.window(),
                        "calibration does not match the test's null");
  const auto binning = inter_n_event_binning(config, null_rate, catalog.window());
  const double stat = chi2_inter_n_event_statistic(catalog, config, binning);
  return {TestId::Chi2InterNEvent,
          stat,
          detail::calibrated(calibration, stat, tie_uniform),
          null_rate,
          null_rate,
          catalog.size(),
          Calibration::MonteCarlo,
          binning.bins - 1};
}

// ---------------------------------------------------------------------------
// Prepared tester
// ---------------------------------------------------------------------------

/// A TestSpec bound to a window (and, for test (c), a null rate) with its
/// calibration prepared once. Safe to share across threads.
class CatalogTester {
 public:
  CatalogTester(TestSpec spec, SimulationWindow window, std::optional<double> null_rate,
                Seed calibration_seed,
                std::shared_ptr<const CountConditionalCalibration> shared = nullptr)
      : spec_(std::move(spec)), window_(window), null_rate_(null_rate) {
    window_.validate();
    spec_.inter.validate();
    if (spec_.id == TestId::Chi2InterNEvent) {
      detail::require_param(null_rate_.has_value() && *null_rate_ > 0.0,
                            "test (c) needs a positive null rate");
      binning_ = inter_n_event_binning(spec_.inter, *null_rate_, window_);
      if (spec_.calibration == Calibration::MonteCarlo) {
        pooled_ = std::make_shared<NullCalibration>(build_null_calibration(
            spec_, *null_rate_, window_, spec_.calibration_trials,
            derive_seed(calibration_seed, Stream::NullCalibration,
                        std::bit_cast<std::uint64_t>(*null_rate_))));
      }
    } else if (spec_.calibration == Calibration::MonteCarlo) {
      conditional_ = shared ? std::move(shared)
                            : std::make_shared<CountConditionalCalibration>(spec_, window_,
                                                                            calibration_seed);
    }
  }

  /// Throws an untestable Error (see is_untestable) for catalogs too sparse to test.
  TestOutcome operator()(const EventCatalog& catalog,
                         std::optional<double> tie_uniform = std::nullopt) const {
    detail::require_param(catalog.window() == window_, "catalog window differs from the tester's");
    switch (spec_.id) {
      case TestId::KsInterevent:
        return conditional_ ? test_ks_interevent(catalog, spec_.ks, *conditional_, tie_uniform)
                            : test_ks_interevent(catalog, spec_.ks);
      case TestId::Chi2Counts:
        return conditional_ ? test_chi2_counts(catalog, spec_.counts, *conditional_, tie_uniform)
                            : test_chi2_counts(catalog, spec_.counts);
      case TestId::Chi2InterNEvent: {
        const double stat = chi2_inter_n_event_statistic(catalog, spec_.inter, *binning_);
        const int dof = binning_->bins - 1;
        const double p = pooled_ ? detail::calibrated(*pooled_, stat, tie_uniform)
                                 : chi2_pvalue(stat, dof);
        return {TestId::Chi2InterNEvent,
                stat,
                p,
                null_rate_,
                *null_rate_,
                catalog.size(),
                spec_.calibration,
                dof};
      }
    }
    throw Error(ErrorKind::InvalidParameter, "unknown test");
  }

  const TestSpec& spec() const noexcept { return spec_; }
  std::optional<double> null_rate() const noexcept { return null_rate_; }
  const std::optional<InterNEventBinning>& binning() const noexcept { return binning_; }

 private:
  TestSpec spec_;
  SimulationWindow window_;
  std::optional<double> null_rate_;
  std::optional<InterNEventBinning> binning_;
  std::shared_ptr<const NullCalibration> pooled_;
  std::shared_ptr<const CountConditionalCalibration> conditional_;
};

}  // namespace clusterpower
