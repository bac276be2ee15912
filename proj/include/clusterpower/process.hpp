#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include "clusterpower/catalog.hpp"
#include "clusterpower/error.hpp"
#include "clusterpower/random.hpp"
#include "clusterpower/stats.hpp"

namespace clusterpower {

struct PoissonParams {
  double rate = 0.12;  ///< events per year

  void validate() const {
    detail::require_param(std::isfinite(rate) && rate > 0.0, "Poisson rate must be positive");
  }
};

/// How a candidate cluster onset that falls inside an active cluster is handled.
enum class OnsetRule {
  /// The candidate is discarded (thinning).
  Reject,
  /// The candidate waits for the active cluster to end, so the two touch.
  Defer,
};

struct ClusterProcessParams {
  double clusters_per_century = 3.0;
  double in_cluster_events_per_decade = 4.0;
  double cluster_duration_years = 15.0;
  SimulationWindow window{};
  OnsetRule onset_rule = OnsetRule::Reject;

  double onset_rate() const { return clusters_per_century / 100.0; }
  double in_cluster_rate() const { return in_cluster_events_per_decade / 10.0; }

  void validate() const {
    window.validate();
    detail::require_param(std::isfinite(clusters_per_century) && clusters_per_century > 0.0,
                          "clusters per century must be positive");
    detail::require_param(
        std::isfinite(in_cluster_events_per_decade) && in_cluster_events_per_decade > 0.0,
        "in-cluster events per decade must be positive");
    detail::require_param(cluster_duration_years > 0.0 &&
                              cluster_duration_years <= window.length_years,
                          "cluster duration must be positive and fit in the window");
  }
};

struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Disjoint half-open cluster intervals in increasing order, clipped to the window.
struct ClusterLayout {
  std::vector<Interval> intervals;
  SimulationWindow window{};

  bool empty() const { return intervals.empty(); }
};

/// Homogeneous Poisson stream at `rate` on [start, end), appended to `out`.
template <class Engine>
void append_poisson_stream(Engine& engine, double rate, double start, double end,
                           std::vector<double>& out) {
  double t = start;
  for (;;) {
    t += exponential(engine, rate);
    if (!(t < end)) break;
    // Guard against a gap too small to advance t in floating point.
    if (!out.empty() && t <= out.back()) continue;
    out.push_back(t);
  }
}

inline EventCatalog sample_poisson_catalog(const PoissonParams& params,
                                           const SimulationWindow& window, Seed seed) {
  params.validate();
  window.validate();
  Xoshiro256 engine(seed);
  std::vector<double> times;
  append_poisson_stream(engine, params.rate, 0.0, window.length_years, times);
  return EventCatalog(std::move(times), window);
}

namespace detail {

template <class Engine>
ClusterLayout draw_cluster_layout(Engine& engine, const ClusterProcessParams& params) {
  const double horizon = params.window.length_years;
  const double duration = params.cluster_duration_years;
  ClusterLayout layout{{}, params.window};
  double busy_until = -1.0;
  double candidate = 0.0;
  for (;;) {
    candidate += exponential(engine, params.onset_rate());
    if (!(candidate < horizon)) break;
    double start = candidate;
    if (candidate < busy_until) {
      if (params.onset_rule == OnsetRule::Reject) continue;
      start = busy_until;
    }
    busy_until = start + duration;
    // Deferred onsets that queue past the window end are discarded.
    if (!(start < horizon)) continue;
    layout.intervals.push_back({start, std::min(start + duration, horizon)});
  }
  return layout;
}

}  // namespace detail

inline ClusterLayout sample_cluster_onsets(const ClusterProcessParams& params, Seed seed) {
  params.validate();
  Xoshiro256 engine(seed);
  return detail::draw_cluster_layout(engine, params);
}

/// Events at `rate` inside each interval of a layout and nowhere else.
template <class Engine>
EventCatalog sample_events_in_layout(Engine& engine, const ClusterLayout& layout, double rate) {
  detail::require_param(rate > 0.0, "in-cluster rate must be positive");
  std::vector<double> times;
  for (const auto& interval : layout.intervals) {
    append_poisson_stream(engine, rate, interval.start, interval.end, times);
  }
  return EventCatalog(std::move(times), layout.window);
}

inline EventCatalog sample_clustered_catalog(const ClusterProcessParams& params, Seed seed) {
  params.validate();
  Xoshiro256 engine(seed);
  const ClusterLayout layout = detail::draw_cluster_layout(engine, params);
  return sample_events_in_layout(engine, layout, params.in_cluster_rate());
}

/// Homogeneous Poisson process over a window, usable wherever a clustered process is.
struct PoissonProcess {
  PoissonParams params{};
  SimulationWindow window{};
};

using ProcessModel = std::variant<ClusterProcessParams, PoissonProcess>;

inline const SimulationWindow& window_of(const ProcessModel& model) {
  return std::visit([](const auto& m) -> const SimulationWindow& { return m.window; }, model);
}

inline void validate(const ProcessModel& model) {
  std::visit(
      [](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, PoissonProcess>) {
          m.params.validate();
          m.window.validate();
        } else {
          m.validate();
        }
      },
      model);
}

inline EventCatalog sample_catalog(const ProcessModel& model, Seed seed) {
  if (const auto* poisson = std::get_if<PoissonProcess>(&model)) {
    return sample_poisson_catalog(poisson->params, poisson->window, seed);
  }
  return sample_clustered_catalog(std::get<ClusterProcessParams>(model), seed);
}

// ---------------------------------------------------------------------------
// Ensemble rate statistics
// ---------------------------------------------------------------------------

struct RateStatistics {
  double mean_rate = 0.0;
  double std_rate = 0.0;
  std::map<double, double> quantiles;  ///< level -> events/year
  std::size_t n_samples = 0;
};

/// Mean, sample standard deviation and nearest-rank quantiles of a set of rates.
inline RateStatistics summarize_rates(std::span<const double> rates,
                                      std::span<const double> levels) {
  detail::require_param(rates.size() >= 2, "rate statistics need at least two samples");
  detail::require_param(!levels.empty(), "rate statistics need at least one level");
  for (double level : levels) {
    detail::require_param(level > 0.0 && level < 1.0, "quantile levels must lie in (0, 1)");
  }
  RateStatistics stats;
  stats.n_samples = rates.size();
  double sum = 0.0;
  for (double r : rates) sum += r;
  stats.mean_rate = sum / static_cast<double>(rates.size());
  double ss = 0.0;
  for (double r : rates) ss += (r - stats.mean_rate) * (r - stats.mean_rate);
  stats.std_rate = std::sqrt(ss / static_cast<double>(rates.size() - 1));
  std::vector<double> sorted(rates.begin(), rates.end());
  std::sort(sorted.begin(), sorted.end());
  for (double level : levels) stats.quantiles[level] = quantile(sorted, level);
  return stats;
}

/// Rate statistics over n_samples independent catalogs of a process.
/// Sample i uses derive_seed(seed, Stream::Catalog, i), the same stream the
/// power engine uses, so both see identical ensembles for a given seed.
inline RateStatistics rate_statistics(const ProcessModel& model, std::size_t n_samples,
                                      std::span<const double> levels, Seed seed) {
  validate(model);
  detail::require_param(n_samples >= 2, "rate statistics need at least two samples");
  detail::require_param(!levels.empty(), "rate statistics need at least one level");
  for (double level : levels) {
    detail::require_param(level > 0.0 && level < 1.0, "quantile levels must lie in (0, 1)");
  }
  std::vector<double> rates(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    rates[i] = mean_rate(sample_catalog(model, derive_seed(seed, Stream::Catalog, i)));
  }
  return summarize_rates(rates, levels);
}

}  // namespace clusterpower
