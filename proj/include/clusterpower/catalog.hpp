#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "clusterpower/error.hpp"

namespace clusterpower {

/// Observation window [0, length_years).
struct SimulationWindow {
  double length_years = 110.0;

  void validate() const {
    detail::require_param(std::isfinite(length_years) && length_years > 0.0,
                          "window length must be positive");
  }

  friend bool operator==(const SimulationWindow&, const SimulationWindow&) = default;
};

/// Strictly increasing event times (decimal years) inside a window.
class EventCatalog {
 public:
  EventCatalog() = default;

  explicit EventCatalog(SimulationWindow window) : window_(window) { window_.validate(); }

  EventCatalog(std::vector<double> times, SimulationWindow window)
      : times_(std::move(times)), window_(window) {
    window_.validate();
    for (std::size_t i = 0; i < times_.size(); ++i) {
      const double t = times_[i];
      detail::require_param(std::isfinite(t) && t >= 0.0 && t < window_.length_years,
                            "event time outside the observation window");
      detail::require_param(i == 0 || times_[i - 1] < t,
                            "event times must be strictly increasing");
    }
  }

  /// Sorts the times first. Exact duplicates are rejected.
  static EventCatalog from_unsorted(std::vector<double> times, SimulationWindow window) {
    std::sort(times.begin(), times.end());
    return EventCatalog(std::move(times), window);
  }

  std::span<const double> times() const noexcept { return times_; }
  const SimulationWindow& window() const noexcept { return window_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }
  double operator[](std::size_t i) const { return times_[i]; }

  friend bool operator==(const EventCatalog&, const EventCatalog&) = default;

 private:
  std::vector<double> times_;
  SimulationWindow window_;
};

/// Events per year over the whole window; 0 for an empty catalog.
inline double mean_rate(const EventCatalog& catalog) {
  return static_cast<double>(catalog.size()) / catalog.window().length_years;
}

}  // namespace clusterpower
