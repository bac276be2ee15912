#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "clusterpower/error.hpp"

namespace clusterpower {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kGammaEpsilon = 1e-16;
inline constexpr int kGammaMaxIterations = 10000;

// Lower regularized gamma P(a, x) by its power series; converges for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kGammaMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEpsilon) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a, x) by Lentz's continued fraction; x >= a + 1.
inline double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEpsilon;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEpsilon) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double regularized_gamma_p(double a, double x) {
  detail::require_param(a > 0.0 && x >= 0.0, "regularized gamma needs a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return std::clamp(detail::gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(1.0 - detail::gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), without cancellation.
inline double regularized_gamma_q(double a, double x) {
  detail::require_param(a > 0.0 && x >= 0.0, "regularized gamma needs a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - detail::gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(detail::gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Reference distributions
// ---------------------------------------------------------------------------

/// Exponential CDF 1 - exp(-rate t).
inline double exponential_cdf(double rate, double t) {
  detail::require_param(rate > 0.0, "rate must be positive");
  detail::require_param(t >= 0.0, "time must be non-negative");
  return -std::expm1(-rate * t);
}

/// Survival exp(-rate t): the probability of no event within t years.
inline double exponential_survival(double rate, double t) {
  detail::require_param(rate > 0.0, "rate must be positive");
  detail::require_param(t >= 0.0, "time must be non-negative");
  return std::exp(-rate * t);
}

/// CDF of the waiting time spanning `shape` events of a Poisson process:
/// 1 - sum_{k<shape} e^{-rate t} (rate t)^k / k!.
inline double erlang_cdf(int shape, double rate, double t) {
  detail::require_param(shape >= 1, "Erlang shape must be >= 1");
  detail::require_param(rate > 0.0, "rate must be positive");
  detail::require_param(t >= 0.0, "time must be non-negative");
  if (shape == 1) return exponential_cdf(rate, t);
  return regularized_gamma_p(static_cast<double>(shape), rate * t);
}

/// Inverse of erlang_cdf for probability in (0, 1).
inline double erlang_quantile(int shape, double rate, double probability) {
  detail::require_param(shape >= 1, "Erlang shape must be >= 1");
  detail::require_param(rate > 0.0, "rate must be positive");
  detail::require_param(probability > 0.0 && probability < 1.0,
                        "probability must lie in (0, 1)");
  if (shape == 1) return -std::log1p(-probability) / rate;
  // Bracket in units of 1/rate, then bisect to machine precision.
  double lo = 0.0;
  double hi = static_cast<double>(shape);
  while (regularized_gamma_p(shape, hi) < probability) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_gamma_p(shape, mid) < probability) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi) / rate;
}

/// Poisson probability mass, evaluated in log space.
inline double poisson_pmf(double mean, std::int64_t k) {
  detail::require_param(mean > 0.0, "Poisson mean must be positive");
  detail::require_param(k >= 0, "Poisson count must be non-negative");
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
}

/// P(X >= k) for X ~ Poisson(mean).
inline double poisson_upper_tail(double mean, std::int64_t k) {
  detail::require_param(mean > 0.0, "Poisson mean must be positive");
  if (k <= 0) return 1.0;
  return regularized_gamma_p(static_cast<double>(k), mean);
}

// ---------------------------------------------------------------------------
// Empirical distributions
// ---------------------------------------------------------------------------

/// Right-continuous empirical CDF.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::span<const double> sample) : sorted_(sample.begin(), sample.end()) {
    detail::require(!sorted_.empty(), ErrorKind::EmptySample, "empirical CDF of an empty sample");
    std::sort(sorted_.begin(), sorted_.end());
  }

  double operator()(double x) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
  }

  std::span<const double> sorted() const noexcept { return sorted_; }
  std::size_t size() const noexcept { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
};

/// Fixed-edge histogram. Bins are [e_i, e_{i+1}); the last bin is closed on the right.
class Histogram {
 public:
  explicit Histogram(std::vector<double> edges) : edges_(std::move(edges)) {
    detail::require_param(edges_.size() >= 2, "histogram needs at least one bin");
    for (std::size_t i = 1; i < edges_.size(); ++i) {
      detail::require_param(edges_[i - 1] < edges_[i], "histogram edges must increase");
    }
    counts_.assign(edges_.size() - 1, 0);
  }

  static Histogram uniform(std::size_t bins, double lo, double hi) {
    detail::require_param(bins >= 1 && lo < hi, "invalid uniform histogram");
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
      edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    }
    edges.back() = hi;
    return Histogram(std::move(edges));
  }

  void add(double x) {
    if (x < edges_.front()) {
      ++underflow_;
    } else if (x > edges_.back()) {
      ++overflow_;
    } else if (x == edges_.back()) {
      ++counts_.back();
    } else {
      const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
      ++counts_[static_cast<std::size_t>(it - edges_.begin()) - 1];
    }
  }

  /// Order-independent merge of two histograms with identical edges.
  void merge(const Histogram& other) {
    detail::require_param(edges_ == other.edges_, "histogram edges differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    underflow_ += other.underflow_;
    overflow_ += other.overflow_;
  }

  std::span<const double> edges() const noexcept { return edges_; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }
  std::size_t bins() const noexcept { return counts_.size(); }
  std::uint64_t underflow() const noexcept { return underflow_; }
  std::uint64_t overflow() const noexcept { return overflow_; }

  std::uint64_t total() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), underflow_ + overflow_);
  }

  /// Fraction of all added values that fell into bin i.
  double fraction(std::size_t i) const {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(counts_.at(i)) / static_cast<double>(n);
  }

 private:
  std::vector<double> edges_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t underflow_ = 0;
  std::uint64_t overflow_ = 0;
};

/// Nearest-rank empirical quantile: the ceil(level n)-th smallest value.
inline double quantile(std::span<const double> sample, double level) {
  detail::require(!sample.empty(), ErrorKind::EmptySample, "quantile of an empty sample");
  detail::require_param(level > 0.0 && level < 1.0, "quantile level must lie in (0, 1)");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  // The tolerance keeps products like 0.9 * 10 from rounding up a rank.
  auto rank = static_cast<std::size_t>(std::ceil(level * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

enum class KsAlternative {
  TwoSided,
  /// Empirical CDF above the null: an excess of short values (clustering).
  ShortGaps,
};

struct KsStatistic {
  double d_plus = 0.0;   ///< sup (F_emp - F_null)
  double d_minus = 0.0;  ///< sup (F_null - F_emp)

  double two_sided() const { return std::max(d_plus, d_minus); }

  double value(KsAlternative alternative) const {
    return alternative == KsAlternative::TwoSided ? two_sided() : d_plus;
  }
};

/// Both one-sided suprema, evaluated at the jump points of the empirical CDF.
template <class Cdf>
KsStatistic ks_statistics(std::span<const double> sample, Cdf&& null_cdf) {
  detail::require(!sample.empty(), ErrorKind::EmptySample, "KS statistic of an empty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  KsStatistic stat;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = null_cdf(sorted[i]);
    stat.d_plus = std::max(stat.d_plus, static_cast<double>(i + 1) / n - f);
    stat.d_minus = std::max(stat.d_minus, f - static_cast<double>(i) / n);
  }
  stat.d_plus = std::clamp(stat.d_plus, 0.0, 1.0);
  stat.d_minus = std::clamp(stat.d_minus, 0.0, 1.0);
  return stat;
}

template <class Cdf>
double ks_statistic(std::span<const double> sample, Cdf&& null_cdf,
                    KsAlternative alternative = KsAlternative::TwoSided) {
  return ks_statistics(sample, std::forward<Cdf>(null_cdf)).value(alternative);
}

/// Kolmogorov survival function Q_KS(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_survival(double x) {
  detail::require_param(x >= 0.0, "Kolmogorov argument must be non-negative");
  // Below 0.18 the survival equals 1 to within 1e-15 and the alternating
  // series loses accuracy.
  if (x < 0.18) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 100000; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic p-value for a KS statistic d from n observations.
inline double ks_pvalue_asymptotic(double d, std::size_t n,
                                   KsAlternative alternative = KsAlternative::TwoSided) {
  detail::require_param(n >= 1, "KS sample size must be >= 1");
  detail::require_param(d >= 0.0, "KS statistic must be non-negative");
  const double x = std::sqrt(static_cast<double>(n)) * d;
  if (alternative == KsAlternative::ShortGaps) return std::clamp(std::exp(-2.0 * x * x), 0.0, 1.0);
  return kolmogorov_survival(x);
}

// ---------------------------------------------------------------------------
// Pearson chi-square
// ---------------------------------------------------------------------------

inline double chi2_statistic(std::span<const double> observed, std::span<const double> expected) {
  detail::require_param(observed.size() == expected.size(),
                        "observed and expected must have equal length");
  detail::require_param(!observed.empty(), "chi-square needs at least one category");
  double total = 0.0;
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    detail::require_param(expected[i] > 0.0, "expected frequencies must be positive");
    detail::require_param(observed[i] >= 0.0, "observed counts must be non-negative");
    const double diff = observed[i] - expected[i];
    stat += diff * diff / expected[i];
    total += observed[i];
  }
  detail::require_param(total > 0.0, "total observed count must be positive");
  return stat;
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
inline double chi2_pvalue(double x, int dof) {
  detail::require_param(dof >= 1, "chi-square needs dof >= 1");
  detail::require_param(x >= 0.0, "chi-square statistic must be non-negative");
  return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Exponential maximum-likelihood rate: 1 / mean gap.
inline double mle_rate(std::span<const double> gaps) {
  detail::require(!gaps.empty(), ErrorKind::EmptySample, "rate estimate from no gaps");
  double sum = 0.0;
  for (double g : gaps) {
    detail::require_param(g > 0.0, "gaps must be positive");
    sum += g;
  }
  return static_cast<double>(gaps.size()) / sum;
}

}  // namespace clusterpower
