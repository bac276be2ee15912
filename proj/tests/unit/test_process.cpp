#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "clusterpower/process.hpp"
#include "clusterpower/random.hpp"

namespace cp = clusterpower;

namespace {

template <class F>
cp::ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const cp::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return cp::ErrorKind::InvalidParameter;
}

// Reference xoshiro256** step, transcribed from the published C code.
struct ReferenceXoshiro {
  std::uint64_t s[4];
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
};

cp::ClusterProcessParams headline() { return {}; }

}  // namespace

TEST(SplitMix64, ReferenceSequence) {
  std::uint64_t state = 0;
  EXPECT_EQ(cp::splitmix64_next(state), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(cp::splitmix64_next(state), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(cp::splitmix64_next(state), 0x06c45d188009454fULL);
}

TEST(Xoshiro256, MatchesReferenceStep) {
  std::uint64_t sm = 12345;
  ReferenceXoshiro ref{};
  for (auto& w : ref.s) w = cp::splitmix64_next(sm);
  cp::Xoshiro256 engine(12345);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(engine(), ref.next());
}

TEST(DeriveSeed, DeterministicAndSeparated) {
  EXPECT_EQ(cp::derive_seed(42, cp::Stream::Catalog, 7), cp::derive_seed(42, cp::Stream::Catalog, 7));
  std::set<cp::Seed> seen;
  for (cp::Seed master : {0ULL, 1ULL, 42ULL}) {
    for (auto stream : {cp::Stream::Catalog, cp::Stream::TieBreak, cp::Stream::NullCalibration,
                        cp::Stream::ConditionalCalibration, cp::Stream::GridCell}) {
      for (std::uint64_t i = 0; i < 200; ++i) seen.insert(cp::derive_seed(master, stream, i));
    }
  }
  EXPECT_EQ(seen.size(), 3u * 5u * 200u);
}

TEST(Uniform01, RangeAndMean) {
  cp::Xoshiro256 engine(1);
  double sum = 0.0;
  constexpr int kDraws = 200000;
  for (int i = 0; i < kDraws; ++i) {
    const double u = cp::uniform01(engine);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / kDraws, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / kDraws));
}

TEST(Exponential, MeanMatchesRate) {
  cp::Xoshiro256 engine(2);
  constexpr int kDraws = 200000;
  double sum = 0.0;
  for (int i = 0; i < kDraws; ++i) sum += cp::exponential(engine, 0.12);
  const double mean = 1.0 / 0.12;
  EXPECT_NEAR(sum / kDraws, mean, 3.0 * mean / std::sqrt(kDraws));
}

TEST(SimulationWindow, Defaults) {
  const cp::SimulationWindow w;
  EXPECT_EQ(w.length_years, 110.0);
  EXPECT_EQ(kind_of([] { cp::SimulationWindow{0.0}.validate(); }), cp::ErrorKind::InvalidParameter);
}

TEST(EventCatalog, EnforcesInvariants) {
  const cp::SimulationWindow w{10.0};
  EXPECT_NO_THROW(cp::EventCatalog({0.0, 1.0, 9.99}, w));
  EXPECT_EQ(kind_of([&] { cp::EventCatalog({1.0, 1.0}, w); }), cp::ErrorKind::InvalidParameter);
  EXPECT_EQ(kind_of([&] { cp::EventCatalog({2.0, 1.0}, w); }), cp::ErrorKind::InvalidParameter);
  EXPECT_EQ(kind_of([&] { cp::EventCatalog({10.0}, w); }), cp::ErrorKind::InvalidParameter);
  EXPECT_EQ(kind_of([&] { cp::EventCatalog({-0.5}, w); }), cp::ErrorKind::InvalidParameter);
  const auto sorted = cp::EventCatalog::from_unsorted({3.0, 1.0, 2.0}, w);
  EXPECT_EQ(sorted, cp::EventCatalog({1.0, 2.0, 3.0}, w));
  EXPECT_TRUE(cp::EventCatalog(w).empty());
  EXPECT_NEAR(cp::mean_rate(sorted), 0.3, 1e-15);
}

TEST(PoissonCatalog, DeterministicGivenSeed) {
  const cp::SimulationWindow w;
  const auto a = cp::sample_poisson_catalog({0.12}, w, 7);
  const auto b = cp::sample_poisson_catalog({0.12}, w, 7);
  const auto c = cp::sample_poisson_catalog({0.12}, w, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(PoissonCatalog, CountMatchesRate) {
  const cp::SimulationWindow w;
  constexpr int kCatalogs = 20000;
  double total = 0.0;
  double total_sq = 0.0;
  for (int i = 0; i < kCatalogs; ++i) {
    const auto cat = cp::sample_poisson_catalog({0.12}, w, cp::derive_seed(3, cp::Stream::Catalog, i));
    const double n = static_cast<double>(cat.size());
    total += n;
    total_sq += n * n;
  }
  const double mean = total / kCatalogs;
  const double var = total_sq / kCatalogs - mean * mean;
  const double expected = 0.12 * 110.0;
  EXPECT_NEAR(mean, expected, 3.0 * std::sqrt(expected / kCatalogs));
  EXPECT_NEAR(var / expected, 1.0, 0.05);
}

TEST(PoissonCatalog, GapsAreExponential) {
  const cp::SimulationWindow w{1e6};
  const auto cat = cp::sample_poisson_catalog({0.12}, w, 11);
  std::vector<double> gaps;
  for (std::size_t i = 1; i < cat.size(); ++i) gaps.push_back(cat[i] - cat[i - 1]);
  const double d = cp::ks_statistic(gaps, [](double t) { return cp::exponential_cdf(0.12, t); });
  EXPECT_GT(cp::ks_pvalue_asymptotic(d, gaps.size()), 0.001);
}

TEST(ClusterParams, Defaults) {
  const auto p = headline();
  EXPECT_EQ(p.clusters_per_century, 3.0);
  EXPECT_EQ(p.in_cluster_events_per_decade, 4.0);
  EXPECT_EQ(p.cluster_duration_years, 15.0);
  EXPECT_EQ(p.window.length_years, 110.0);
  EXPECT_NEAR(p.onset_rate(), 0.03, 1e-15);
  EXPECT_NEAR(p.in_cluster_rate(), 0.4, 1e-15);
}

TEST(ClusterParams, Validation) {
  auto p = headline();
  p.clusters_per_century = 0.0;
  EXPECT_EQ(kind_of([&] { p.validate(); }), cp::ErrorKind::InvalidParameter);
  p = headline();
  p.in_cluster_events_per_decade = -1.0;
  EXPECT_EQ(kind_of([&] { p.validate(); }), cp::ErrorKind::InvalidParameter);
  p = headline();
  p.cluster_duration_years = 111.0;
  EXPECT_EQ(kind_of([&] { p.validate(); }), cp::ErrorKind::InvalidParameter);
}

TEST(ClusterLayout, InvariantsForBothRules) {
  for (auto rule : {cp::OnsetRule::Reject, cp::OnsetRule::Defer}) {
    auto p = headline();
    p.onset_rule = rule;
    p.clusters_per_century = 8.0;
    for (cp::Seed seed = 0; seed < 2000; ++seed) {
      const auto layout = cp::sample_cluster_onsets(p, seed);
      double prev_end = 0.0;
      for (const auto& iv : layout.intervals) {
        ASSERT_GE(iv.start, prev_end);
        ASSERT_GT(iv.end, iv.start);
        ASSERT_LE(iv.end, 110.0);
        ASSERT_LE(iv.length(), 15.0 + 1e-12);
        prev_end = iv.end;
      }
    }
  }
}

TEST(ClusterLayout, DeferralMakesTouchingClustersRejectionDoesNot) {
  auto p = headline();
  p.clusters_per_century = 5.0;
  std::size_t touching_defer = 0;
  std::size_t touching_reject = 0;
  for (cp::Seed seed = 0; seed < 2000; ++seed) {
    p.onset_rule = cp::OnsetRule::Defer;
    const auto d = cp::sample_cluster_onsets(p, seed);
    for (std::size_t i = 1; i < d.intervals.size(); ++i) {
      touching_defer += d.intervals[i].start == d.intervals[i - 1].end;
    }
    p.onset_rule = cp::OnsetRule::Reject;
    const auto r = cp::sample_cluster_onsets(p, seed);
    for (std::size_t i = 1; i < r.intervals.size(); ++i) {
      touching_reject += r.intervals[i].start == r.intervals[i - 1].end;
    }
  }
  EXPECT_GT(touching_defer, 100u);
  EXPECT_EQ(touching_reject, 0u);
}

TEST(ClusterLayout, RejectionOnsetCountMatchesRenewalOracle) {
  // Under rejection the accepted onsets form a renewal process with
  // inter-onset time D + Exp(r). Oracle: simulate that renewal directly.
  auto p = headline();
  const double r = p.onset_rate();
  const double duration = p.cluster_duration_years;
  std::mt19937_64 gen(17);
  std::exponential_distribution<double> wait(r);
  constexpr int kRuns = 40000;
  double oracle_total = 0.0;
  for (int i = 0; i < kRuns; ++i) {
    double t = wait(gen);
    while (t < 110.0) {
      oracle_total += 1.0;
      t += duration + wait(gen);
    }
  }
  double total = 0.0;
  for (int i = 0; i < kRuns; ++i) {
    total += static_cast<double>(cp::sample_cluster_onsets(p, cp::derive_seed(5, cp::Stream::Catalog, i))
                                     .intervals.size());
  }
  const double se = std::sqrt(2.0 * 1.2 / kRuns);
  EXPECT_NEAR(total / kRuns, oracle_total / kRuns, 4.0 * se);
}

TEST(ClusteredCatalog, EventsOnlyInsideClustersAtTheInClusterRate) {
  const auto p = headline();
  double events = 0.0;
  double exposure = 0.0;
  for (cp::Seed seed = 0; seed < 5000; ++seed) {
    cp::Xoshiro256 engine(seed);
    const auto layout = cp::detail::draw_cluster_layout(engine, p);
    const auto cat = cp::sample_events_in_layout(engine, layout, p.in_cluster_rate());
    for (double t : cat.times()) {
      const bool inside = std::any_of(layout.intervals.begin(), layout.intervals.end(),
                                      [t](const cp::Interval& iv) { return t >= iv.start && t < iv.end; });
      ASSERT_TRUE(inside) << "event at " << t;
    }
    events += static_cast<double>(cat.size());
    for (const auto& iv : layout.intervals) exposure += iv.length();
  }
  EXPECT_NEAR(events / exposure, 0.4, 3.0 * std::sqrt(0.4 / exposure));
}

TEST(ClusteredCatalog, DeterministicAndSometimesEmpty) {
  auto p = headline();
  EXPECT_EQ(cp::sample_clustered_catalog(p, 9), cp::sample_clustered_catalog(p, 9));
  p.clusters_per_century = 0.5;
  std::size_t empty = 0;
  for (cp::Seed seed = 0; seed < 500; ++seed) empty += cp::sample_clustered_catalog(p, seed).empty();
  EXPECT_GT(empty, 0u);
}

TEST(ProcessModel, DispatchesOnAlternative) {
  const cp::ProcessModel poisson = cp::PoissonProcess{{0.12}, {}};
  const cp::ProcessModel cluster = headline();
  EXPECT_EQ(cp::sample_catalog(poisson, 4), cp::sample_poisson_catalog({0.12}, {}, 4));
  EXPECT_EQ(cp::sample_catalog(cluster, 4), cp::sample_clustered_catalog(headline(), 4));
  EXPECT_EQ(cp::window_of(poisson).length_years, 110.0);
  const cp::ProcessModel bad = cp::PoissonProcess{{-1.0}, {}};
  EXPECT_EQ(kind_of([&] { cp::validate(bad); }), cp::ErrorKind::InvalidParameter);
}

TEST(RateStatistics, MatchesManualSummary) {
  const cp::ProcessModel model = headline();
  const std::vector<double> levels{0.7, 0.9};
  const auto stats = cp::rate_statistics(model, 2000, levels, 42);
  std::vector<double> rates;
  for (std::size_t i = 0; i < 2000; ++i) {
    rates.push_back(cp::mean_rate(cp::sample_catalog(model, cp::derive_seed(42, cp::Stream::Catalog, i))));
  }
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= 2000.0;
  double ss = 0.0;
  for (double r : rates) ss += (r - mean) * (r - mean);
  EXPECT_NEAR(stats.mean_rate, mean, 1e-12);
  EXPECT_NEAR(stats.std_rate, std::sqrt(ss / 1999.0), 1e-12);
  EXPECT_EQ(stats.quantiles.at(0.7), cp::quantile(rates, 0.7));
  EXPECT_LE(stats.quantiles.at(0.7), stats.quantiles.at(0.9));
  EXPECT_GE(stats.std_rate, 0.0);
  EXPECT_EQ(stats.n_samples, 2000u);
}

TEST(RateStatistics, Errors) {
  const cp::ProcessModel model = headline();
  const std::vector<double> bad{1.5};
  const std::vector<double> good{0.5};
  EXPECT_EQ(kind_of([&] { (void)cp::rate_statistics(model, 100, bad, 1); }),
            cp::ErrorKind::InvalidParameter);
  EXPECT_EQ(kind_of([&] { (void)cp::rate_statistics(model, 1, good, 1); }),
            cp::ErrorKind::InvalidParameter);
}
