#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "clusterpower/io.hpp"
#include "clusterpower/run_config.hpp"

namespace cp = clusterpower;
namespace fs = std::filesystem;

namespace {

template <class F>
cp::Error error_of(F&& f) {
  try {
    f();
  } catch (const cp::Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an Error";
  return cp::Error(cp::ErrorKind::InvalidParameter, "none");
}

cp::IngestedCatalog parse(const std::string& text, const cp::IngestOptions& options = {}) {
  std::istringstream in(text);
  return cp::parse_catalog(in, options, "fixture.csv");
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("clusterpower_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string read(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

cp::PowerStudy small_study(unsigned workers = 1) {
  cp::PowerConfig config;
  config.n_trials = 300;
  config.test.calibration_trials = 1000;
  config.workers = workers;
  return cp::run_power_study(config);
}

cp::ResultMetadata meta() { return {"power", 42, "0123456789abcdef", std::string(cp::kVersion)}; }

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(cp::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(cp::fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(cp::fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 109.99999999999999, 1e-300, 0.12}) {
    EXPECT_EQ(std::stod(cp::format_double(v)), v);
  }
  EXPECT_EQ(cp::format_double(0.4), "0.4");
}

TEST(Ingest, MagnitudeCutoffKeepsTwoOfThree) {
  cp::IngestOptions options;
  options.cutoff = 8.3;
  const auto out = parse("time,magnitude\n1905.2,8.1\n1950.5,8.4\n2004.9,9.0\n", options);
  EXPECT_EQ(out.catalog.size(), 2u);
  EXPECT_EQ(out.n_rows, 3u);
  EXPECT_EQ(out.n_below_cutoff, 1u);
  EXPECT_EQ(out.magnitudes, (std::vector<double>{8.4, 9.0}));
  for (double m : out.magnitudes) EXPECT_GE(m, 8.3);
}

TEST(Ingest, UnsortedInputComesOutSorted) {
  const auto out = parse("time\n30.5\n2.25\n17.0\n");
  EXPECT_EQ(out.origin_year, 2.0);
  EXPECT_EQ(std::vector<double>(out.catalog.times().begin(), out.catalog.times().end()),
            (std::vector<double>{0.25, 15.0, 28.5}));
}

TEST(Ingest, CutoffAboveEveryMagnitude) {
  cp::IngestOptions options;
  options.cutoff = 9.5;
  const auto e = error_of([&] { (void)parse("time,magnitude\n1.0,8.0\n2.0,9.0\n", options); });
  EXPECT_EQ(e.kind(), cp::ErrorKind::EmptyAfterFilter);
}

TEST(Ingest, DuplicatesRemovedAndCounted) {
  const auto out = parse("time\n5.5\n1.5\n5.5\n5.5\n");
  EXPECT_EQ(out.catalog.size(), 2u);
  EXPECT_EQ(out.n_duplicates, 2u);
}

TEST(Ingest, WindowInferredFromFirstAndLastYear) {
  const auto out = parse("time\n1900.3\n2009.7\n");
  EXPECT_EQ(out.origin_year, 1900.0);
  EXPECT_EQ(out.catalog.window().length_years, 110.0);
  cp::IngestOptions options;
  options.window_start = 1890.0;
  options.window_end = 2020.0;
  const auto wide = parse("time\n1900.3\n2009.7\n", options);
  EXPECT_EQ(wide.origin_year, 1890.0);
  EXPECT_EQ(wide.catalog.window().length_years, 130.0);
  options.window_start = 1950.0;
  EXPECT_EQ(error_of([&] { (void)parse("time\n1900.3\n2009.7\n", options); }).kind(),
            cp::ErrorKind::InvalidParameter);
}

TEST(Ingest, MetadataSetsWindow) {
  const auto out = parse("# window_start=0\n# window_length=110\ntime\n3.0\n50.0\n");
  EXPECT_EQ(out.origin_year, 0.0);
  EXPECT_EQ(out.catalog.window().length_years, 110.0);
}

TEST(Ingest, ParseErrorsNameTheLine) {
  const auto bad_time = error_of([] { (void)parse("time\n1.0\n2.0\nabc\n"); });
  EXPECT_EQ(bad_time.kind(), cp::ErrorKind::Parse);
  EXPECT_NE(std::string(bad_time.what()).find("line 4"), std::string::npos);
  const auto no_column = error_of([] { (void)parse("date,magnitude\n1.0,8.0\n"); });
  EXPECT_EQ(no_column.kind(), cp::ErrorKind::Parse);
  const auto empty = error_of([] { (void)parse(""); });
  EXPECT_EQ(empty.kind(), cp::ErrorKind::Parse);
  cp::IngestOptions options;
  options.cutoff = 8.0;
  EXPECT_EQ(error_of([&] { (void)parse("time\n1.0\n", options); }).kind(),
            cp::ErrorKind::InvalidParameter);
}

TEST(Ingest, MissingFile) {
  EXPECT_EQ(error_of([] { (void)cp::ingest_catalog("/nonexistent/catalog.csv", {}); }).kind(),
            cp::ErrorKind::FileNotFound);
}

TEST(Ingest, CustomColumnsAndQuotedFields) {
  cp::IngestOptions options;
  options.time_column = "t";
  options.magnitude_column = "mw";
  options.cutoff = 8.0;
  const auto out = parse("id,t,mw\n\"a\",10.5,8.2\n\"b\",12.5,7.9\n\"c\",11.0,8.0\n", options);
  EXPECT_EQ(out.catalog.size(), 2u);
  EXPECT_EQ(out.magnitudes, (std::vector<double>{8.2, 8.0}));
}

TEST(Ingest, DateTimesBecomeDecimalYears) {
  // 2000 is a leap year; 2 July starts day 183 of 366.
  EXPECT_NEAR(*cp::detail::parse_datetime_year("2000-07-02"), 2000.5, 1e-12);
  EXPECT_NEAR(*cp::detail::parse_datetime_year("2001-01-01T00:00:00"), 2001.0, 1e-12);
  EXPECT_NEAR(*cp::detail::parse_datetime_year("1999-12-31 12:00:00"),
              1999.0 + (364.5 / 365.0), 1e-12);
  EXPECT_FALSE(cp::detail::parse_datetime_year("1999-02-29").has_value());
  EXPECT_FALSE(cp::detail::parse_datetime_year("1999-13-01").has_value());
  const auto out = parse("time\n1960-05-22T19:11:20\n2004-12-26T00:58:53\n2011-03-11\n");
  EXPECT_EQ(out.origin_year, 1960.0);
  EXPECT_EQ(out.catalog.size(), 3u);
}

TEST(Ingest, RoundTripIsExact) {
  for (cp::Seed seed = 0; seed < 50; ++seed) {
    const auto cat = cp::sample_clustered_catalog({}, seed);
    if (cat.size() == 0) continue;
    const auto back = parse(cp::render_catalog_csv(cat));
    EXPECT_EQ(back.catalog, cat) << "seed " << seed;
  }
  const auto poisson = cp::sample_poisson_catalog({0.12}, {}, 7);
  EXPECT_EQ(parse(cp::render_catalog_csv(poisson)).catalog, poisson);
}

TEST(Ingest, TestResultsMatchInMemoryCatalog) {
  const auto cat = cp::sample_clustered_catalog({}, 3);
  const auto back = parse(cp::render_catalog_csv(cat)).catalog;
  cp::TestSpec spec;
  spec.calibration_trials = 1000;
  const cp::CatalogTester tester(spec, cat.window(), std::nullopt, 5);
  const auto a = tester(cat);
  const auto b = tester(back);
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(Render, PowerStudyCsvHasTwentyRowsAndProvenance) {
  const auto csv = cp::render_power_study(small_study(), meta(), cp::OutputFormat::Csv);
  EXPECT_NE(csv.find("# master_seed=42\n"), std::string::npos);
  EXPECT_NE(csv.find("# config_hash=0123456789abcdef\n"), std::string::npos);
  EXPECT_NE(csv.find("# clusterpower " + std::string(cp::kVersion)), std::string::npos);
  std::istringstream in(csv);
  std::string line;
  int rows = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.rfind('#', 0) == 0) continue;
    if (!header) {
      EXPECT_EQ(line, "bin_start,bin_end,count,fraction");
      header = true;
      continue;
    }
    ++rows;
  }
  EXPECT_EQ(rows, 20);
}

TEST(Render, JsonMirrorsCsvFields) {
  const auto study = small_study();
  const auto j = nlohmann::json::parse(cp::render_power_study(study, meta(), cp::OutputFormat::Json));
  EXPECT_EQ(j["master_seed"], 42);
  EXPECT_EQ(j["config_hash"], "0123456789abcdef");
  EXPECT_EQ(j["version"], std::string(cp::kVersion));
  ASSERT_EQ(j["histogram"].size(), 20u);
  for (const char* key : {"bin_start", "bin_end", "count", "fraction"}) {
    EXPECT_TRUE(j["histogram"][0].contains(key)) << key;
  }
  EXPECT_EQ(j["power"]["power"].get<double>(), study.power.power);
  EXPECT_EQ(j["histogram"][0]["fraction"].get<double>(), study.distribution.first_bin_fraction());
}

TEST(Render, GridIsLongFormat) {
  cp::PowerGrid grid{{2.0, 3.0}, {4.0}, {}};
  grid.cells.push_back({2.0, 4.0, cp::PowerEstimate{0.25, 0.01, 0.05, 100}, {}});
  grid.cells.push_back({3.0, 4.0, std::nullopt, "all-untestable: none"});
  const auto csv = cp::render_power_grid(grid, meta(), cp::OutputFormat::Csv);
  EXPECT_NE(csv.find("clusters_per_century,events_per_decade,power,std_error"), std::string::npos);
  EXPECT_NE(csv.find("\n2,4,0.25,0.01,100,\n"), std::string::npos);
  EXPECT_NE(csv.find("\n3,4,,,,all-untestable: none\n"), std::string::npos);
  const auto j = nlohmann::json::parse(cp::render_power_grid(grid, meta(), cp::OutputFormat::Json));
  EXPECT_EQ(j["grid"][0]["power"], 0.25);
  EXPECT_TRUE(j["grid"][1]["power"].is_null());
}

TEST_F(TempDir, EmptyPvalueSetWritesNothing) {
  cp::PowerStudy empty;
  const auto path = dir_ / "empty.csv";
  EXPECT_EQ(error_of([&] { cp::emit_results(empty, cp::OutputFormat::Csv, path, meta()); }).kind(),
            cp::ErrorKind::EmptySample);
  EXPECT_FALSE(fs::exists(path));
}

TEST_F(TempDir, UnwritablePath) {
  const auto path = dir_ / "missing" / "out.csv";
  EXPECT_EQ(error_of([&] { cp::emit_results(small_study(), cp::OutputFormat::Csv, path, meta()); }).kind(),
            cp::ErrorKind::Unwritable);
}

TEST_F(TempDir, SameConfigWritesIdenticalBytes) {
  const auto a = dir_ / "a.csv";
  const auto b = dir_ / "b.csv";
  cp::emit_results(small_study(1), cp::OutputFormat::Csv, a, meta());
  cp::emit_results(small_study(4), cp::OutputFormat::Csv, b, meta());
  EXPECT_EQ(read(a), read(b));
  EXPECT_FALSE(read(a).empty());
}

TEST_F(TempDir, OutputDirectoryFromEnvironment) {
  ::setenv(cp::kOutputDirEnv, dir_.c_str(), 1);
  cp::write_text_file("relative.txt", "hello\n");
  ::unsetenv(cp::kOutputDirEnv);
  EXPECT_EQ(read(dir_ / "relative.txt"), "hello\n");
  const auto absolute = dir_ / "abs.txt";
  EXPECT_EQ(cp::resolve_output_path(absolute), absolute);
}

TEST(RunConfig, ExactlyOneInput) {
  cp::RunConfig c;
  c.command = "power";
  EXPECT_EQ(error_of([&] { c.validate(); }).kind(), cp::ErrorKind::InvalidParameter);
  c.process = cp::ClusterProcessParams{};
  EXPECT_NO_THROW(c.validate());
  c.catalog_path = "cat.csv";
  EXPECT_EQ(error_of([&] { c.validate(); }).kind(), cp::ErrorKind::InvalidParameter);
  c.process.reset();
  EXPECT_NO_THROW(c.validate());
  c.output = "";
  EXPECT_EQ(error_of([&] { c.validate(); }).kind(), cp::ErrorKind::InvalidParameter);
}

TEST(RunConfig, HashIgnoresWorkersAndOutput) {
  cp::RunConfig a;
  a.command = "power";
  a.process = cp::ClusterProcessParams{};
  auto b = a;
  b.workers = 7;
  b.output = "elsewhere.csv";
  b.format = cp::OutputFormat::Json;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 43;
  EXPECT_NE(a.hash(), b.hash());
  auto c = a;
  c.test.inter.n = 4;
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  EXPECT_EQ(a.metadata().config_hash, a.hash());
}
