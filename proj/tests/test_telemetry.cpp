#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

namespace gtb {
namespace {

using namespace gtb::testing;

DmonParseResult parse_fixture(const std::string& name) {
  std::ifstream in(kFixtures / name);
  return parse_dmon_stream(in, 1.0);
}

// Exact averages of the fixtures, from tools/oracles/dmon_fixture.py.
constexpr double kFullAverage = 19711.0 / 58.0;
constexpr double kPartialAverage = 89756.0 / 227.0;
constexpr double kFullAverageCorrupt = 39820.0 / 117.0;  // sample 44 holds across the bad slot
constexpr double kPartialAverageCorrupt = 89732.0 / 227.0;

TEST(DmonFixture, CleanLogGivesOneSamplePerRow) {
  auto r = parse_fixture("dmon_120.txt");
  ASSERT_EQ(r.trace.samples.size(), 120u);
  EXPECT_EQ(r.skipped_rows, 0u);
  EXPECT_DOUBLE_EQ(r.trace.start(), 0.0);
  EXPECT_DOUBLE_EQ(r.trace.samples.back().t, 119.0);
  EXPECT_DOUBLE_EQ(r.trace.end(), 120.0);
  const auto missing = std::count_if(r.trace.samples.begin(), r.trace.samples.end(),
                                     [](const PowerSample& s) { return !s.power_w; });
  EXPECT_EQ(missing, 4);
  EXPECT_FALSE(r.trace.samples[17].power_w.has_value());
  EXPECT_EQ(r.trace.samples[17].mem_clock_mhz, 10501);
  EXPECT_FALSE(r.trace.samples[88].sm_clock_mhz.has_value());
  EXPECT_EQ(r.trace.samples[0].power_w, 33.0);
  EXPECT_EQ(r.trace.samples[0].sm_clock_mhz, 210);
  EXPECT_EQ(r.trace.samples[0].mem_clock_mhz, 405);
}

TEST(DmonFixture, AveragesMatchOracle) {
  auto r = parse_fixture("dmon_120.txt");
  EXPECT_NEAR(average_power(r.trace), kFullAverage, 1e-9);
  EXPECT_NEAR(average_power(r.trace, 10.5, 70.25), kPartialAverage, 1e-9);
}

TEST(DmonFixture, CorruptedRowIsSkipped) {
  auto r = parse_fixture("dmon_120_corrupt.txt");
  EXPECT_EQ(r.trace.samples.size(), 120u);
  EXPECT_EQ(r.skipped_rows, 1u);
  // The bad row still used a sampling slot, so later rows sit one second later.
  EXPECT_DOUBLE_EQ(r.trace.samples[44].t, 44.0);
  EXPECT_DOUBLE_EQ(r.trace.samples[45].t, 46.0);
  EXPECT_NEAR(average_power(r.trace), kFullAverageCorrupt, 1e-9);
  EXPECT_NEAR(average_power(r.trace, 10.5, 70.25), kPartialAverageCorrupt, 1e-9);
}

TEST(DmonParser, HeaderWithoutRequiredColumnsIsASchemaError) {
  std::istringstream in("# gpu    pwr  gtemp\n# Idx      W      C\n    0     80     40\n");
  try {
    parse_dmon_stream(in);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("mclk"), std::string::npos) << e.what();
  }
}

TEST(DmonParser, AcceptsSmAsCoreClockAndAnyColumnOrder) {
  std::istringstream in("# gpu   mclk     sm    pwr\n    0  10501   2520  301\n    0   5001   1125  150\n");
  auto r = parse_dmon_stream(in, 0.5);
  ASSERT_EQ(r.trace.samples.size(), 2u);
  EXPECT_EQ(r.trace.samples[1].power_w, 150.0);
  EXPECT_EQ(r.trace.samples[1].sm_clock_mhz, 1125);
  EXPECT_EQ(r.trace.samples[1].mem_clock_mhz, 5001);
  EXPECT_DOUBLE_EQ(r.trace.samples[1].t, 0.5);
}

TEST(DmonParser, RowsBeforeAnyHeaderAreSkipped) {
  std::istringstream in("    0  300  40  -  10501  2520\n" + dmon_header() + dmon_row(0, 301.0, 10501, 2520));
  auto r = parse_dmon_stream(in);
  EXPECT_EQ(r.trace.samples.size(), 1u);
  EXPECT_EQ(r.skipped_rows, 1u);
}

TEST(DmonParser, NoDataIsAnError) {
  std::istringstream in(dmon_header());
  EXPECT_THROW(parse_dmon_stream(in), DomainError);
}

TEST(DmonParser, ReceiptTimesAreKeptAndForcedIncreasing) {
  std::vector<TimedLine> lines = {{0.0, "# gpu pwr mclk pclk"}, {0.02, "0 100 5001 1125"},
                                  {1.01, "0 110 5001 1125"},    {1.01, "0 120 5001 1125"},
                                  {2.03, "0 130 5001 1125"}};
  auto r = parse_dmon_stream(lines, 1.0);
  ASSERT_EQ(r.trace.samples.size(), 4u);
  EXPECT_DOUBLE_EQ(r.trace.samples[0].t, 0.02);
  EXPECT_DOUBLE_EQ(r.trace.samples[1].t, 1.01);
  EXPECT_GT(r.trace.samples[2].t, r.trace.samples[1].t);
  EXPECT_DOUBLE_EQ(r.trace.samples[3].t, 2.03);
}

PowerTrace trace_of(std::vector<std::optional<double>> powers, double period = 1.0) {
  PowerTrace t;
  t.sample_period_s = period;
  for (std::size_t i = 0; i < powers.size(); ++i) t.samples.push_back({i * period, powers[i], 1125, 5001});
  return t;
}

TEST(AveragePower, HandWorkedCases) {
  EXPECT_DOUBLE_EQ(average_power(trace_of({100, 100, 100})), 100.0);
  EXPECT_DOUBLE_EQ(average_power(trace_of({100, 200})), 150.0);
  EXPECT_DOUBLE_EQ(average_power(trace_of({100, 200}), 0.5, 1.5), 150.0);
  EXPECT_DOUBLE_EQ(average_power(trace_of({100, 200}), 0.0, 1.25), 120.0);
  EXPECT_DOUBLE_EQ(average_power(trace_of({100, std::nullopt, 300})), 200.0);
}

TEST(AveragePower, Errors) {
  EXPECT_THROW(average_power(trace_of({100}), 1.0, 1.0), DomainError);
  EXPECT_THROW(average_power(trace_of({std::nullopt, std::nullopt})), DomainError);
  EXPECT_THROW(average_power(trace_of({100, 200}), 5.0, 6.0), DomainError);
}

TEST(AveragePower, BoundedByExtremesAndScalesLinearly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(30, 450);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::optional<double>> p(1 + rng() % 50);
    for (auto& v : p) v = w(rng);
    auto t = trace_of(p, 0.25);
    const double avg = average_power(t);
    const double lo = **std::min_element(p.begin(), p.end());
    const double hi = **std::max_element(p.begin(), p.end());
    EXPECT_GE(avg, lo - 1e-9);
    EXPECT_LE(avg, hi + 1e-9);
    for (auto& s : t.samples) *s.power_w *= 3.0;
    EXPECT_NEAR(average_power(t), 3.0 * avg, 1e-9 * avg);
  }
}

TEST(Envelope, FlagsOnlyReadingsBeyondTolerance) {
  const ThrottleConfig c{150, 1125, 5001};
  PowerTrace t;
  t.samples = {{0, 150.0 * 1.05, 1125, 5001},   // exactly at the tolerated limit
               {1, 158.0, 1125, 5001},          // power over
               {2, 100.0, 1148, 5001},          // core over 2 %
               {3, std::nullopt, std::nullopt, 5200},
               {4, std::nullopt, std::nullopt, std::nullopt}};
  auto v = validate_envelope(t, c);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].sample_index, 1u);
  EXPECT_EQ(v[0].kind, EnvelopeChannel::power);
  EXPECT_EQ(v[1].kind, EnvelopeChannel::core_clock);
  EXPECT_EQ(v[2].kind, EnvelopeChannel::mem_clock);
  EXPECT_TRUE(validate_envelope(t, c, {0.10, 0.05}).empty());
}

TEST(TraceFile, RoundTripKeepsMissingValues) {
  auto r = parse_fixture("dmon_120_corrupt.txt");
  std::stringstream buf;
  write_trace(buf, r.trace);
  const std::string text = buf.str();
  EXPECT_EQ(text.rfind("# gpu-tier-bench trace v1 period=1\nt_s,power_w,sm_clock_mhz,mem_clock_mhz\n", 0), 0u);
  EXPECT_NE(text.find("\n17,,2505,10501\n"), std::string::npos);
  EXPECT_EQ(read_trace(buf), r.trace);
}

TEST(TraceFile, RejectsForeignFiles) {
  std::istringstream bad("t,p\n1,2\n");
  EXPECT_THROW(read_trace(bad), DomainError);
  std::istringstream decreasing("# gpu-tier-bench trace v1 period=1\n2,100,,\n1,100,,\n");
  EXPECT_THROW(read_trace(decreasing), DomainError);
}

TEST(SimSampler, EmitsParseableDmonRows) {
  SimDevice dev = sim_device();
  dev.apply_throttle({150, 255, 5001});
  auto argv = dev.sampler_command(0.05);
  auto child = ChildProcess::spawn(argv, {.capture_stdout = true});
  std::vector<TimedLine> lines;
  std::mutex mu;
  const auto t0 = std::chrono::steady_clock::now();
  LineReader reader(child.release_stdout(), [&](std::string line, std::chrono::steady_clock::time_point at) {
    std::lock_guard lock(mu);
    lines.push_back({std::chrono::duration<double>(at - t0).count(), std::move(line)});
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(400));
  child.terminate(std::chrono::milliseconds(1000));
  reader.join();
  auto r = parse_dmon_stream(lines, 0.05);
  EXPECT_GE(r.trace.samples.size(), 4u);
  EXPECT_EQ(r.skipped_rows, 0u);
  for (const auto& s : r.trace.samples) {
    EXPECT_EQ(s.sm_clock_mhz, 255);
    EXPECT_EQ(s.mem_clock_mhz, 5001);
    EXPECT_NEAR(*s.power_w, std::round(sim_power_draw(dev.model(), {150, 255, 5001})), 1e-9);
  }
  EXPECT_TRUE(validate_envelope(r.trace, {150, 255, 5001}).empty());
}

}  // namespace
}  // namespace gtb
