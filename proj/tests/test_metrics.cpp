#include <gtest/gtest.h>

#include <algorithm>

#include "fps_oracle.hpp"
#include "test_support.hpp"

namespace gtb {
namespace {

FrameTrace frames_at(const std::vector<double>& starts, double ms = 1.0) {
  FrameTrace t;
  for (std::size_t i = 0; i < starts.size(); ++i) t.frames.push_back({static_cast<std::int64_t>(i), starts[i], ms});
  return t;
}

TEST(FpsStats, ConstantRate) {
  std::vector<double> s;
  for (int i = 0; i < 1000; ++i) s.push_back(i / 100.0);
  auto st = fps_stats(frames_at(s, 10.0), 1.0);
  EXPECT_EQ(st.bucket_count, 10);
  EXPECT_EQ(st.total_frames, 1000);
  EXPECT_DOUBLE_EQ(st.mean_fps, 100.0);
  EXPECT_DOUBLE_EQ(st.sd_fps, 0.0);
}

TEST(FpsStats, TwoLevelRate) {
  std::vector<double> s;
  for (int i = 0; i < 500; ++i) s.push_back(i / 100.0);
  for (int i = 0; i < 250; ++i) s.push_back(5.0 + i / 50.0);
  auto t = frames_at(s, 10.0);
  t.frames.back().frame_time_ms = 20.0;
  auto st = fps_stats(t, 1.0);
  EXPECT_EQ(st.bucket_count, 10);
  EXPECT_DOUBLE_EQ(st.mean_fps, 75.0);
  EXPECT_DOUBLE_EQ(st.sd_fps, 25.0);
}

TEST(FpsStats, TrailingPartialBucketIsDropped) {
  std::vector<double> s;
  for (int i = 0; i < 250; ++i) s.push_back(i / 100.0);  // 2.5 s
  auto st = fps_stats(frames_at(s, 10.0), 1.0);
  EXPECT_EQ(st.bucket_count, 2);
  EXPECT_EQ(st.total_frames, 200);
}

TEST(FpsStats, TimesAreRelativeToFirstFrame) {
  std::vector<double> s;
  for (int i = 0; i < 300; ++i) s.push_back(1000.0 + i / 100.0);
  auto st = fps_stats(frames_at(s, 10.0), 1.0);
  EXPECT_EQ(st.bucket_count, 3);
  EXPECT_DOUBLE_EQ(st.mean_fps, 100.0);
}

TEST(FpsStats, Errors) {
  EXPECT_THROW(fps_stats(FrameTrace{}, 1.0), DomainError);
  EXPECT_THROW(fps_stats(frames_at({0.0, 0.5}), 0.0), DomainError);
  EXPECT_THROW(fps_stats(frames_at({0.0, 0.5, 1.5}), 1.0), DomainError);  // 1.501 s: one complete bucket
}

TEST(FpsStats, MatchesRecountOracleOnRandomTraces) {
  std::mt19937_64 rng(2024);
  const double widths[] = {0.25, 0.5, 1.0, 2.0, 0.3, 0.7};
  for (int trial = 0; trial < 300; ++trial) {
    auto t = testing::random_trace(rng, 10 + rng() % 5000);
    const double b = widths[rng() % 6];
    if (complete_buckets(t.end() - t.start(), b) < 2) continue;
    auto got = fps_stats(t, b);
    auto want = testing::oracle_fps(t, b);
    ASSERT_EQ(got, want) << "trial " << trial << " bucket " << b;
    EXPECT_LE(got.total_frames, static_cast<std::int64_t>(t.frames.size()));
  }
}

TEST(FpsStats, CountsEveryFrameOnExactBucketMultiple) {
  std::vector<double> s;
  for (int i = 0; i < 64; ++i) s.push_back(i * 0.0625);
  auto st = fps_stats(frames_at(s, 62.5), 0.5);
  EXPECT_EQ(st.bucket_count, 8);
  EXPECT_EQ(st.total_frames, 64);
}

TEST(Energy, WorkedValues) {
  EXPECT_DOUBLE_EQ(energy_per_frame(100, 50), 2.0);
  EXPECT_NEAR(energy_per_frame(150, 29.9), 5.017, 0.001);
  EXPECT_DOUBLE_EQ(energy_per_frame(0, 60), 0.0);
  EXPECT_DOUBLE_EQ(perf_per_watt(50, 100), 0.5);
  EXPECT_NEAR(perf_per_watt(45.8, 150), 0.3053, 0.0001);
  EXPECT_THROW(energy_per_frame(100, 0), DomainError);
  EXPECT_THROW(energy_per_frame(-1, 10), DomainError);
  EXPECT_THROW(perf_per_watt(50, 0), DomainError);
}

TEST(Energy, IdentitiesOnRandomInputs) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> p(1, 600), f(0.5, 500);
  for (int i = 0; i < 10000; ++i) {
    const double pw = p(rng), fps = f(rng);
    auto e = energy_metrics(pw, fps);
    EXPECT_NEAR(e.energy_per_frame_j * e.perf_per_watt, 1.0, 1e-12);
    EXPECT_NEAR(e.energy_per_frame_j * fps, pw, 1e-9);
  }
}

RunRecord record(int repeat, double fps, double sd, std::int64_t buckets, double power) {
  RunRecord r;
  r.tier_name = "rtx3070";
  r.splat_count = 580604;
  r.repeat_index = repeat;
  r.duration_s = 120;
  r.fps = {fps, sd, buckets, static_cast<std::int64_t>(fps * buckets)};
  r.energy = energy_metrics(power, fps);
  r.started_at = "2024-06-11T10:0" + std::to_string(repeat) + ":00.000Z";
  r.finished_at = "2024-06-11T10:0" + std::to_string(repeat) + ":02.000Z";
  return r;
}

TEST(Aggregate, HandWorkedExample) {
  auto a = aggregate_repeats({record(0, 100, 0, 120, 100), record(1, 50, 0, 120, 200)});
  EXPECT_DOUBLE_EQ(a.fps.mean_fps, 75.0);
  EXPECT_DOUBLE_EQ(a.energy.p_avg_w, 150.0);
  EXPECT_DOUBLE_EQ(a.energy.energy_per_frame_j, 2.0);  // not the mean of 1.0 and 4.0
  EXPECT_EQ(a.repeats, 2);
  EXPECT_EQ(a.fps.bucket_count, 240);
  EXPECT_EQ(a.started_at, "2024-06-11T10:00:00.000Z");
  EXPECT_EQ(a.finished_at, "2024-06-11T10:01:02.000Z");
}

TEST(Aggregate, PooledSd) {
  auto a = aggregate_repeats({record(0, 60, 3, 100, 300), record(1, 60, 4, 300, 300)});
  EXPECT_DOUBLE_EQ(a.fps.sd_fps, std::sqrt((100 * 9.0 + 300 * 16.0) / 400.0));
}

TEST(Aggregate, SingleRecordIsFixedPoint) {
  auto r = record(0, 44.8, 2.6, 120, 412);
  EXPECT_EQ(aggregate_repeats({r}), r);
}

TEST(Aggregate, IdenticalRecordsKeepTheirMetrics) {
  auto r = record(0, 44.8, 2.6, 120, 412);
  auto a = aggregate_repeats({r, r});
  EXPECT_DOUBLE_EQ(a.fps.mean_fps, r.fps.mean_fps);
  EXPECT_DOUBLE_EQ(a.fps.sd_fps, r.fps.sd_fps);
  EXPECT_DOUBLE_EQ(a.duration_s, r.duration_s);
  EXPECT_EQ(a.energy, r.energy);
}

TEST(Aggregate, PermutationInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> fps(10, 90), sd(0, 8), pw(120, 450);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RunRecord> rs;
    for (int i = 0; i < 2 + trial % 4; ++i) rs.push_back(record(i, fps(rng), sd(rng), 100 + rng() % 40, pw(rng)));
    const auto want = aggregate_repeats(rs);
    for (int k = 0; k < 5; ++k) {
      std::shuffle(rs.begin(), rs.end(), rng);
      EXPECT_EQ(aggregate_repeats(rs), want);
    }
    EXPECT_NEAR(want.energy.energy_per_frame_j * want.energy.perf_per_watt, 1.0, 1e-12);
  }
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate_repeats({}), DomainError);
  auto a = record(0, 50, 1, 10, 100);
  auto b = record(1, 50, 1, 10, 100);
  b.animated = true;
  EXPECT_THROW(aggregate_repeats({a, b}), DomainError);
  b = record(1, 50, 1, 10, 100);
  b.tier_name = "rtx3050";
  EXPECT_THROW(aggregate_repeats({a, b}), DomainError);
}

}  // namespace
}  // namespace gtb
