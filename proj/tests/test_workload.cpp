#include <gtest/gtest.h>

#include "test_support.hpp"

namespace gtb {
namespace {

using namespace gtb::testing;

TEST(WorkloadSpec, Invariants) {
  WorkloadSpec w{{"r"}, 580604, false, 0, 1920, 1080, 2.0};
  EXPECT_NO_THROW(validate(w));
  w.animated = true;
  EXPECT_THROW(validate(w), DomainError);
  w.animated_splats = 38844;
  EXPECT_NO_THROW(validate(w));
  w.splat_count = 0;
  EXPECT_THROW(validate(w), DomainError);
  w.splat_count = 1;
  w.duration_s = 0;
  EXPECT_THROW(validate(w), DomainError);
}

TEST(WorkloadSpec, CommandTemplating) {
  WorkloadSpec w{{"viewer", "--n={splats}", "{animated}", "{anim_splats}", "{width}x{height}"}, 3448340, true, 38844};
  EXPECT_EQ(expand_command(w),
            (std::vector<std::string>{"viewer", "--n=3448340", "1", "38844", "1920x1080"}));
  EXPECT_EQ(w.total_splats(), 3487184);
}

TEST(FrameLog, ParsesFramesAndIgnoresChatter) {
  auto r = parse_frame_log("F 0 0.000 10.0\nloading scene...\nF 1 0.010 10.0\n\nF two 1 1\n");
  ASSERT_EQ(r.trace.frames.size(), 2u);
  EXPECT_EQ(r.ignored_lines, 3u);
  EXPECT_EQ(r.trace.frames[1], (FrameEntry{1, 0.010, 10.0}));
  EXPECT_DOUBLE_EQ(r.trace.end(), 0.02);
}

TEST(FrameLog, Errors) {
  EXPECT_THROW(parse_frame_log("F 1 0.0 10.0\nF 0 0.01 10.0\n"), DomainError);
  EXPECT_THROW(parse_frame_log("F 3 0.0 10.0\nF 3 0.01 10.0\n"), DomainError);
  EXPECT_THROW(parse_frame_log("nothing here\n"), DomainError);
  EXPECT_FALSE(parse_frame_line("F 0 0.0 0").has_value());
  EXPECT_FALSE(parse_frame_line("F 0 0.0 -1").has_value());
  EXPECT_FALSE(parse_frame_line("F 0 0.0 nan").has_value());
}

TEST(FrameLog, ParseOfSerializeIsIdentity) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ms(0.1, 80.0);
  for (int trial = 0; trial < 200; ++trial) {
    FrameTrace t;
    double clock = std::uniform_real_distribution<double>(0, 1000)(rng);
    std::int64_t idx = static_cast<std::int64_t>(rng() % 100);
    for (std::size_t i = 0, n = 1 + rng() % 300; i < n; ++i) {
      t.frames.push_back({idx, clock, ms(rng)});
      clock += t.frames.back().frame_time_ms / 1000.0;
      idx += 1 + static_cast<std::int64_t>(rng() % 3);
    }
    auto r = parse_frame_log(serialize_frame_log(t));
    EXPECT_EQ(r.trace, t);
    EXPECT_EQ(r.ignored_lines, 0u);
  }
}

TEST(FrameLog, LineFormatIsBitExact) { EXPECT_EQ(frame_line({7, 0.5, 16.25}), "F 7 0.5 16.25\n"); }

// --- synthetic renderer ---------------------------------------------------------

constexpr double k4090Tflops = 54.5634;  // simulated RTX 4090 at nominal caps

TEST(Synthetic, FittedConstantsTrackReferenceFps) {
  const auto m = synthetic_model();
  // RTX 4090 rows of the measured FPS table: (splats, animated splats, mean FPS).
  struct Row {
    std::int64_t splats, anim;
    double fps;
  } rows[] = {{3448340, 0, 44.8},     {2795038, 0, 47.9},     {1834311, 0, 51.3},     {580604, 0, 58.8},
              {3448340, 38844, 38.9}, {2795038, 38844, 41.2}, {1834311, 38844, 45.3}, {580604, 38844, 49.6}};
  for (const auto& r : rows) {
    const double fps = 1000.0 / mean_frame_time_ms(m, r.splats, r.anim, k4090Tflops);
    EXPECT_LT(std::abs(fps - r.fps) / r.fps, 0.15) << r.splats << " / " << r.anim;
    EXPECT_LT(std::abs(fps - r.fps) / r.fps, 0.02) << "fit residual grew: " << r.splats << " / " << r.anim;
  }
}

TEST(Synthetic, LinearWithoutOverhead) {
  SyntheticWorkloadModel m = synthetic_model();
  m.fixed_overhead_ms = 0;
  for (std::int64_t s : {1000, 580604, 3448340}) {
    EXPECT_NEAR(mean_frame_time_ms(m, 2 * s, 0, 20.0), 2 * mean_frame_time_ms(m, s, 0, 20.0), 1e-9);
  }
  EXPECT_DOUBLE_EQ(mean_frame_time_ms(m, 580604, 0, 20.0),
                   m.base_cost_ms * 580604 / (20.0 * 1e6));
}

TEST(Synthetic, MonotoneInThroughputAndSplats) {
  const auto m = synthetic_model();
  double prev = 1e300;
  for (double t = 1; t <= 80; t += 0.5) {
    const double ms = mean_frame_time_ms(m, 1834311, 0, t);
    EXPECT_LT(ms, prev);
    prev = ms;
  }
  prev = 0;
  for (std::int64_t s = 100000; s <= 4000000; s += 100000) {
    const double ms = mean_frame_time_ms(m, s, 0, 26.0);
    EXPECT_GT(ms, prev);
    prev = ms;
  }
  EXPECT_GT(mean_frame_time_ms(m, 580604, 38844, 26.0), mean_frame_time_ms(m, 580604, 0, 26.0));
}

TEST(Synthetic, NoiseIsSeededAndBounded) {
  const auto m = synthetic_model();
  const double mean = mean_frame_time_ms(m, 580604, 0, 13.5);
  for (std::int64_t i = 0; i < 1000; ++i) {
    const double a = synthetic_frame_time_ms(m, 580604, 0, 13.5, 9, i);
    EXPECT_EQ(a, synthetic_frame_time_ms(m, 580604, 0, 13.5, 9, i));
    EXPECT_LE(std::abs(a - mean), mean * m.noise_fraction + 1e-12);
  }
  WorkloadSpec w{{}, 580604, false, 0};
  auto t = synthetic_frames(m, w, 13.5, 9, 2.0);
  EXPECT_LE(t.end(), 2.0);
  EXPECT_EQ(t, synthetic_frames(m, w, 13.5, 9, 2.0));
}

// --- orchestration with real subprocesses -------------------------------------

std::vector<std::string> synth_command(std::vector<std::string> extra = {}) {
  std::vector<std::string> c = {kCli, "synth-workload", "--splats", "{splats}", "--anim-splats", "{anim_splats}"};
  const auto m = synthetic_model();
  for (auto [flag, v] : {std::pair{"--overhead-ms", m.fixed_overhead_ms}, {"--base-cost-ms", m.base_cost_ms},
                         {"--penalty", m.animation_penalty}, {"--noise", m.noise_fraction}}) {
    c.push_back(flag);
    c.push_back(format_exact(v));
  }
  c.insert(c.end(), extra.begin(), extra.end());
  return c;
}

TEST(RunWorkload, TwoSecondRunYieldsAlignedTraces) {
  SimDevice dev = sim_device();
  dev.apply_throttle({285, 1125, 5001});
  WorkloadSpec w{synth_command(), 1834311, false, 0, 1920, 1080, 2.0};
  RunOptions opts;
  opts.sampler_period_s = 0.2;
  auto r = run_workload(w, dev, opts);
  ASSERT_FALSE(r.frames.frames.empty());
  ASSERT_FALSE(r.power.samples.empty());
  const double fspan = r.frames.end() - r.frames.start();
  const double pspan = r.power.end() - r.power.start();
  EXPECT_GE(fspan, 1.8);
  EXPECT_LE(fspan, 2.2);
  // The last sample holds for one period past its timestamp.
  EXPECT_GE(pspan, 2.0 - opts.sampler_period_s);
  EXPECT_LE(pspan, 2.0 + 2 * opts.sampler_period_s);
  const double mean_frame_s = fspan / static_cast<double>(r.frames.frames.size());
  EXPECT_LE(std::abs(fspan - pspan), opts.sampler_period_s + mean_frame_s);
  EXPECT_EQ(r.ignored_lines, 1u);  // the renderer's banner line
  EXPECT_TRUE(validate_envelope(r.power, {285, 1125, 5001}).empty());
  // Frame rate follows the simulated throughput.
  const double expected_fps = 1000.0 / mean_frame_time_ms(synthetic_model(), 1834311, 0,
                                                          sim_noise_free_tflops(dev.model(), {285, 1125, 5001}));
  EXPECT_NEAR(r.frames.frames.size() / fspan, expected_fps, 0.1 * expected_fps);
}

TEST(RunWorkload, CrashIsAPrematureExit) {
  SimDevice dev = sim_device();
  WorkloadSpec w{synth_command({"--crash-after", "0.5"}), 580604, false, 0, 1920, 1080, 3.0};
  try {
    run_workload(w, dev, {.sampler_period_s = 0.2});
    FAIL() << "expected WorkloadError";
  } catch (const WorkloadError& e) {
    EXPECT_EQ(e.failure, WorkloadFailure::premature_exit);
    ASSERT_TRUE(e.status.has_value());
    EXPECT_TRUE(e.status->signaled);
  }
}

TEST(RunWorkload, SilentWorkloadIsAStall) {
  SimDevice dev = sim_device();
  WorkloadSpec w{synth_command({"--stall"}), 580604, false, 0, 1920, 1080, 5.0};
  RunOptions opts;
  opts.sampler_period_s = 0.2;
  opts.stall_timeout = std::chrono::milliseconds(400);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    run_workload(w, dev, opts);
    FAIL() << "expected WorkloadError";
  } catch (const WorkloadError& e) {
    EXPECT_EQ(e.failure, WorkloadFailure::stall);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
}

TEST(RunWorkload, SigtermIgnoringWorkloadIsKilledAfterGrace) {
  TempDir dir;
  auto script = write_script(dir / "stubborn", "trap '' TERM\ni=0\nwhile true; do echo \"F $i $i 10\"; i=$((i+1)); sleep 0.05; done\n");
  SimDevice dev = sim_device();
  WorkloadSpec w{{script.string()}, 580604, false, 0, 1920, 1080, 1.0};
  RunOptions opts;
  opts.sampler_period_s = 0.2;
  opts.grace = std::chrono::milliseconds(300);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_NO_THROW(run_workload(w, dev, opts));
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(4));
}

TEST(RunWorkload, MissingExecutableIsReported) {
  SimDevice dev = sim_device();
  WorkloadSpec w{{"/nonexistent/renderer"}, 580604, false, 0, 1920, 1080, 1.0};
  EXPECT_THROW(run_workload(w, dev, {.sampler_period_s = 0.2}), DomainError);
}

TEST(RunWorkload, TwoMinuteRunAtHundredFps) {
  // 10 ms frames: base cost 10 ms per million splats at 1 TFLOPS.
  SimDevice dev = sim_device();
  WorkloadSpec w{{kCli, "synth-workload", "--splats", "{splats}", "--tflops", "1", "--overhead-ms", "0",
                  "--base-cost-ms", "10", "--noise", "0.05"},
                 1000000, false, 0, 1920, 1080, 120.0};
  auto r = run_workload(w, dev, {});
  EXPECT_NEAR(static_cast<double>(r.frames.frames.size()), 12000.0, 240.0);
}

}  // namespace
}  // namespace gtb
