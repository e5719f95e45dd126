#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "test_support.hpp"

namespace gtb {
namespace {

using namespace gtb::testing;

TEST(ProbeFlops, ExactIntegers) {
  EXPECT_EQ(probe_flops({}), 109951162777600ULL);  // 2 * 8192^3 * 100
  EXPECT_EQ(probe_flops({2, 3, 4, 10, 0}), 480u);
  EXPECT_EQ(probe_flops({1, 1, 1, 1, 0}), 2u);
  EXPECT_THROW(probe_flops({0, 1, 1, 1, 0}), DomainError);
  EXPECT_THROW(probe_flops({1, 1, 1, 1, -1}), DomainError);
  EXPECT_THROW(probe_flops({1LL << 30, 1LL << 30, 1LL << 30, 1, 0}), DomainError);
}

TEST(ProbeFlops, MultiplicativeInEachDimension) {
  const ProbeParams base{3, 5, 7, 11, 0};
  for (std::int64_t f = 1; f <= 64; ++f) {
    EXPECT_EQ(probe_flops({base.m * f, base.n, base.k, base.iterations, 0}), probe_flops(base) * f);
    EXPECT_EQ(probe_flops({base.m, base.n * f, base.k, base.iterations, 0}), probe_flops(base) * f);
    EXPECT_EQ(probe_flops({base.m, base.n, base.k * f, base.iterations, 0}), probe_flops(base) * f);
    EXPECT_EQ(probe_flops({base.m, base.n, base.k, base.iterations * f, 0}), probe_flops(base) * f);
  }
}

TEST(ProbeOutput, ParsesContractLine) {
  auto r = parse_probe_output("GEMM_RESULT flops=109951162777600 elapsed_s=2.0\n");
  EXPECT_EQ(r.flops, 109951162777600ULL);
  EXPECT_DOUBLE_EQ(r.elapsed_s, 2.0);
  EXPECT_NEAR(tflops_from(r.flops, r.elapsed_s), 54.9755813888, 1e-9);
}

TEST(ProbeOutput, RejectsAnythingElse) {
  for (const char* bad : {"", "GEMM_RESULT flops=1\n", "GEMM_RESULT flops=1.5 elapsed_s=1\n",
                          "GEMM_RESULT flops=-3 elapsed_s=1\n", "GEMM_RESULT elapsed_s=1 flops=2\n",
                          "RESULT flops=2 elapsed_s=1\n", "GEMM_RESULT flops=2 elapsed_s=1\nGEMM_RESULT flops=2 elapsed_s=1\n",
                          "GEMM_RESULT flops=2 elapsed_s=abc\n"}) {
    EXPECT_THROW(parse_probe_output(bad), DeviceError) << bad;
  }
}

TEST(Measure, ZeroElapsedIsADomainError) {
  struct Instant : ProbeRunner {
    ProbeResult run(const ProbeParams& p) override { return {probe_flops(p), 0.0}; }
  } r;
  EXPECT_THROW(measure_sustained_tflops(r, {}), DomainError);
}

class SubprocessProbe : public ::testing::Test {
 protected:
  TempDir dir;
};

TEST_F(SubprocessProbe, PassesParamsPositionallyAndParsesResult) {
  // Stand-in probe: computes the flop count in shell arithmetic and claims 2 s.
  auto bin = write_script(dir / "probe",
                          "echo \"$@\" > '" + (dir / "args").string() + "'\n"
                          "echo \"GEMM_RESULT flops=$((2 * $1 * $2 * $3 * $4)) elapsed_s=2.0\"\n");
  SubprocessProbeRunner runner(bin.string());
  EXPECT_NEAR(measure_sustained_tflops(runner, {}), 54.9755813888, 1e-9);
  EXPECT_EQ(read_file(dir / "args"), "8192 8192 8192 100 10\n");
}

TEST_F(SubprocessProbe, FailuresAreDeviceErrors) {
  SubprocessProbeRunner nonzero(write_script(dir / "fail", "echo 'no device' >&2\nexit 64\n").string());
  EXPECT_THROW(measure_sustained_tflops(nonzero, {}), DeviceError);
  SubprocessProbeRunner wrong(write_script(dir / "wrong", "echo 'GEMM_RESULT flops=7 elapsed_s=1'\n").string());
  EXPECT_THROW(measure_sustained_tflops(wrong, {}), DeviceError);
  SubprocessProbeRunner missing((dir / "absent").string());
  EXPECT_THROW(measure_sustained_tflops(missing, {}), DeviceError);
}

TEST(Calibrate, AllTiersConvergeOnSimulatedDevice) {
  for (const auto& g : spec_db().gpus()) {
    SCOPED_TRACE(g.name);
    SimDevice dev = sim_device();
    SimProbeRunner runner(dev);
    auto report = calibrate_core_clock(dev, runner, derive_tier(g, host()));
    EXPECT_TRUE(report.converged);
    EXPECT_LE(std::abs(report.deviation_pct), 3.0);
    EXPECT_LE(report.probes_used, 12);
    EXPECT_TRUE(report.warnings.empty());
    EXPECT_EQ(dev.handle().applied, report.final_config);
    auto verified = verify_tier(dev, runner, report, {});
    EXPECT_DOUBLE_EQ(verified.measured_tflops, report.measured_tflops);  // noise-free model
  }
}

TEST(Calibrate, KnownOutcomes) {
  SimDevice dev = sim_device();
  SimProbeRunner runner(dev);
  auto r4090 = calibrate_core_clock(dev, runner, derive_tier(spec_db().gpu("rtx4090"), host()));
  EXPECT_EQ(r4090.final_config, (ThrottleConfig{450, 2520, 10501}));
  EXPECT_EQ(r4090.probes_used, 1);
  auto r3050 = calibrate_core_clock(dev, runner, derive_tier(spec_db().gpu("rtx3050"), host()));
  EXPECT_EQ(r3050.final_config, (ThrottleConfig{150, 255, 5001}));
}

TEST(Calibrate, ProbeBoundForReachableTargets) {
  // Noise-free and monotone: any target some rung hits within tolerance is found in
  // ceil(log2(168)) + 2 = 10 probes.
  SimDevice dev = sim_device();
  SimProbeRunner runner(dev);
  const ThrottleConfig fixed{450, 2520, 10501};
  const auto ladder = core_clock_ladder(host());
  const std::size_t bound = static_cast<std::size_t>(std::ceil(std::log2(ladder.size()))) + 2;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> target(8.0, 54.0);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    TierPlan plan;
    plan.target.name = "t" + std::to_string(i);
    plan.estimated_sustained_tflops = target(rng);
    plan.throttle = fixed;
    bool reachable = false;
    for (Mhz c : ladder) {
      const double t = sim_noise_free_tflops(dev.model(), {fixed.power_cap_w, c, fixed.mem_clock_cap_mhz});
      reachable |= std::abs(t - plan.estimated_sustained_tflops) / plan.estimated_sustained_tflops <= 0.03;
    }
    if (!reachable) continue;
    ++checked;
    auto r = calibrate_core_clock(dev, runner, plan);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(static_cast<std::size_t>(r.probes_used), bound);
  }
  EXPECT_GT(checked, 250);
}

TEST(Calibrate, UnreachableTargetFailsWithBestCandidate) {
  SimDevice dev = sim_device();
  SimProbeRunner runner(dev);
  TierPlan plan = derive_tier(spec_db().gpu("rtx4090"), host());
  plan.estimated_sustained_tflops = 80.0;
  try {
    calibrate_core_clock(dev, runner, plan);
    FAIL() << "expected CalibrationError";
  } catch (const CalibrationError& e) {
    EXPECT_FALSE(e.report.converged);
    EXPECT_EQ(e.report.final_config.core_clock_cap_mhz, 2520);
    EXPECT_LT(e.report.deviation_pct, -3.0);
  }
}

TEST(Calibrate, ExhaustedProbeBudgetFails) {
  SimDevice dev = sim_device();
  SimProbeRunner runner(dev);
  CalibrationOptions opts;
  opts.max_probes = 3;
  try {
    calibrate_core_clock(dev, runner, derive_tier(spec_db().gpu("rtx3050"), host()), opts);
    FAIL() << "expected CalibrationError";
  } catch (const CalibrationError& e) {
    EXPECT_EQ(e.report.probes_used, 3);
    EXPECT_FALSE(e.report.converged);
  }
}

// Answers from a caller-supplied function of the core cap currently applied.
class ScriptedRunner : public ProbeRunner {
 public:
  ScriptedRunner(Device& dev, std::function<double(Mhz)> f) : dev_(dev), f_(std::move(f)) {}
  ProbeResult run(const ProbeParams& p) override {
    ++calls;
    last_applied = dev_.handle().applied;
    const double t = f_(dev_.handle().applied->core_clock_cap_mhz);
    return {probe_flops(p), static_cast<double>(probe_flops(p)) / (t * 1e12)};
  }
  int calls = 0;
  std::optional<ThrottleConfig> last_applied;

 private:
  Device& dev_;
  std::function<double(Mhz)> f_;
};

TEST(Calibrate, NonMonotoneMeasurementsAreWarnedAbout) {
  SimDevice dev = sim_device();
  // Linear in the clock except for a spike around 1260 MHz that beats the top rung.
  ScriptedRunner runner(dev, [](Mhz c) { return (c >= 1200 && c <= 1300) ? 30.0 : c / 100.0; });
  TierPlan plan = derive_tier(spec_db().gpu("rtx4090"), host());
  plan.estimated_sustained_tflops = 6.0;
  auto r = calibrate_core_clock(dev, runner, plan);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.front().find("non-monotone"), std::string::npos);
}

TEST(Calibrate, EveryProbeSeesTheFullPlannedConfig) {
  SimDevice dev = sim_device();
  TierPlan plan = derive_tier(spec_db().gpu("rtx3070"), host());
  std::vector<ThrottleConfig> seen;
  ScriptedRunner runner(dev, [&](Mhz c) {
    seen.push_back(*dev.handle().applied);
    return c / 40.0;
  });
  calibrate_core_clock(dev, runner, plan);
  ASSERT_FALSE(seen.empty());
  for (const auto& c : seen) {
    EXPECT_EQ(c.power_cap_w, plan.throttle.power_cap_w);
    EXPECT_EQ(c.mem_clock_cap_mhz, plan.throttle.mem_clock_cap_mhz);
  }
}

TEST(VerifyTier, RequiresCalibratedConfigApplied) {
  SimDevice dev = sim_device();
  SimProbeRunner runner(dev);
  auto report = calibrate_core_clock(dev, runner, derive_tier(spec_db().gpu("rtx3050"), host()));
  dev.reset_throttle();
  EXPECT_THROW(verify_tier(dev, runner, report, {}), DomainError);
  dev.apply_throttle(report.final_config);
  EXPECT_NO_THROW(verify_tier(dev, runner, report, {}));
}

}  // namespace
}  // namespace gtb
