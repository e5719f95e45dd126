#pragma once

// Sustained-throughput measurement with a GEMM probe, and the core-clock
// search that brings a tier's measured throughput onto its target.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gtb/device.hpp"
#include "gtb/error.hpp"
#include "gtb/model.hpp"
#include "gtb/process.hpp"
#include "gtb/util.hpp"

namespace gtb {

struct ProbeParams {
  std::int64_t m = 8192;
  std::int64_t n = 8192;
  std::int64_t k = 8192;
  std::int64_t iterations = 100;
  std::int64_t warmup_iterations = 10;

  bool operator==(const ProbeParams&) const = default;
};

inline void validate(const ProbeParams& p) {
  if (p.m < 1 || p.n < 1 || p.k < 1 || p.iterations < 1)
    throw DomainError("probe params: m, n, k and iterations must be >= 1");
  if (p.warmup_iterations < 0) throw DomainError("probe params: warmup_iterations must be >= 0");
}

/// 2*m*n*k*iterations; warmup iterations are not counted.
inline std::uint64_t probe_flops(const ProbeParams& p) {
  validate(p);
  std::uint64_t acc = 2;
  for (std::int64_t f : {p.m, p.n, p.k, p.iterations}) {
    if (__builtin_mul_overflow(acc, static_cast<std::uint64_t>(f), &acc))
      throw DomainError("probe flop count overflows 64 bits");
  }
  return acc;
}

struct ProbeResult {
  std::uint64_t flops = 0;
  double elapsed_s = 0;
};

/// Parses the probe contract: exactly one stdout line
/// `GEMM_RESULT flops=<integer> elapsed_s=<decimal>`.
inline ProbeResult parse_probe_output(const std::string& out) {
  auto body = trim(out);
  if (body.empty()) throw DeviceError("probe printed nothing");
  if (body.find('\n') != std::string_view::npos)
    throw DeviceError("probe printed more than one line: '" + std::string(body) + "'");
  auto tok = split_ws(body);
  auto bad = [&] { return DeviceError("malformed probe output: '" + std::string(body) + "'"); };
  if (tok.size() != 3 || tok[0] != "GEMM_RESULT") throw bad();
  if (tok[1].substr(0, 6) != "flops=" || tok[2].substr(0, 10) != "elapsed_s=") throw bad();
  auto flops_text = tok[1].substr(6);
  if (flops_text.empty() || flops_text.find_first_not_of("0123456789") != std::string_view::npos) throw bad();
  std::uint64_t flops = 0;
  auto res = std::from_chars(flops_text.data(), flops_text.data() + flops_text.size(), flops);
  if (res.ec != std::errc{}) throw bad();
  auto elapsed = parse_double(tok[2].substr(10));
  if (!elapsed || !std::isfinite(*elapsed)) throw bad();
  return {flops, *elapsed};
}

class ProbeRunner {
 public:
  virtual ~ProbeRunner() = default;
  virtual ProbeResult run(const ProbeParams& params) = 0;
};

/// Launches `<binary> <m> <n> <k> <iterations> <warmup>`.
class SubprocessProbeRunner : public ProbeRunner {
 public:
  explicit SubprocessProbeRunner(std::string binary) : binary_(std::move(binary)) {}

  ProbeResult run(const ProbeParams& p) override {
    std::vector<std::string> argv = {binary_,
                                     std::to_string(p.m),
                                     std::to_string(p.n),
                                     std::to_string(p.k),
                                     std::to_string(p.iterations),
                                     std::to_string(p.warmup_iterations)};
    CapturedRun r;
    try {
      r = run_capture(argv);
    } catch (const SpawnError& e) {
      throw DeviceError(std::string("probe runner launch failed: ") + e.what());
    }
    if (!r.status.success())
      throw DeviceError("probe '" + join_argv(argv) + "' failed with " + r.status.describe() + ": " +
                        std::string(trim(r.err)));
    return parse_probe_output(r.out);
  }

 private:
  std::string binary_;
};

/// Answers probes from the simulated device's throughput model.
class SimProbeRunner : public ProbeRunner {
 public:
  explicit SimProbeRunner(SimDevice& device) : device_(device) {}

  ProbeResult run(const ProbeParams& p) override {
    const std::uint64_t flops = probe_flops(p);
    const Tflops t = sim_sustained_tflops(device_.model(), device_.effective_config(), device_.next_seed());
    return {flops, static_cast<double>(flops) / (t * 1e12)};
  }

 private:
  SimDevice& device_;
};

inline Tflops tflops_from(std::uint64_t flops, double elapsed_s) {
  if (!(elapsed_s > 0)) throw DomainError("probe elapsed time must be > 0, got " + format_exact(elapsed_s));
  return static_cast<double>(flops) / elapsed_s / 1e12;
}

inline Tflops measure_sustained_tflops(ProbeRunner& runner, const ProbeParams& params) {
  const std::uint64_t expected = probe_flops(params);
  ProbeResult r = runner.run(params);
  if (r.flops != expected)
    throw DeviceError("probe reported flops=" + std::to_string(r.flops) + ", expected " + std::to_string(expected));
  return tflops_from(expected, r.elapsed_s);
}

struct CalibrationReport {
  std::string tier_name;
  Tflops target_tflops = 0;
  ThrottleConfig final_config;
  Tflops measured_tflops = 0;
  double deviation_pct = 0;
  int probes_used = 0;
  bool converged = false;
  std::vector<std::string> warnings;

  bool operator==(const CalibrationReport&) const = default;
};

inline double deviation_pct(Tflops measured, Tflops target) { return 100.0 * (measured - target) / target; }

/// Calibration did not reach tolerance; carries the best candidate found.
struct CalibrationError : DomainError {
  CalibrationError(const std::string& what, CalibrationReport r) : DomainError(what), report(std::move(r)) {}
  CalibrationReport report;
};

struct CalibrationOptions {
  double tolerance_pct = 3.0;
  int max_probes = 12;
  ProbeParams probe;
  double monotonic_slack_pct = 1.0;  // allowed measurement noise before flagging a monotonicity violation
};

/// Bisects the discrete core-clock ladder [step, nominal] for the cap whose
/// measured throughput is within tolerance of `tier.estimated_sustained_tflops`.
/// Power and memory caps stay as planned; every probe re-applies the full config.
/// The first probe is at the top rung; if that already lies below the target's
/// tolerance band the target is unreachable.
inline CalibrationReport calibrate_core_clock(Device& device, ProbeRunner& runner, const TierPlan& tier,
                                              const CalibrationOptions& opts = {}) {
  if (!(opts.tolerance_pct >= 0)) throw DomainError("calibration tolerance must be >= 0");
  if (opts.max_probes < 1) throw DomainError("calibration needs max_probes >= 1");
  if (!(tier.estimated_sustained_tflops > 0)) throw DomainError("calibration target must be > 0 TFLOPS");
  validate(opts.probe);

  const auto ladder = core_clock_ladder(device.host());
  if (ladder.empty()) throw DomainError("host core clock ladder is empty");

  CalibrationReport report;
  report.tier_name = tier.target.name;
  report.target_tflops = tier.estimated_sustained_tflops;

  const double target = report.target_tflops;
  const double tol = opts.tolerance_pct / 100.0;
  const double slack = opts.monotonic_slack_pct / 100.0;
  std::map<std::size_t, Tflops> seen;  // ladder index -> measured
  std::optional<std::size_t> best;

  auto within = [&](Tflops m) { return std::abs(m - target) / target <= tol; };

  auto probe = [&](std::size_t idx) {
    ThrottleConfig cfg = tier.throttle;
    cfg.core_clock_cap_mhz = ladder[idx];
    device.apply_throttle(cfg);
    const Tflops m = measure_sustained_tflops(runner, opts.probe);
    ++report.probes_used;
    for (const auto& [j, mj] : seen) {
      const bool violated = (j < idx && mj > m * (1 + slack)) || (j > idx && mj < m * (1 - slack));
      if (violated)
        report.warnings.push_back("non-monotone throughput: " + std::to_string(ladder[j]) + " MHz -> " +
                                  format_fixed(mj, 3) + " TFLOPS vs " + std::to_string(ladder[idx]) + " MHz -> " +
                                  format_fixed(m, 3) + " TFLOPS");
    }
    seen[idx] = m;
    if (!best || std::abs(m - target) < std::abs(seen[*best] - target)) best = idx;
    return m;
  };

  auto finish = [&](bool converged) {
    ThrottleConfig cfg = tier.throttle;
    cfg.core_clock_cap_mhz = ladder[*best];
    report.final_config = cfg;
    report.measured_tflops = seen[*best];
    report.deviation_pct = deviation_pct(report.measured_tflops, target);
    report.converged = converged;
    if (device.handle().applied != cfg) device.apply_throttle(cfg);
    return report;
  };

  std::size_t top = ladder.size() - 1;
  Tflops m = probe(top);
  if (within(m)) return finish(true);
  if (m < target) {
    finish(false);
    throw CalibrationError("tier '" + tier.target.name + "': target " + format_fixed(target, 2) +
                               " TFLOPS is above the achievable maximum " + format_fixed(m, 2) + " TFLOPS at " +
                               std::to_string(ladder[top]) + " MHz",
                           report);
  }

  std::ptrdiff_t lo = 0;
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(top) - 1;
  while (lo <= hi && report.probes_used < opts.max_probes) {
    const std::ptrdiff_t mid = lo + (hi - lo) / 2;
    m = probe(static_cast<std::size_t>(mid));
    if (within(m)) return finish(true);
    if (m < target) {
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  finish(false);
  throw CalibrationError("tier '" + tier.target.name + "': no core clock within " + format_fixed(opts.tolerance_pct, 1) +
                             "% of " + format_fixed(target, 2) + " TFLOPS after " +
                             std::to_string(report.probes_used) + " probes; best " +
                             std::to_string(report.final_config.core_clock_cap_mhz) + " MHz at " +
                             format_fixed(report.deviation_pct, 2) + "%",
                         report);
}

/// Re-measures at the report's config, which must be the one currently applied.
inline CalibrationReport verify_tier(Device& device, ProbeRunner& runner, CalibrationReport report,
                                     const ProbeParams& params) {
  if (device.handle().applied != report.final_config)
    throw DomainError("verify_tier: device does not have the calibrated config applied (" +
                      describe(report.final_config) + ")");
  report.measured_tflops = measure_sustained_tflops(runner, params);
  report.deviation_pct = deviation_pct(report.measured_tflops, report.target_tflops);
  return report;
}

}  // namespace gtb
