#pragma once

// Reference GPU specifications and the derivation of emulation tier plans.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gtb/error.hpp"
#include "gtb/util.hpp"

namespace gtb {

struct GpuSpec {
  std::string name;          // database key, e.g. "rtx3050"
  std::string display_name;  // e.g. "RTX 3050"; falls back to name
  Tflops theoretical_fp32_tflops = 0;
  Watts nominal_power_w = 0;
  Mhz nominal_core_clock_mhz = 0;
  double nominal_mem_bandwidth_gbs = 0;
  std::optional<Mhz> nominal_mem_clock_mhz;  // host device only
  std::optional<Watts> power_override_w;     // per-tier emulated power, when it departs from nominal

  const std::string& label() const { return display_name.empty() ? name : display_name; }
  bool operator==(const GpuSpec&) const = default;
};

struct HostProfile {
  GpuSpec spec;
  std::vector<Mhz> supported_mem_clocks_mhz;  // ascending
  Mhz supported_core_clock_step_mhz = 15;
  Watts min_power_cap_w = 0;
  Watts max_power_cap_w = 0;

  bool operator==(const HostProfile&) const = default;
};

struct ThrottleConfig {
  Watts power_cap_w = 0;
  Mhz core_clock_cap_mhz = 0;
  Mhz mem_clock_cap_mhz = 0;

  bool operator==(const ThrottleConfig&) const = default;
};

struct TierPlan {
  GpuSpec target;
  Tflops estimated_sustained_tflops = 0;
  Mhz required_mem_clock_mhz = 0;
  ThrottleConfig throttle;
  double mem_clock_deviation_pct = 0;
};

inline void validate(const GpuSpec& g) {
  if (g.name.empty()) throw DomainError("gpu spec has an empty name");
  auto positive = [&](double v, const char* field) {
    if (!(v > 0)) throw DomainError("gpu spec '" + g.name + "': " + field + " must be > 0");
  };
  positive(g.theoretical_fp32_tflops, "theoretical_fp32_tflops");
  positive(g.nominal_power_w, "nominal_power_w");
  positive(g.nominal_core_clock_mhz, "nominal_core_clock_mhz");
  positive(g.nominal_mem_bandwidth_gbs, "nominal_mem_bandwidth_gbs");
  if (g.nominal_mem_clock_mhz) positive(*g.nominal_mem_clock_mhz, "nominal_mem_clock_mhz");
  if (g.power_override_w) positive(*g.power_override_w, "power_override_w");
}

inline void validate(const HostProfile& h) {
  validate(h.spec);
  if (!h.spec.nominal_mem_clock_mhz)
    throw DomainError("host '" + h.spec.name + "' needs nominal_mem_clock_mhz");
  const auto& mem = h.supported_mem_clocks_mhz;
  if (mem.empty()) throw DomainError("host '" + h.spec.name + "' has no supported memory clocks");
  if (!std::is_sorted(mem.begin(), mem.end()) || std::adjacent_find(mem.begin(), mem.end()) != mem.end())
    throw DomainError("host '" + h.spec.name + "' supported memory clocks must be strictly ascending");
  if (!std::binary_search(mem.begin(), mem.end(), *h.spec.nominal_mem_clock_mhz))
    throw DomainError("host '" + h.spec.name + "' supported memory clocks must contain the nominal memory clock");
  if (h.supported_core_clock_step_mhz <= 0)
    throw DomainError("host '" + h.spec.name + "' core clock step must be > 0");
  if (!(h.min_power_cap_w > 0) || h.min_power_cap_w > h.max_power_cap_w)
    throw DomainError("host '" + h.spec.name + "' needs 0 < min_power_cap_w <= max_power_cap_w");
}

/// Core-clock caps the host accepts: step, 2*step, ..., up to the nominal clock.
inline std::vector<Mhz> core_clock_ladder(const HostProfile& host) {
  std::vector<Mhz> rungs;
  const Mhz step = host.supported_core_clock_step_mhz;
  for (Mhz c = step; c <= host.spec.nominal_core_clock_mhz; c += step) rungs.push_back(c);
  return rungs;
}

inline std::string describe(const ThrottleConfig& c) {
  return format_fixed(c.power_cap_w, 0) + " W, core " + std::to_string(c.core_clock_cap_mhz) + " MHz, mem " +
         std::to_string(c.mem_clock_cap_mhz) + " MHz";
}

/// Nearest supported values around `value`, for error messages.
inline std::string nearest_values(const std::vector<Mhz>& sorted, Mhz value) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), value);
  std::string out;
  if (it != sorted.begin()) out += std::to_string(*std::prev(it));
  if (it != sorted.end()) {
    if (!out.empty()) out += ", ";
    out += std::to_string(*it);
  }
  return out;
}

/// Throws DomainError naming the first violated invariant.
inline void validate(const ThrottleConfig& c, const HostProfile& host) {
  if (c.power_cap_w < host.min_power_cap_w || c.power_cap_w > host.max_power_cap_w)
    throw DomainError("power cap " + format_fixed(c.power_cap_w, 1) + " W outside settable range [" +
                      format_fixed(host.min_power_cap_w, 1) + ", " + format_fixed(host.max_power_cap_w, 1) + "] W");
  const auto& mem = host.supported_mem_clocks_mhz;
  if (!std::binary_search(mem.begin(), mem.end(), c.mem_clock_cap_mhz))
    throw DomainError("unsupported memory clock " + std::to_string(c.mem_clock_cap_mhz) +
                      " MHz; nearest supported: " + nearest_values(mem, c.mem_clock_cap_mhz));
  const Mhz step = host.supported_core_clock_step_mhz;
  if (c.core_clock_cap_mhz <= 0 || c.core_clock_cap_mhz % step != 0)
    throw DomainError("unsupported core clock " + std::to_string(c.core_clock_cap_mhz) + " MHz (must be a multiple of " +
                      std::to_string(step) + "); nearest supported: " +
                      nearest_values(core_clock_ladder(host), c.core_clock_cap_mhz));
}

inline ThrottleConfig nominal_config(const HostProfile& host) {
  return {host.spec.nominal_power_w, host.spec.nominal_core_clock_mhz, host.spec.nominal_mem_clock_mhz.value_or(0)};
}

// Sustained throughput is estimated as exactly 2/3 of the theoretical peak.
inline Tflops estimate_sustained_tflops(Tflops theoretical) {
  if (theoretical < 0 || std::isnan(theoretical))
    throw DomainError("theoretical TFLOPS must be >= 0, got " + format_exact(theoretical));
  return theoretical * 2.0 / 3.0;
}

/// Memory clock the host must run at so its bandwidth matches the target's,
/// assuming bandwidth scales linearly with memory clock. Rounded down.
inline Mhz required_mem_clock(double target_bw_gbs, double ref_bw_gbs, Mhz ref_mem_clock_mhz) {
  if (!(target_bw_gbs > 0) || !(ref_bw_gbs > 0) || ref_mem_clock_mhz <= 0)
    throw DomainError("required_mem_clock: bandwidths and reference clock must be > 0");
  long double exact = static_cast<long double>(ref_mem_clock_mhz) * target_bw_gbs / ref_bw_gbs;
  return static_cast<Mhz>(std::floor(exact + 1e-9L));
}

struct SnappedClock {
  Mhz clock_mhz = 0;
  double deviation_pct = 0;  // signed, relative to the required clock
};

/// Picks a supported memory clock for `required`.
///
/// The largest supported clock at or below `required` wins if it is within
/// `below_threshold_pct` of it; otherwise the smallest clock above `required`;
/// otherwise the maximum supported clock.
inline SnappedClock snap_mem_clock(Mhz required, const std::vector<Mhz>& supported,
                                   double below_threshold_pct = 5.0) {
  if (supported.empty()) throw DomainError("snap_mem_clock: supported clock set is empty");
  if (required <= 0) throw DomainError("snap_mem_clock: required clock must be > 0");
  std::vector<Mhz> sorted = supported;
  std::sort(sorted.begin(), sorted.end());

  Mhz chosen = sorted.back();
  auto above = std::lower_bound(sorted.begin(), sorted.end(), required);
  std::optional<Mhz> below;
  if (above != sorted.end() && *above == required) {
    below = required;
  } else if (above != sorted.begin()) {
    below = *std::prev(above);
  }
  if (below && 100.0 * (required - *below) / required <= below_threshold_pct) {
    chosen = *below;
  } else if (above != sorted.end()) {
    chosen = *above;
  }
  return {chosen, 100.0 * (chosen - required) / static_cast<double>(required)};
}

inline Watts clamp_power(Watts w, const HostProfile& host) {
  return std::clamp(w, host.min_power_cap_w, host.max_power_cap_w);
}

/// Builds the throttle plan for emulating `target` on `host`. The core clock
/// starts at the host's nominal value; calibration refines it afterwards.
/// An explicit `power_override_w` takes precedence over the target's own
/// override, which takes precedence over its nominal power.
inline TierPlan derive_tier(const GpuSpec& target, const HostProfile& host,
                            std::optional<Watts> power_override_w = std::nullopt,
                            double snap_threshold_pct = 5.0) {
  validate(target);
  validate(host);
  TierPlan plan;
  plan.target = target;
  plan.estimated_sustained_tflops = estimate_sustained_tflops(target.theoretical_fp32_tflops);
  plan.required_mem_clock_mhz = required_mem_clock(target.nominal_mem_bandwidth_gbs,
                                                   host.spec.nominal_mem_bandwidth_gbs,
                                                   *host.spec.nominal_mem_clock_mhz);
  auto snapped = snap_mem_clock(plan.required_mem_clock_mhz, host.supported_mem_clocks_mhz, snap_threshold_pct);
  plan.mem_clock_deviation_pct = snapped.deviation_pct;

  Watts power = target.nominal_power_w;
  if (power_override_w) {
    power = *power_override_w;
  } else if (target.power_override_w) {
    power = *target.power_override_w;
  }
  plan.throttle = {clamp_power(power, host), host.spec.nominal_core_clock_mhz, snapped.clock_mhz};
  return plan;
}

}  // namespace gtb
