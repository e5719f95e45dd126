#pragma once

// Frame-rate statistics, energy metrics and aggregation of repeated runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "gtb/error.hpp"
#include "gtb/workload.hpp"

namespace gtb {

struct FpsStats {
  double mean_fps = 0;
  double sd_fps = 0;
  std::int64_t bucket_count = 0;
  std::int64_t total_frames = 0;

  bool operator==(const FpsStats&) const = default;
};

struct EnergyMetrics {
  Watts p_avg_w = 0;
  double energy_per_frame_j = 0;
  double perf_per_watt = 0;

  bool operator==(const EnergyMetrics&) const = default;
};

/// Number of whole buckets of width `bucket_s` that fit in `span`.
/// Spans within a part-per-billion of a multiple count as that multiple.
inline std::int64_t complete_buckets(double span, double bucket_s) {
  auto n = static_cast<std::int64_t>(std::floor(span / bucket_s + 1e-9));
  return std::max<std::int64_t>(n, 0);
}

/// Index of the bucket [k*b, (k+1)*b) containing offset `dt`.
inline std::int64_t bucket_index(double dt, double bucket_s) {
  auto k = static_cast<std::int64_t>(std::floor(dt / bucket_s));
  while (k > 0 && static_cast<double>(k) * bucket_s > dt) --k;
  while (static_cast<double>(k + 1) * bucket_s <= dt) ++k;
  return k;
}

/// FPS per bucket of width `bucket_s`, counted by frame start time from the
/// first frame. The trailing partial bucket is dropped; SD is the population SD.
inline FpsStats fps_stats(const FrameTrace& trace, double bucket_s = 1.0) {
  if (trace.frames.empty()) throw DomainError("fps_stats: empty frame trace");
  if (!(bucket_s > 0)) throw DomainError("fps_stats: bucket width must be > 0");
  const double t0 = trace.start();
  const std::int64_t n = complete_buckets(trace.end() - t0, bucket_s);
  if (n < 2)
    throw DomainError("fps_stats: need at least 2 complete buckets of " + format_exact(bucket_s) + " s, trace spans " +
                      format_fixed(trace.end() - t0, 3) + " s");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
  for (const auto& f : trace.frames) {
    const std::int64_t k = bucket_index(f.t_start_s - t0, bucket_s);
    if (k < n) ++counts[static_cast<std::size_t>(k)];
  }
  FpsStats st;
  st.bucket_count = n;
  double sum = 0;
  for (auto c : counts) {
    st.total_frames += c;
    sum += static_cast<double>(c) / bucket_s;
  }
  st.mean_fps = sum / static_cast<double>(n);
  double sq = 0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) / bucket_s - st.mean_fps;
    sq += d * d;
  }
  st.sd_fps = std::sqrt(sq / static_cast<double>(n));
  return st;
}

// E_frame = P_avg / FPS, in joules per frame.
inline double energy_per_frame(Watts p_avg_w, double fps) {
  if (!(fps > 0)) throw DomainError("energy_per_frame: FPS must be > 0");
  if (p_avg_w < 0) throw DomainError("energy_per_frame: power must be >= 0");
  return p_avg_w / fps;
}

// eta = FPS / P_avg, in frames per second per watt.
inline double perf_per_watt(double fps, Watts p_avg_w) {
  if (!(p_avg_w > 0)) throw DomainError("perf_per_watt: power must be > 0");
  return fps / p_avg_w;
}

inline EnergyMetrics energy_metrics(Watts p_avg_w, double fps) {
  return {p_avg_w, energy_per_frame(p_avg_w, fps), perf_per_watt(fps, p_avg_w)};
}

struct RunRecord {
  std::string tier_name;
  std::int64_t splat_count = 0;
  bool animated = false;
  std::int64_t animated_splats = 0;
  int repeat_index = 0;
  int repeats = 1;  // runs folded into this record
  double duration_s = 0;
  FpsStats fps;
  EnergyMetrics energy;
  std::int64_t violations = 0;
  std::string started_at;
  std::string finished_at;

  std::int64_t total_splats() const { return splat_count + (animated ? animated_splats : 0); }
  bool operator==(const RunRecord&) const = default;
};

struct RunKey {
  std::string tier_name;
  std::int64_t splat_count = 0;
  bool animated = false;
  int repeat_index = 0;

  auto operator<=>(const RunKey&) const = default;
};

inline RunKey key_of(const RunRecord& r) { return {r.tier_name, r.splat_count, r.animated, r.repeat_index}; }

/// Folds repeats of one (tier, splats, animation) cell into one record.
///
/// FPS and power are means of the per-run means; the SD is pooled
/// (bucket-count-weighted RMS of per-run SDs); energy metrics are recomputed
/// from the aggregated power and FPS. Bucket, frame, violation and repeat
/// counts add up; duration is the mean run length. Inputs are folded in
/// repeat order, so the result does not depend on their order.
inline RunRecord aggregate_repeats(std::vector<RunRecord> records) {
  if (records.empty()) throw DomainError("aggregate_repeats: no records");
  for (const auto& r : records) {
    if (r.tier_name != records.front().tier_name || r.splat_count != records.front().splat_count ||
        r.animated != records.front().animated)
      throw DomainError("aggregate_repeats: records belong to different (tier, splats, animation) cells");
  }
  if (records.size() == 1) return records.front();
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.repeat_index, a.started_at, a.fps.mean_fps, a.energy.p_avg_w) <
           std::tie(b.repeat_index, b.started_at, b.fps.mean_fps, b.energy.p_avg_w);
  });

  RunRecord agg = records.front();
  agg.repeats = 0;
  agg.fps = {};
  agg.violations = 0;
  double fps_sum = 0, power_sum = 0, duration_sum = 0, var_weighted = 0;
  for (const auto& r : records) {
    fps_sum += r.fps.mean_fps;
    power_sum += r.energy.p_avg_w;
    duration_sum += r.duration_s;
    var_weighted += static_cast<double>(r.fps.bucket_count) * r.fps.sd_fps * r.fps.sd_fps;
    agg.fps.bucket_count += r.fps.bucket_count;
    agg.fps.total_frames += r.fps.total_frames;
    agg.violations += r.violations;
    agg.repeats += r.repeats;
    agg.started_at = std::min(agg.started_at, r.started_at);
    agg.finished_at = std::max(agg.finished_at, r.finished_at);
  }
  const double n = static_cast<double>(records.size());
  agg.fps.mean_fps = fps_sum / n;
  agg.fps.sd_fps = agg.fps.bucket_count > 0 ? std::sqrt(var_weighted / static_cast<double>(agg.fps.bucket_count)) : 0.0;
  agg.duration_s = duration_sum / n;
  agg.energy = energy_metrics(power_sum / n, agg.fps.mean_fps);
  return agg;
}

}  // namespace gtb
