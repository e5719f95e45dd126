#pragma once

// Workload runs: the frame-log protocol, the synthetic renderer model and the
// orchestration of one timed run with concurrent telemetry.
//
// Frame-log protocol: the workload prints `F <frame_index> <t_start_s> <frame_time_ms>`
// lines on standard output (ASCII, space separated, newline terminated). All
// other output is ignored.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gtb/device.hpp"
#include "gtb/error.hpp"
#include "gtb/process.hpp"
#include "gtb/telemetry.hpp"
#include "gtb/util.hpp"

namespace gtb {

struct WorkloadSpec {
  std::vector<std::string> command;  // may contain {splats} {animated} {anim_splats} {width} {height}
  std::int64_t splat_count = 0;
  bool animated = false;
  std::int64_t animated_splats = 0;
  int width = 1920;
  int height = 1080;
  double duration_s = 120.0;

  std::int64_t total_splats() const { return splat_count + (animated ? animated_splats : 0); }
  bool operator==(const WorkloadSpec&) const = default;
};

inline void validate(const WorkloadSpec& w) {
  if (w.splat_count <= 0) throw DomainError("workload: splat_count must be > 0");
  if (!(w.duration_s > 0)) throw DomainError("workload: duration_s must be > 0");
  if (w.animated != (w.animated_splats > 0))
    throw DomainError("workload: animated_splats must be > 0 exactly when animated");
  if (w.width <= 0 || w.height <= 0) throw DomainError("workload: resolution must be positive");
}

inline std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

inline std::vector<std::string> expand_command(const WorkloadSpec& w) {
  std::vector<std::string> out;
  for (auto tok : w.command) {
    tok = replace_all(std::move(tok), "{splats}", std::to_string(w.splat_count));
    tok = replace_all(std::move(tok), "{animated}", w.animated ? "1" : "0");
    tok = replace_all(std::move(tok), "{anim_splats}", std::to_string(w.animated ? w.animated_splats : 0));
    tok = replace_all(std::move(tok), "{width}", std::to_string(w.width));
    tok = replace_all(std::move(tok), "{height}", std::to_string(w.height));
    out.push_back(std::move(tok));
  }
  return out;
}

struct FrameEntry {
  std::int64_t index = 0;
  double t_start_s = 0;
  double frame_time_ms = 0;

  double end_s() const { return t_start_s + frame_time_ms / 1000.0; }
  bool operator==(const FrameEntry&) const = default;
};

struct FrameTrace {
  std::vector<FrameEntry> frames;

  double start() const { return frames.empty() ? 0.0 : frames.front().t_start_s; }
  double end() const { return frames.empty() ? 0.0 : frames.back().end_s(); }
  bool operator==(const FrameTrace&) const = default;
};

/// Parses one protocol line; nullopt for anything else.
inline std::optional<FrameEntry> parse_frame_line(std::string_view line) {
  auto tok = split_ws(trim(line));
  if (tok.size() != 4 || tok[0] != "F") return std::nullopt;
  auto idx = parse_int(tok[1]);
  auto t = parse_double(tok[2]);
  auto ms = parse_double(tok[3]);
  if (!idx || !t || !ms || !std::isfinite(*t) || !std::isfinite(*ms) || !(*ms > 0)) return std::nullopt;
  return FrameEntry{*idx, *t, *ms};
}

struct FrameLogResult {
  FrameTrace trace;
  std::size_t ignored_lines = 0;
};

class FrameLogParser {
 public:
  void feed(std::string_view line) {
    auto f = parse_frame_line(line);
    if (!f) {
      ++result_.ignored_lines;
      return;
    }
    auto& frames = result_.trace.frames;
    if (!frames.empty() && f->index <= frames.back().index)
      throw DomainError("frame log: frame index " + std::to_string(f->index) + " follows " +
                        std::to_string(frames.back().index) + " (indices must increase)");
    frames.push_back(*f);
  }

  std::size_t frame_count() const { return result_.trace.frames.size(); }

  FrameLogResult finish() const {
    if (result_.trace.frames.empty()) throw DomainError("frame log contained no frames");
    return result_;
  }

 private:
  FrameLogResult result_;
};

inline FrameLogResult parse_frame_log(std::istream& in) {
  FrameLogParser p;
  std::string line;
  while (std::getline(in, line)) p.feed(line);
  return p.finish();
}

inline FrameLogResult parse_frame_log(const std::string& text) {
  std::istringstream in(text);
  return parse_frame_log(in);
}

inline std::string frame_line(const FrameEntry& f) {
  return "F " + std::to_string(f.index) + " " + format_exact(f.t_start_s) + " " + format_exact(f.frame_time_ms) + "\n";
}

inline std::string serialize_frame_log(const FrameTrace& trace) {
  std::string out;
  for (const auto& f : trace.frames) out += frame_line(f);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic renderer

/// frame_time_ms = fixed_overhead_ms
///               + base_cost_ms * (splats + animation_penalty * animated_splats) / (tflops * 1e6)
struct SyntheticWorkloadModel {
  double fixed_overhead_ms = 0;
  double base_cost_ms = 1;
  double animation_penalty = 0;
  double noise_fraction = 0;

  bool operator==(const SyntheticWorkloadModel&) const = default;
};

inline SyntheticWorkloadModel synthetic_model_from_json(const nlohmann::json& j) {
  SyntheticWorkloadModel m;
  m.fixed_overhead_ms = j.value("fixed_overhead_ms", 0.0);
  m.base_cost_ms = j.value("base_cost_ms", 1.0);
  m.animation_penalty = j.value("animation_penalty", 0.0);
  m.noise_fraction = j.value("noise_fraction", 0.0);
  if (m.fixed_overhead_ms < 0 || !(m.base_cost_ms > 0) || m.animation_penalty < 0 || m.noise_fraction < 0 ||
      m.noise_fraction >= 1)
    throw DomainError("synthetic workload model: constants out of range");
  return m;
}

inline double mean_frame_time_ms(const SyntheticWorkloadModel& m, std::int64_t splats, std::int64_t animated_splats,
                                 Tflops tflops) {
  if (!(tflops > 0)) throw DomainError("synthetic workload: tier TFLOPS must be > 0");
  const double work = static_cast<double>(splats) + m.animation_penalty * static_cast<double>(animated_splats);
  return m.fixed_overhead_ms + m.base_cost_ms * work / (tflops * 1e6);
}

inline double synthetic_frame_time_ms(const SyntheticWorkloadModel& m, std::int64_t splats,
                                      std::int64_t animated_splats, Tflops tflops, std::uint64_t seed,
                                      std::int64_t frame) {
  const double eps = m.noise_fraction * seeded_unit_noise(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(frame));
  return mean_frame_time_ms(m, splats, animated_splats, tflops) * (1.0 + eps);
}

/// Frames the synthetic renderer would emit over `duration_s`, back to back from t=0.
inline FrameTrace synthetic_frames(const SyntheticWorkloadModel& m, const WorkloadSpec& w, Tflops tflops,
                                   std::uint64_t seed, double duration_s) {
  FrameTrace trace;
  const std::int64_t anim = w.animated ? w.animated_splats : 0;
  double t = 0;
  for (std::int64_t i = 0;; ++i) {
    const double ms = synthetic_frame_time_ms(m, w.splat_count, anim, tflops, seed, i);
    if (t + ms / 1000.0 > duration_s) break;
    trace.frames.push_back({i, t, ms});
    t += ms / 1000.0;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Orchestration

struct RunOptions {
  double sampler_period_s = 1.0;
  std::chrono::milliseconds grace{5000};
  std::chrono::milliseconds stall_timeout{10000};
  double min_runtime_fraction = 0.8;
};

enum class WorkloadFailure { premature_exit, stall };

struct WorkloadError : DomainError {
  WorkloadError(const std::string& what, WorkloadFailure f, std::optional<ExitStatus> s)
      : DomainError(what), failure(f), status(s) {}
  WorkloadFailure failure;
  std::optional<ExitStatus> status;
};

struct RunTraces {
  FrameTrace frames;
  PowerTrace power;
  std::size_t ignored_lines = 0;
  std::size_t skipped_samples = 0;
  std::optional<ExitStatus> workload_status;  // set when the workload ended on its own
};

/// Restricts both traces to the window both observed: [later start, earlier end).
inline void trim_to_common_window(FrameTrace& frames, PowerTrace& power) {
  const double start = std::max(frames.start(), power.start());
  const double end = std::min(frames.end(), power.end());
  std::erase_if(frames.frames, [&](const FrameEntry& f) { return f.t_start_s < start || f.t_start_s >= end; });
  std::erase_if(power.samples, [&](const PowerSample& s) { return s.t < start || s.t >= end; });
}

namespace detail {

class LineCollector {
 public:
  explicit LineCollector(std::chrono::steady_clock::time_point epoch) : epoch_(epoch) {}

  void add(std::string line, std::chrono::steady_clock::time_point at) {
    std::lock_guard lock(mu_);
    lines_.push_back({std::chrono::duration<double>(at - epoch_).count(), std::move(line)});
  }

  std::vector<TimedLine> take() {
    std::lock_guard lock(mu_);
    return std::move(lines_);
  }

 private:
  std::chrono::steady_clock::time_point epoch_;
  std::mutex mu_;
  std::vector<TimedLine> lines_;
};

}  // namespace detail

/// Runs `spec` for `duration_s` wall seconds with the device's sampler running
/// alongside, then returns both traces on the run's clock (t=0 at sampler
/// launch), trimmed to their common window. Frame timestamps are shifted so
/// that the first frame ends when its log line arrived.
inline RunTraces run_workload(const WorkloadSpec& spec, Device& device, const RunOptions& opts = {}) {
  validate(spec);
  if (spec.command.empty()) throw DomainError("workload has no command");
  using clock = std::chrono::steady_clock;
  const auto epoch = clock::now();

  detail::LineCollector sampler_lines(epoch);
  detail::LineCollector frame_lines(epoch);
  std::atomic<bool> got_frame{false};

  ChildProcess sampler;
  try {
    sampler = ChildProcess::spawn(device.sampler_command(opts.sampler_period_s), {});
  } catch (const SpawnError& e) {
    throw DeviceError(std::string("cannot start telemetry sampler: ") + e.what());
  }
  LineReader sampler_reader(sampler.release_stdout(), [&](std::string line, clock::time_point at) {
    sampler_lines.add(std::move(line), at);
  });

  ChildProcess workload;
  try {
    workload = ChildProcess::spawn(expand_command(spec), {.capture_stdout = true, .extra_env = device.workload_env()});
  } catch (const SpawnError& e) {
    sampler.terminate(std::chrono::milliseconds(1000));
    throw DomainError(std::string("cannot start workload: ") + e.what());
  }
  const auto workload_start = clock::now();
  LineReader frame_reader(workload.release_stdout(), [&](std::string line, clock::time_point at) {
    if (!got_frame.load(std::memory_order_relaxed) && parse_frame_line(line)) got_frame = true;
    frame_lines.add(std::move(line), at);
  });

  auto stop_all = [&] {
    workload.terminate(opts.grace);
    sampler.terminate(std::chrono::milliseconds(1000));
    frame_reader.join();
    sampler_reader.join();
  };

  RunTraces out;
  const auto deadline = workload_start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(spec.duration_s));
  for (;;) {
    const auto now = clock::now();
    const double elapsed = std::chrono::duration<double>(now - workload_start).count();
    if (auto st = workload.poll_exit()) {
      out.workload_status = st;
      if (elapsed < opts.min_runtime_fraction * spec.duration_s) {
        stop_all();
        throw WorkloadError("workload exited after " + format_fixed(elapsed, 2) + " s of a " +
                                format_fixed(spec.duration_s, 1) + " s run (" + st->describe() + ")",
                            WorkloadFailure::premature_exit, st);
      }
      break;
    }
    if (!got_frame && now - workload_start >= opts.stall_timeout) {
      stop_all();
      throw WorkloadError("workload produced no frames within " +
                              std::to_string(opts.stall_timeout.count()) + " ms",
                          WorkloadFailure::stall, std::nullopt);
    }
    if (now >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  stop_all();

  // Frames: parse and move onto the run clock.
  FrameLogParser fparser;
  std::optional<double> first_receipt;
  for (auto& l : frame_lines.take()) {
    const std::size_t before = fparser.frame_count();
    fparser.feed(l.text);
    if (!first_receipt && fparser.frame_count() > before) first_receipt = l.t;
  }
  auto frames = fparser.finish();
  const double shift = *first_receipt - frames.trace.frames.front().end_s();
  for (auto& f : frames.trace.frames) f.t_start_s += shift;
  out.frames = std::move(frames.trace);
  out.ignored_lines = frames.ignored_lines;

  DmonParseResult power;
  try {
    power = parse_dmon_stream(sampler_lines.take(), opts.sampler_period_s);
  } catch (const DomainError& e) {
    throw DeviceError(std::string("telemetry sampler: ") + e.what());
  }
  out.power = std::move(power.trace);
  out.skipped_samples = power.skipped_rows;

  trim_to_common_window(out.frames, out.power);
  if (out.frames.frames.empty() || out.power.samples.empty())
    throw DomainError("frame and power traces do not overlap");
  return out;
}

}  // namespace gtb
