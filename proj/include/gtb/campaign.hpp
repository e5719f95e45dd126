#pragma once

// Benchmark campaigns: manifest, run grid, end-to-end execution and resume.

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "gtb/calibrate.hpp"
#include "gtb/device.hpp"
#include "gtb/error.hpp"
#include "gtb/metrics.hpp"
#include "gtb/model.hpp"
#include "gtb/spec_db.hpp"
#include "gtb/store.hpp"
#include "gtb/telemetry.hpp"
#include "gtb/workload.hpp"

namespace gtb {

struct CampaignTolerances {
  double calibration_pct = 3.0;
  EnvelopeTolerances envelope;
};

struct CampaignManifest {
  std::string campaign_id = "campaign";
  std::filesystem::path spec_db;
  std::string host;
  std::vector<std::string> tiers;
  std::vector<WorkloadSpec> workloads;
  int repeats = 3;
  double duration_s = 120.0;
  std::filesystem::path output_dir = "results";
  ProbeParams probe;
  std::string probe_binary = "gemm-probe";
  int max_probes = 12;
  CampaignTolerances tolerances;
  double sampler_period_s = 1.0;
  double bucket_s = 1.0;
  std::filesystem::path sim_model;  // used with the simulated device
};

inline void validate(const CampaignManifest& m) {
  if (m.repeats < 1) throw DomainError("manifest: repeats must be >= 1");
  if (!(m.duration_s > 0)) throw DomainError("manifest: duration_s must be > 0");
  if (m.tiers.empty()) throw DomainError("manifest: no tiers");
  if (m.workloads.empty()) throw DomainError("manifest: no workloads");
  if (!(m.sampler_period_s > 0) || !(m.bucket_s > 0)) throw DomainError("manifest: sampler_period_s and bucket_s must be > 0");
  validate(m.probe);
}

inline std::vector<std::string> command_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    std::vector<std::string> out;
    for (auto tok : split_ws(j.get<std::string>())) out.emplace_back(tok);
    return out;
  }
  return j.get<std::vector<std::string>>();
}

/// Relative paths in the manifest resolve against the manifest's directory.
inline CampaignManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  CampaignManifest m;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    m.campaign_id = j.value("campaign_id", m.campaign_id);
    m.spec_db = resolve(j.at("spec_db").get<std::string>());
    m.host = j.at("host").get<std::string>();
    m.tiers = j.at("tiers").get<std::vector<std::string>>();
    m.repeats = j.value("repeats", m.repeats);
    m.duration_s = j.value("duration_s", m.duration_s);
    m.output_dir = resolve(j.value("output_dir", std::string("results")));
    m.probe_binary = j.value("probe_binary", m.probe_binary);
    m.max_probes = j.value("max_probes", m.max_probes);
    m.sampler_period_s = j.value("sampler_period_s", m.sampler_period_s);
    m.bucket_s = j.value("bucket_s", m.bucket_s);
    if (j.contains("sim_model")) m.sim_model = resolve(j.at("sim_model").get<std::string>());
    if (j.contains("probe")) {
      const auto& p = j.at("probe");
      m.probe.m = p.value("m", m.probe.m);
      m.probe.n = p.value("n", m.probe.n);
      m.probe.k = p.value("k", m.probe.k);
      m.probe.iterations = p.value("iterations", m.probe.iterations);
      m.probe.warmup_iterations = p.value("warmup", m.probe.warmup_iterations);
    }
    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      m.tolerances.calibration_pct = t.value("calibration_pct", m.tolerances.calibration_pct);
      m.tolerances.envelope.power = t.value("power", m.tolerances.envelope.power);
      m.tolerances.envelope.clock = t.value("clock", m.tolerances.envelope.clock);
    }
    for (const auto& jw : j.at("workloads")) {
      WorkloadSpec w;
      w.splat_count = jw.at("splat_count").get<std::int64_t>();
      w.animated = jw.value("animated", false);
      w.animated_splats = jw.value("animated_splats", std::int64_t{0});
      if (jw.contains("resolution")) {
        auto res = jw.at("resolution").get<std::vector<int>>();
        if (res.size() != 2) throw DomainError("manifest: resolution must be [width, height]");
        w.width = res[0];
        w.height = res[1];
      }
      if (jw.contains("command")) w.command = command_from_json(jw.at("command"));
      w.duration_s = m.duration_s;
      validate(w);
      m.workloads.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("manifest: ") + e.what());
  }
  validate(m);
  return m;
}

inline CampaignManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(load_json_file(path), path.parent_path());
}

struct PlannedRun {
  std::string tier_name;
  WorkloadSpec workload;
  int repeat_index = 0;

  RunKey key() const { return {tier_name, workload.splat_count, workload.animated, repeat_index}; }
};

/// tiers x workloads x repeats, tier-major.
inline std::vector<PlannedRun> expand_grid(const CampaignManifest& m, const SpecDatabase& db) {
  validate(m);
  for (const auto& t : m.tiers)
    if (!db.find_gpu(t)) throw DomainError("manifest: unknown tier '" + t + "'");
  std::set<std::string> tier_set(m.tiers.begin(), m.tiers.end());
  if (tier_set.size() != m.tiers.size()) throw DomainError("manifest: duplicate tier names");
  std::set<std::pair<std::int64_t, bool>> seen;
  for (const auto& w : m.workloads)
    if (!seen.insert({w.splat_count, w.animated}).second)
      throw DomainError("manifest: duplicate workload (splats " + std::to_string(w.splat_count) +
                        (w.animated ? ", animated)" : ", static)"));
  std::vector<PlannedRun> plan;
  plan.reserve(m.tiers.size() * m.workloads.size() * static_cast<std::size_t>(m.repeats));
  for (const auto& t : m.tiers)
    for (const auto& w : m.workloads)
      for (int r = 0; r < m.repeats; ++r) plan.push_back({t, w, r});
  return plan;
}

/// Exclusive lock on an output directory. A lock left by a dead process is taken over.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".gtb.lock") {
    std::filesystem::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      std::ifstream in(path_);
      long holder = 0;
      in >> holder;
      if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM))
        throw DomainError("output directory " + dir.string() + " is locked by running process " + std::to_string(holder));
      std::filesystem::remove(path_);
    }
    throw DomainError("cannot lock output directory " + dir.string());
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;
  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

 private:
  std::filesystem::path path_;
};

struct ExecuteOptions {
  /// Used for workloads without their own command (the synthetic renderer on a sim device).
  std::vector<std::string> default_workload_command;
  std::chrono::milliseconds grace{5000};
  std::chrono::milliseconds stall_timeout{10000};
  std::function<void(const std::string&)> log = [](const std::string& msg) { std::cerr << msg << '\n'; };
};

struct CampaignOutcome {
  ResultStore store;
  std::size_t runs_launched = 0;
  std::size_t runs_skipped = 0;
  std::vector<std::string> failed_tiers;
  std::vector<std::string> load_warnings;
};

/// Derive -> calibrate -> verify once per tier, then every pending run of that
/// tier. Runs already present in the output directory are skipped. The store is
/// flushed after every entry. Device errors abort the campaign after a reset
/// attempt; calibration failures only drop that tier.
inline CampaignOutcome execute_campaign(const CampaignManifest& m, const SpecDatabase& db, Device& device,
                                        ProbeRunner& runner, const ExecuteOptions& opts = {}) {
  const auto plan = expand_grid(m, db);
  DirectoryLock lock(m.output_dir);

  CampaignOutcome outcome;
  auto loaded = load(m.output_dir);
  outcome.load_warnings = loaded.warnings;
  for (const auto& w : loaded.warnings) opts.log("warning: " + w);
  ResultStore& store = outcome.store;
  store = std::move(loaded.store);
  const std::string old_header = store.header_line();
  if (store.campaign_id().empty()) store.set_campaign_id(m.campaign_id);
  for (const auto& t : m.tiers) store.set_tier_label(t, db.gpu(t).label());
  // Rewrite when corrupt lines were dropped or the header changed, so appends
  // extend a file that reloads to exactly this store.
  if (!store.empty() && (!loaded.warnings.empty() || store.header_line() != old_header)) persist(store, m.output_dir);
  ResultWriter writer(m.output_dir, store);
  auto record = [&](StoreEntry e) {
    store.add(e);
    writer.append(e);
  };
  auto event = [&](const std::string& msg) {
    opts.log(msg);
    record(EventEntry{utc_timestamp(), msg});
  };

  try {
    for (const auto& tier_name : m.tiers) {
      std::vector<const PlannedRun*> pending;
      for (const auto& p : plan)
        if (p.tier_name == tier_name) {
          if (store.has_run(p.key())) {
            ++outcome.runs_skipped;
          } else {
            pending.push_back(&p);
          }
        }
      if (pending.empty()) continue;

      const TierPlan tier = derive_tier(db.gpu(tier_name), device.host());
      CalibrationReport report;
      if (auto prior = store.calibration_for(tier_name); prior && prior->converged) {
        report = *prior;
        device.apply_throttle(report.final_config);
        event("tier " + tier_name + ": reusing calibration " + describe(report.final_config));
      } else {
        try {
          CalibrationOptions copts;
          copts.tolerance_pct = m.tolerances.calibration_pct;
          copts.max_probes = m.max_probes;
          copts.probe = m.probe;
          report = calibrate_core_clock(device, runner, tier, copts);
          report = verify_tier(device, runner, report, m.probe);
          record(report);
          event("tier " + tier_name + ": calibrated to " + describe(report.final_config) + ", measured " +
                format_fixed(report.measured_tflops, 2) + " TFLOPS (" + (report.deviation_pct >= 0 ? "+" : "") +
                format_fixed(report.deviation_pct, 2) + "%)");
        } catch (const CalibrationError& e) {
          record(e.report);
          outcome.failed_tiers.push_back(tier_name);
          event("tier " + tier_name + ": calibration failed: " + e.what());
          continue;
        }
      }

      for (const PlannedRun* p : pending) {
        WorkloadSpec w = p->workload;
        if (w.command.empty()) w.command = opts.default_workload_command;
        if (w.command.empty()) throw DomainError("workload for " + std::to_string(w.splat_count) + " splats has no command");
        device.apply_throttle(report.final_config);
        RunRecord rec;
        rec.tier_name = tier_name;
        rec.splat_count = w.splat_count;
        rec.animated = w.animated;
        rec.animated_splats = w.animated ? w.animated_splats : 0;
        rec.repeat_index = p->repeat_index;
        rec.started_at = utc_timestamp();
        try {
          RunOptions ropts;
          ropts.sampler_period_s = m.sampler_period_s;
          ropts.grace = opts.grace;
          ropts.stall_timeout = opts.stall_timeout;
          auto traces = run_workload(w, device, ropts);
          ++outcome.runs_launched;
          rec.fps = fps_stats(traces.frames, m.bucket_s);
          rec.duration_s = traces.frames.end() - traces.frames.start();
          const Watts p_avg = average_power(traces.power, traces.frames.start(), traces.frames.end());
          rec.energy = energy_metrics(p_avg, rec.fps.mean_fps);
          rec.violations = static_cast<std::int64_t>(
              validate_envelope(traces.power, report.final_config, m.tolerances.envelope).size());
        } catch (const DeviceError&) {
          throw;
        } catch (const DomainError& e) {
          event("run " + tier_name + "/" + std::to_string(w.splat_count) + (w.animated ? "/anim" : "/static") +
                "/r" + std::to_string(p->repeat_index) + " failed: " + e.what());
          continue;
        }
        rec.finished_at = utc_timestamp();
        record(rec);
        opts.log("run " + tier_name + " splats=" + std::to_string(rec.splat_count) + (rec.animated ? "+anim" : "") +
                 " repeat=" +
                 std::to_string(rec.repeat_index) + ": " + format_fixed(rec.fps.mean_fps, 1) + " fps, " +
                 format_fixed(rec.energy.p_avg_w, 1) + " W");
      }
    }
  } catch (const DeviceError& e) {
    try {
      device.reset_throttle();
    } catch (const std::exception& reset_err) {
      opts.log(std::string("reset after failure also failed: ") + reset_err.what());
    }
    try {
      event(std::string("campaign aborted: ") + e.what());
    } catch (...) {
    }
    throw;
  }
  device.reset_throttle();
  return outcome;
}

}  // namespace gtb
