// gtb: GPU tier emulation and energy-aware benchmarking.
//
// Exit codes: 0 success, 1 domain error, 2 usage error, 3 device/control-plane error.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtb/gtb.hpp"

#ifndef GTB_DEFAULT_DATA_DIR
#define GTB_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace gtb;

namespace {

std::string self_exe() {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? std::string("gtb") : p.string();
}

std::string default_data(const char* file) {
  if (const char* env = std::getenv("GTB_DATA_DIR"); env && *env) return (fs::path(env) / file).string();
  return (fs::path(GTB_DEFAULT_DATA_DIR) / file).string();
}

struct DeviceOptions {
  std::string db = default_data("gpu_specs.json");
  std::string host = "rtx4090";
  std::string device = "sim";
  bool i_have_root = false;
  std::string sim_model = default_data("sim_model.json");
  std::string nvidia_smi = default_control_tool();
  int gpu_index = 0;
  std::uint64_t seed = 1;

  void add_to(CLI::App* app, bool mutating) {
    app->add_option("--db", db, "GPU spec database")->capture_default_str();
    app->add_option("--host", host, "host profile in the spec database")->capture_default_str();
    app->add_option("--device", device, "sim or real")->check(CLI::IsMember({"sim", "real"}))->capture_default_str();
    if (mutating) app->add_flag("--i-have-root", i_have_root, "allow control commands on the real device");
    app->add_option("--sim-model", sim_model, "simulated device constants")->capture_default_str();
    app->add_option("--nvidia-smi", nvidia_smi, "control tool path (env GTB_NVIDIA_SMI)")->capture_default_str();
    app->add_option("--gpu-index", gpu_index, "device index")->capture_default_str();
    app->add_option("--seed", seed, "simulated measurement seed")->capture_default_str();
  }

  bool real() const { return device == "real"; }

  void require_confirmation() const {
    if (real() && !i_have_root)
      throw UsageError("refusing to change clocks or power on the real device without --i-have-root");
  }

  std::unique_ptr<Device> open(const SpecDatabase& database) const {
    const HostProfile& h = database.host(host);
    if (real()) return std::make_unique<RealDevice>(h, nvidia_smi, gpu_index);
    auto dev = std::make_unique<SimDevice>(h, load_sim_model(sim_model), self_exe());
    dev->set_seed(seed);
    return dev;
  }
};

struct ProbeOptions {
  ProbeParams params;
  std::string binary = "gemm-probe";

  void add_to(CLI::App* app) {
    app->add_option("--m", params.m)->capture_default_str();
    app->add_option("--n", params.n)->capture_default_str();
    app->add_option("--k", params.k)->capture_default_str();
    app->add_option("--iterations", params.iterations)->capture_default_str();
    app->add_option("--warmup", params.warmup_iterations)->capture_default_str();
    app->add_option("--probe-bin", binary, "GEMM probe executable (real device)")->capture_default_str();
  }

  std::unique_ptr<ProbeRunner> runner(Device& dev) const {
    if (auto* sim = dynamic_cast<SimDevice*>(&dev)) return std::make_unique<SimProbeRunner>(*sim);
    return std::make_unique<SubprocessProbeRunner>(binary);
  }
};

SyntheticWorkloadModel load_synthetic_model(const std::string& path) {
  auto j = load_json_file(path);
  return synthetic_model_from_json(j.value("workload", nlohmann::json::object()));
}

std::vector<std::string> synthetic_command(const SyntheticWorkloadModel& m) {
  return {self_exe(),       "synth-workload", "--splats",         "{splats}",
          "--anim-splats",  "{anim_splats}",  "--overhead-ms",    format_exact(m.fixed_overhead_ms),
          "--base-cost-ms", format_exact(m.base_cost_ms),
          "--penalty",      format_exact(m.animation_penalty),
          "--noise",        format_exact(m.noise_fraction)};
}

void print_report(const CalibrationReport& r, bool json) {
  if (json) {
    std::cout << to_json(r).dump() << '\n';
    return;
  }
  std::printf("tier            %s\n", r.tier_name.c_str());
  std::printf("target          %.2f TFLOPS\n", r.target_tflops);
  std::printf("config          %s\n", describe(r.final_config).c_str());
  std::printf("measured        %.2f TFLOPS\n", r.measured_tflops);
  std::printf("deviation       %+.2f %%\n", r.deviation_pct);
  std::printf("probes          %d\n", r.probes_used);
  for (const auto& w : r.warnings) std::printf("warning         %s\n", w.c_str());
}

// --- subcommands -------------------------------------------------------------

int cmd_tiers(const DeviceOptions& o, const std::string& format) {
  auto db = load_spec_database(o.db);
  const HostProfile& host = db.host(o.host);
  const bool csv = format == "csv";
  if (csv) {
    std::cout << "gpu,theoretical_tflops,estimated_sustained_tflops,nominal_power_w,emulated_power_w,nominal_core_mhz,"
                 "nominal_bandwidth_gbs,required_mem_clock_mhz,emulated_mem_clock_mhz,mem_clock_deviation_pct\n";
  } else {
    std::printf("%-12s %10s %10s %8s %8s %8s %9s %10s %10s %9s\n", "Target GPU", "Theo TF", "Sust TF", "Nom W",
                "Emu W", "Nom MHz", "Nom GB/s", "Req mclk", "Emu mclk", "Dev %");
  }
  for (const auto& g : db.gpus()) {
    TierPlan p = derive_tier(g, host);
    if (csv) {
      std::cout << g.name << ',' << format_exact(g.theoretical_fp32_tflops) << ',' << format_exact(p.estimated_sustained_tflops)
                << ',' << format_exact(g.nominal_power_w) << ',' << format_exact(p.throttle.power_cap_w) << ','
                << g.nominal_core_clock_mhz << ',' << format_exact(g.nominal_mem_bandwidth_gbs) << ','
                << p.required_mem_clock_mhz << ',' << p.throttle.mem_clock_cap_mhz << ','
                << format_exact(p.mem_clock_deviation_pct) << '\n';
    } else {
      std::printf("%-12s %10.2f %10.2f %8.0f %8.0f %8d %9.0f %10d %10d %+9.1f\n", g.label().c_str(),
                  g.theoretical_fp32_tflops, p.estimated_sustained_tflops, g.nominal_power_w, p.throttle.power_cap_w,
                  g.nominal_core_clock_mhz, g.nominal_mem_bandwidth_gbs, p.required_mem_clock_mhz,
                  p.throttle.mem_clock_cap_mhz, p.mem_clock_deviation_pct);
    }
  }
  return 0;
}

int cmd_calibrate(const DeviceOptions& o, const ProbeOptions& po, const std::string& tier, double tol, int max_probes,
                  std::optional<double> power_override, bool json) {
  o.require_confirmation();
  auto db = load_spec_database(o.db);
  auto dev = o.open(db);
  auto runner = po.runner(*dev);
  TierPlan plan = derive_tier(db.gpu(tier), dev->host(), power_override);
  CalibrationOptions copts;
  copts.tolerance_pct = tol;
  copts.max_probes = max_probes;
  copts.probe = po.params;
  try {
    auto report = calibrate_core_clock(*dev, *runner, plan, copts);
    report = verify_tier(*dev, *runner, report, po.params);
    print_report(report, json);
  } catch (const CalibrationError& e) {
    print_report(e.report, json);
    throw;
  }
  return 0;
}

ThrottleConfig config_from_flags(const SpecDatabase& db, const HostProfile& host, const std::string& tier,
                                 std::optional<double> power, std::optional<int> core, std::optional<int> mem) {
  ThrottleConfig c = tier.empty() ? nominal_config(host) : derive_tier(db.gpu(tier), host).throttle;
  if (power) c.power_cap_w = *power;
  if (core) c.core_clock_cap_mhz = *core;
  if (mem) c.mem_clock_cap_mhz = *mem;
  return c;
}

int cmd_apply(const DeviceOptions& o, const std::string& tier, std::optional<double> power, std::optional<int> core,
              std::optional<int> mem) {
  o.require_confirmation();
  auto db = load_spec_database(o.db);
  auto dev = o.open(db);
  const auto& h = dev->apply_throttle(config_from_flags(db, dev->host(), tier, power, core, mem));
  std::cout << "applied (" << to_string(h.kind) << "): " << describe(*h.applied) << '\n';
  return 0;
}

int cmd_reset(const DeviceOptions& o) {
  o.require_confirmation();
  auto db = load_spec_database(o.db);
  auto dev = o.open(db);
  dev->reset_throttle();
  std::cout << "reset (" << to_string(dev->handle().kind) << ")\n";
  return 0;
}

int cmd_measure(const DeviceOptions& o, const ProbeOptions& po, const std::string& tier, std::optional<double> power,
                std::optional<int> core, std::optional<int> mem) {
  const bool changes = !tier.empty() || power || core || mem;
  if (changes) o.require_confirmation();
  auto db = load_spec_database(o.db);
  auto dev = o.open(db);
  if (changes) dev->apply_throttle(config_from_flags(db, dev->host(), tier, power, core, mem));
  auto runner = po.runner(*dev);
  std::printf("%.4f\n", measure_sustained_tflops(*runner, po.params));
  return 0;
}

int cmd_run(const DeviceOptions& o, const ProbeOptions& po, const std::string& tier, WorkloadSpec w,
            const std::string& command, double bucket_s, double period_s, const std::string& out_dir) {
  o.require_confirmation();
  auto db = load_spec_database(o.db);
  auto dev = o.open(db);
  auto runner = po.runner(*dev);
  w.animated = w.animated_splats > 0;
  if (!command.empty()) {
    for (auto tok : split_ws(command)) w.command.emplace_back(tok);
  } else if (!o.real()) {
    w.command = synthetic_command(load_synthetic_model(o.sim_model));
  } else {
    throw UsageError("run on the real device needs --command");
  }
  TierPlan plan = derive_tier(db.gpu(tier), dev->host());
  auto report = calibrate_core_clock(*dev, *runner, plan, {.probe = po.params});
  dev->apply_throttle(report.final_config);
  RunOptions ropts;
  ropts.sampler_period_s = period_s;
  const std::string started = utc_timestamp();
  auto traces = run_workload(w, *dev, ropts);
  RunRecord rec;
  rec.tier_name = tier;
  rec.splat_count = w.splat_count;
  rec.animated = w.animated;
  rec.animated_splats = w.animated_splats;
  rec.duration_s = traces.frames.end() - traces.frames.start();
  rec.fps = fps_stats(traces.frames, bucket_s);
  rec.energy = energy_metrics(average_power(traces.power, traces.frames.start(), traces.frames.end()), rec.fps.mean_fps);
  rec.violations = static_cast<std::int64_t>(validate_envelope(traces.power, report.final_config).size());
  rec.started_at = started;
  rec.finished_at = utc_timestamp();
  dev->reset_throttle();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream tf(fs::path(out_dir) / "power_trace.csv");
    write_trace(tf, traces.power);
    write_text_file(fs::path(out_dir) / "frames.log", serialize_frame_log(traces.frames));
  }
  std::cout << to_json(rec).dump() << '\n';
  return 0;
}

int cmd_campaign(const DeviceOptions& o, const ProbeOptions& po, const std::string& manifest_path,
                 const std::string& out_dir, bool no_report) {
  o.require_confirmation();
  auto manifest = load_manifest(manifest_path);
  if (!out_dir.empty()) manifest.output_dir = out_dir;
  auto db = load_spec_database(manifest.spec_db);
  DeviceOptions dopts = o;
  dopts.host = manifest.host;
  if (!manifest.sim_model.empty()) dopts.sim_model = manifest.sim_model.string();
  auto dev = dopts.open(db);
  ProbeOptions popts = po;
  popts.binary = manifest.probe_binary;
  auto runner = popts.runner(*dev);
  ExecuteOptions eopts;
  if (!o.real()) eopts.default_workload_command = synthetic_command(load_synthetic_model(dopts.sim_model));
  auto outcome = execute_campaign(manifest, db, *dev, *runner, eopts);
  std::cerr << "runs launched: " << outcome.runs_launched << ", skipped (already recorded): " << outcome.runs_skipped
            << '\n';
  for (const auto& t : outcome.failed_tiers) std::cerr << "tier failed calibration: " << t << '\n';
  if (!no_report && !outcome.store.runs().empty()) {
    for (auto fmt : {ReportFormat::table, ReportFormat::csv, ReportFormat::svg})
      for (const auto& p : render_report(outcome.store, fmt, manifest.output_dir)) std::cout << p.string() << '\n';
  }
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format, std::string out_dir) {
  if (!fs::is_directory(in_dir)) throw DomainError("results directory not found: " + in_dir);
  auto loaded = load(in_dir);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  if (out_dir.empty()) out_dir = in_dir;
  const auto fmt = parse_report_format(format);
  auto paths = render_report(loaded.store, fmt, out_dir);
  if (fmt == ReportFormat::table) std::cout << render_table(loaded.store);
  for (const auto& p : paths) std::cerr << "wrote " << p.string() << '\n';
  return 0;
}

int cmd_parse_dmon(const std::string& in_path, double period, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw DomainError("cannot read " + in_path);
  auto res = parse_dmon_stream(in, period);
  std::cerr << "samples: " << res.trace.samples.size() << ", skipped rows: " << res.skipped_rows;
  try {
    std::cerr << ", average power: " << format_fixed(average_power(res.trace), 2) << " W";
  } catch (const DomainError&) {
  }
  std::cerr << '\n';
  if (out_path.empty() || out_path == "-") {
    write_trace(std::cout, res.trace);
  } else {
    std::ofstream out(out_path);
    if (!out) throw DomainError("cannot write " + out_path);
    write_trace(out, res.trace);
  }
  return 0;
}

// --- helpers used by the simulated backend ------------------------------------

volatile std::sig_atomic_t g_stop = 0;

int cmd_synth_workload(std::int64_t splats, std::int64_t anim_splats, std::optional<double> tflops,
                       SyntheticWorkloadModel m, std::uint64_t seed, std::optional<double> crash_after, bool stall,
                       std::optional<double> max_duration) {
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  if (!tflops) {
    const char* env = std::getenv("GTB_SIM_TFLOPS");
    auto v = env ? parse_double(env) : std::nullopt;
    if (!v) throw UsageError("synth-workload needs --tflops or GTB_SIM_TFLOPS");
    tflops = *v;
  }
  std::printf("synthetic renderer: %lld splats (+%lld animated) at %.3f TFLOPS\n", static_cast<long long>(splats),
              static_cast<long long>(anim_splats), *tflops);
  std::fflush(stdout);
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
  if (stall) {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    return 0;
  }
  double t = 0;
  for (std::int64_t i = 0; !g_stop; ++i) {
    const double ms = synthetic_frame_time_ms(m, splats, anim_splats, *tflops, seed, i);
    const double end = t + ms / 1000.0;
    if (max_duration && end > *max_duration) break;
    if (crash_after && end > *crash_after) std::abort();
    std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(end)));
    std::printf("F %lld %s %s\n", static_cast<long long>(i), format_exact(t).c_str(), format_exact(ms).c_str());
    std::fflush(stdout);
    t = end;
  }
  (void)elapsed;
  return 0;
}

int cmd_sim_dmon(double period, double power, int sm, int mem, double noise, std::uint64_t seed) {
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  if (!(period > 0)) throw UsageError("--period must be > 0");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  for (std::int64_t i = 0; !g_stop; ++i) {
    if (i % 20 == 0) std::fputs(dmon_header().c_str(), stdout);
    const double p = power * (1.0 + noise * seeded_unit_noise(seed * 7919 + static_cast<std::uint64_t>(i)));
    std::fputs(dmon_row(0, p, mem, sm).c_str(), stdout);
    std::fflush(stdout);
    std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(
                                              std::chrono::duration<double>(period * static_cast<double>(i + 1))));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gtb: GPU tier emulation and energy-aware benchmarking"};
  app.require_subcommand(1);
  int rc = 0;

  DeviceOptions dev_opts;
  ProbeOptions probe_opts;

  auto* tiers = app.add_subcommand("tiers", "print the derived throttle plan for every GPU in the database");
  std::string tiers_format = "table";
  tiers->add_option("--db", dev_opts.db, "GPU spec database")->capture_default_str();
  tiers->add_option("--host", dev_opts.host, "host profile")->capture_default_str();
  tiers->add_option("--format", tiers_format)->check(CLI::IsMember({"table", "csv"}))->capture_default_str();

  auto* calibrate = app.add_subcommand("calibrate", "find the core-clock cap matching a tier's sustained TFLOPS");
  std::string tier;
  double tolerance = 3.0;
  int max_probes = 12;
  std::optional<double> power_override;
  bool json = false;
  dev_opts.add_to(calibrate, true);
  probe_opts.add_to(calibrate);
  calibrate->add_option("--tier", tier, "target GPU name")->required();
  calibrate->add_option("--tolerance", tolerance, "percent")->capture_default_str();
  calibrate->add_option("--max-probes", max_probes)->capture_default_str();
  calibrate->add_option("--power-override", power_override, "emulated power cap (W)");
  calibrate->add_flag("--json", json, "print the report as JSON");

  std::optional<double> power;
  std::optional<int> core, mem;
  auto* apply = app.add_subcommand("apply", "apply a throttle config (a tier's plan, or explicit caps)");
  dev_opts.add_to(apply, true);
  apply->add_option("--tier", tier, "start from this tier's derived plan");
  apply->add_option("--power", power, "power cap (W)");
  apply->add_option("--core", core, "core clock cap (MHz)");
  apply->add_option("--mem", mem, "memory clock cap (MHz)");

  auto* reset = app.add_subcommand("reset", "clear all caps");
  dev_opts.add_to(reset, true);

  auto* measure = app.add_subcommand("measure", "measure sustained TFLOPS with the GEMM probe");
  dev_opts.add_to(measure, true);
  probe_opts.add_to(measure);
  measure->add_option("--tier", tier, "apply this tier's derived plan first");
  measure->add_option("--power", power, "power cap (W)");
  measure->add_option("--core", core, "core clock cap (MHz)");
  measure->add_option("--mem", mem, "memory clock cap (MHz)");

  auto* run = app.add_subcommand("run", "calibrate a tier and run one workload with power telemetry");
  WorkloadSpec wl;
  wl.duration_s = 120;
  std::string command, out_dir;
  double bucket_s = 1.0, period_s = 1.0;
  dev_opts.add_to(run, true);
  probe_opts.add_to(run);
  run->add_option("--tier", tier)->required();
  run->add_option("--splats", wl.splat_count)->required();
  run->add_option("--anim-splats", wl.animated_splats, "animated splats (0 = static)")->capture_default_str();
  run->add_option("--width", wl.width)->capture_default_str();
  run->add_option("--height", wl.height)->capture_default_str();
  run->add_option("--duration", wl.duration_s, "seconds")->capture_default_str();
  run->add_option("--command", command, "workload command template ({splats} {animated} {anim_splats} {width} {height})");
  run->add_option("--bucket", bucket_s, "FPS bucket width (s)")->capture_default_str();
  run->add_option("--period", period_s, "telemetry period (s)")->capture_default_str();
  run->add_option("--out", out_dir, "write power_trace.csv and frames.log here");

  auto* campaign = app.add_subcommand("campaign", "execute a campaign manifest (resumable)");
  std::string manifest;
  bool no_report = false;
  dev_opts.add_to(campaign, true);
  probe_opts.add_to(campaign);
  campaign->add_option("--manifest", manifest)->required();
  campaign->add_option("--out", out_dir, "results directory (overrides the manifest)");
  campaign->add_flag("--no-report", no_report, "skip report rendering");

  auto* report = app.add_subcommand("report", "render table, csv or svg reports from a results directory");
  std::string in_dir, format = "table";
  report->add_option("--in", in_dir, "results directory")->required();
  report->add_option("--format", format)->check(CLI::IsMember({"table", "csv", "svg"}))->capture_default_str();
  report->add_option("--out", out_dir, "output directory (default: --in)");

  auto* parse_dmon = app.add_subcommand("parse-dmon", "convert an nvidia-smi dmon log into a trace file");
  std::string dmon_in, dmon_out;
  double dmon_period = 1.0;
  parse_dmon->add_option("--in", dmon_in)->required();
  parse_dmon->add_option("--period", dmon_period, "sampling period (s)")->capture_default_str();
  parse_dmon->add_option("--out", dmon_out, "trace file (default: stdout)");

  auto* synth = app.add_subcommand("synth-workload", "synthetic renderer speaking the frame-log protocol");
  synth->group("");  // internal helper
  std::int64_t s_splats = 0, s_anim = 0;
  std::optional<double> s_tflops, s_crash, s_max;
  SyntheticWorkloadModel s_model;
  std::uint64_t s_seed = 1;
  bool s_stall = false;
  synth->add_option("--splats", s_splats)->required();
  synth->add_option("--anim-splats", s_anim);
  synth->add_option("--tflops", s_tflops);
  synth->add_option("--overhead-ms", s_model.fixed_overhead_ms);
  synth->add_option("--base-cost-ms", s_model.base_cost_ms);
  synth->add_option("--penalty", s_model.animation_penalty);
  synth->add_option("--noise", s_model.noise_fraction);
  synth->add_option("--seed", s_seed);
  synth->add_option("--crash-after", s_crash, "abort once this many seconds of frames are out");
  synth->add_option("--max-duration", s_max, "exit normally after this many seconds");
  synth->add_flag("--stall", s_stall, "never emit frames");

  auto* sim_dmon = app.add_subcommand("sim-dmon", "simulated telemetry sampler in dmon format");
  sim_dmon->group("");
  double d_period = 1.0, d_power = 0, d_noise = 0;
  int d_sm = 0, d_mem = 0;
  std::uint64_t d_seed = 1;
  sim_dmon->add_option("--period", d_period);
  sim_dmon->add_option("--power", d_power)->required();
  sim_dmon->add_option("--sm", d_sm)->required();
  sim_dmon->add_option("--mem", d_mem)->required();
  sim_dmon->add_option("--noise", d_noise);
  sim_dmon->add_option("--seed", d_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*tiers) rc = cmd_tiers(dev_opts, tiers_format);
    else if (*calibrate) rc = cmd_calibrate(dev_opts, probe_opts, tier, tolerance, max_probes, power_override, json);
    else if (*apply) rc = cmd_apply(dev_opts, tier, power, core, mem);
    else if (*reset) rc = cmd_reset(dev_opts);
    else if (*measure) rc = cmd_measure(dev_opts, probe_opts, tier, power, core, mem);
    else if (*run) rc = cmd_run(dev_opts, probe_opts, tier, wl, command, bucket_s, period_s, out_dir);
    else if (*campaign) rc = cmd_campaign(dev_opts, probe_opts, manifest, out_dir, no_report);
    else if (*report) rc = cmd_report(in_dir, format, out_dir);
    else if (*parse_dmon) rc = cmd_parse_dmon(dmon_in, dmon_period, dmon_out);
    else if (*synth) rc = cmd_synth_workload(s_splats, s_anim, s_tflops, s_model, s_seed, s_crash, s_stall, s_max);
    else if (*sim_dmon) rc = cmd_sim_dmon(d_period, d_power, d_sm, d_mem, d_noise, d_seed);
  } catch (const Error& e) {
    std::cerr << "gtb: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "gtb: " << e.what() << '\n';
    return 1;
  }
  return rc;
}
