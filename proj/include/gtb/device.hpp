#pragma once

// GPU control plane: a real adapter that shells nvidia-smi and a simulated
// device backed by an analytic throughput/power model.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtb/error.hpp"
#include "gtb/model.hpp"
#include "gtb/process.hpp"
#include "gtb/util.hpp"

namespace gtb {

/// Roofline-style stand-in for the physical card.
struct SimModel {
  Tflops peak_tflops = 0;
  Mhz nominal_core_mhz = 0;
  Mhz nominal_mem_clock_mhz = 0;
  Watts nominal_power_w = 0;
  double bw_coefficient = 0;  // TFLOPS per MHz of memory clock
  double power_exponent = 0;
  Watts idle_power_w = 0;
  double noise_fraction = 0;  // in [0, 0.05]

  bool operator==(const SimModel&) const = default;
};

inline void validate(const SimModel& m) {
  if (!(m.peak_tflops > 0) || m.nominal_core_mhz <= 0 || m.nominal_mem_clock_mhz <= 0 || !(m.nominal_power_w > 0))
    throw DomainError("sim model: peak, nominal clocks and nominal power must be > 0");
  if (!(m.bw_coefficient > 0)) throw DomainError("sim model: bw_coefficient must be > 0");
  if (!(m.power_exponent >= 0)) throw DomainError("sim model: power_exponent must be >= 0");
  if (m.idle_power_w < 0 || m.idle_power_w > m.nominal_power_w)
    throw DomainError("sim model: idle_power_w must lie in [0, nominal_power_w]");
  if (m.noise_fraction < 0 || m.noise_fraction > 0.05) throw DomainError("sim model: noise_fraction must lie in [0, 0.05]");
}

inline Tflops sim_noise_free_tflops(const SimModel& m, const ThrottleConfig& c) {
  const double core_term = m.peak_tflops * c.core_clock_cap_mhz / m.nominal_core_mhz;
  const double bw_term = m.bw_coefficient * c.mem_clock_cap_mhz;
  const double power_term = m.peak_tflops * std::pow(c.power_cap_w / m.nominal_power_w, m.power_exponent);
  return std::max(0.0, std::min({core_term, bw_term, power_term}));
}

inline Tflops sim_sustained_tflops(const SimModel& m, const ThrottleConfig& c, std::uint64_t seed) {
  return sim_noise_free_tflops(m, c) * (1.0 + m.noise_fraction * seeded_unit_noise(seed));
}

/// Board power while running a saturating workload: idle plus a dynamic part
/// proportional to delivered throughput, never above the cap.
inline Watts sim_power_draw(const SimModel& m, const ThrottleConfig& c) {
  const double load = sim_noise_free_tflops(m, c) / m.peak_tflops;
  return std::min(c.power_cap_w, m.idle_power_w + (m.nominal_power_w - m.idle_power_w) * load);
}

inline SimModel sim_model_from_json(const nlohmann::json& j) {
  SimModel m;
  try {
    m.peak_tflops = j.at("peak_tflops").get<double>();
    m.nominal_core_mhz = j.at("nominal_core_mhz").get<int>();
    m.nominal_mem_clock_mhz = j.at("nominal_mem_clock_mhz").get<int>();
    m.nominal_power_w = j.at("nominal_power_w").get<double>();
    m.bw_coefficient = j.at("bw_coefficient").get<double>();
    m.power_exponent = j.at("power_exponent").get<double>();
    m.idle_power_w = j.value("idle_power_w", 0.0);
    m.noise_fraction = j.value("noise_fraction", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("sim model: ") + e.what());
  }
  validate(m);
  return m;
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

inline SimModel load_sim_model(const std::filesystem::path& path) {
  return sim_model_from_json(load_json_file(path));
}

enum class DeviceKind { real, simulated };

inline const char* to_string(DeviceKind k) { return k == DeviceKind::real ? "real" : "simulated"; }

struct DeviceHandle {
  DeviceKind kind = DeviceKind::simulated;
  HostProfile host;
  std::optional<ThrottleConfig> applied;

  bool operator==(const DeviceHandle&) const = default;
};

struct SupportedClocks {
  std::vector<Mhz> mem_clocks_mhz;  // ascending, unique
  Mhz core_clock_step_mhz = 0;
};

class Device {
 public:
  explicit Device(DeviceHandle handle) : handle_(std::move(handle)) {}
  virtual ~Device() = default;
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const DeviceHandle& handle() const { return handle_; }
  const HostProfile& host() const { return handle_.host; }

  /// Validates before any command is issued.
  const DeviceHandle& apply_throttle(const ThrottleConfig& config) {
    validate(config, handle_.host);
    do_apply(config);
    handle_.applied = config;
    return handle_;
  }

  const DeviceHandle& reset_throttle() {
    do_reset();
    handle_.applied.reset();
    return handle_;
  }

  virtual SupportedClocks query_supported_clocks() = 0;

  /// Command line of the telemetry sampler for this device.
  virtual std::vector<std::string> sampler_command(double period_s) const = 0;

  /// Extra environment handed to workload processes.
  virtual std::vector<std::string> workload_env() const { return {}; }

 protected:
  virtual void do_apply(const ThrottleConfig& config) = 0;
  virtual void do_reset() = 0;

  DeviceHandle handle_;
};

inline const DeviceHandle& apply_throttle(Device& d, const ThrottleConfig& c) { return d.apply_throttle(c); }
inline const DeviceHandle& reset_throttle(Device& d) { return d.reset_throttle(); }
inline SupportedClocks query_supported_clocks(Device& d) { return d.query_supported_clocks(); }

/// Simulated card. Holds the applied caps and answers with SimModel.
class SimDevice : public Device {
 public:
  /// `helper_binary` is the gtb executable; it provides the sim-dmon sampler.
  SimDevice(HostProfile host, SimModel model, std::string helper_binary = "gtb")
      : Device({DeviceKind::simulated, std::move(host), std::nullopt}),
        model_(model),
        helper_(std::move(helper_binary)) {
    validate(handle_.host);
    validate(model_);
  }

  const SimModel& model() const { return model_; }
  const std::string& helper_binary() const { return helper_; }

  ThrottleConfig effective_config() const { return handle_.applied.value_or(nominal_config(handle_.host)); }

  /// Seed for the next noisy measurement; advances on every call.
  std::uint64_t next_seed() { return seed_counter_++; }
  void set_seed(std::uint64_t s) { seed_counter_ = s; }

  SupportedClocks query_supported_clocks() override {
    return {handle_.host.supported_mem_clocks_mhz, handle_.host.supported_core_clock_step_mhz};
  }

  std::vector<std::string> sampler_command(double period_s) const override {
    const ThrottleConfig c = effective_config();
    return {helper_,
            "sim-dmon",
            "--period", format_exact(period_s),
            "--power", format_exact(sim_power_draw(model_, c)),
            "--sm", std::to_string(c.core_clock_cap_mhz),
            "--mem", std::to_string(c.mem_clock_cap_mhz),
            "--noise", format_exact(model_.noise_fraction),
            "--seed", std::to_string(seed_counter_)};
  }

  std::vector<std::string> workload_env() const override {
    return {"GTB_SIM_TFLOPS=" + format_exact(sim_noise_free_tflops(model_, effective_config()))};
  }

 protected:
  void do_apply(const ThrottleConfig&) override {}
  void do_reset() override {}

 private:
  SimModel model_;
  std::string helper_;
  std::uint64_t seed_counter_ = 1;
};

/// Where to find nvidia-smi: $GTB_NVIDIA_SMI, else the name on PATH.
inline std::string default_control_tool() {
  if (const char* env = std::getenv("GTB_NVIDIA_SMI"); env && *env) return env;
  return "nvidia-smi";
}

inline SupportedClocks parse_supported_clocks(const std::string& text) {
  SupportedClocks out;
  std::vector<Mhz> graphics;
  std::istringstream in(text);
  std::string line;
  std::string first_nonempty;
  while (std::getline(in, line)) {
    auto view = trim(line);
    if (view.empty()) continue;
    if (first_nonempty.empty()) first_nonempty = std::string(view);
    auto colon = view.find(':');
    if (colon == std::string_view::npos) continue;
    auto key = trim(view.substr(0, colon));
    if (key != "Memory" && key != "Graphics") continue;
    auto value = trim(view.substr(colon + 1));
    auto parts = split_ws(value);
    std::optional<long long> mhz;
    if (parts.size() == 2 && parts[1] == "MHz") mhz = parse_int(parts[0]);
    if (!mhz || *mhz <= 0) throw DeviceError("unparseable supported-clocks line: '" + std::string(view) + "'");
    (key == "Memory" ? out.mem_clocks_mhz : graphics).push_back(static_cast<Mhz>(*mhz));
  }
  if (out.mem_clocks_mhz.empty())
    throw DeviceError("supported-clocks output has no 'Memory' entries; first line: '" + first_nonempty + "'");
  std::sort(out.mem_clocks_mhz.begin(), out.mem_clocks_mhz.end());
  out.mem_clocks_mhz.erase(std::unique(out.mem_clocks_mhz.begin(), out.mem_clocks_mhz.end()), out.mem_clocks_mhz.end());
  std::sort(graphics.begin(), graphics.end());
  graphics.erase(std::unique(graphics.begin(), graphics.end()), graphics.end());
  if (graphics.size() == 1) {
    out.core_clock_step_mhz = graphics.front();
  } else {
    int g = 0;
    for (std::size_t i = 1; i < graphics.size(); ++i) g = std::gcd(g, graphics[i] - graphics[i - 1]);
    out.core_clock_step_mhz = g;
  }
  return out;
}

/// nvidia-smi adapter. Commands run in the order power, core, memory and stop
/// at the first failure.
class RealDevice : public Device {
 public:
  RealDevice(HostProfile host, std::string tool = default_control_tool(), int index = 0)
      : Device({DeviceKind::real, std::move(host), std::nullopt}), tool_(std::move(tool)), index_(index) {
    validate(handle_.host);
  }

  const std::string& tool() const { return tool_; }
  int index() const { return index_; }

  SupportedClocks query_supported_clocks() override {
    auto out = run({"-q", "-d", "SUPPORTED_CLOCKS"}, {});
    return parse_supported_clocks(out);
  }

  std::vector<std::string> sampler_command(double period_s) const override {
    const long period = std::max(1L, std::lround(period_s));
    return {tool_, "dmon", "-i", std::to_string(index_), "-s", "pc", "-d", std::to_string(period)};
  }

 protected:
  void do_apply(const ThrottleConfig& c) override {
    std::vector<std::string> done;
    run({"-pl", format_watts(c.power_cap_w)}, done);
    done.push_back("power limit");
    run({"-lgc", std::to_string(c.core_clock_cap_mhz)}, done);
    done.push_back("core clock lock");
    run({"-lmc", std::to_string(c.mem_clock_cap_mhz)}, done);
  }

  void do_reset() override {
    std::vector<std::string> done;
    run({"-rgc"}, done);
    done.push_back("core clock reset");
    run({"-rmc"}, done);
    done.push_back("memory clock reset");
    run({"-pl", format_watts(handle_.host.max_power_cap_w)}, done);
  }

 private:
  static std::string format_watts(Watts w) {
    return w == std::floor(w) ? std::to_string(static_cast<long long>(w)) : format_fixed(w, 2);
  }

  static bool mentions_privileges(std::string text) {
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return text.find("permission") != std::string::npos || text.find("root") != std::string::npos ||
           text.find("privilege") != std::string::npos;
  }

  std::string run(const std::vector<std::string>& args, const std::vector<std::string>& done) {
    std::vector<std::string> argv = {tool_, "-i", std::to_string(index_)};
    argv.insert(argv.end(), args.begin(), args.end());
    const std::string cmd = join_argv(argv);
    std::string partial;
    if (!done.empty()) {
      partial = " (already applied: ";
      for (std::size_t i = 0; i < done.size(); ++i) partial += (i ? ", " : "") + done[i];
      partial += ")";
    }
    CapturedRun r;
    try {
      r = run_capture(argv);
    } catch (const SpawnError& e) {
      throw DeviceError("control tool unavailable: '" + cmd + "' failed: " + e.what() +
                        "; set GTB_NVIDIA_SMI to the nvidia-smi path" + partial);
    }
    if (!r.status.success()) {
      std::string detail = std::string(trim(r.err.empty() ? r.out : r.err));
      if (mentions_privileges(r.out + r.err))
        throw DeviceError("insufficient privileges: '" + cmd + "' " + r.status.describe() + ": " + detail +
                          "; run as root" + partial);
      throw DeviceError("'" + cmd + "' " + r.status.describe() + ": " + detail + partial);
    }
    return r.out;
  }

  std::string tool_;
  int index_;
};

}  // namespace gtb
