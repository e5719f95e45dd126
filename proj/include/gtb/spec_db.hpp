#pragma once

// JSON-backed database of reference GPUs and emulating hosts.
//
// {
//   "format": "gtb-gpu-specs", "version": 1,
//   "gpus":  [ { "name", "display_name"?, "theoretical_fp32_tflops", "nominal_power_w",
//                "nominal_core_clock_mhz", "nominal_mem_bandwidth_gbs",
//                "nominal_mem_clock_mhz"?, "power_override_w"? } ],
//   "hosts": [ { "name", "gpu", "supported_mem_clocks_mhz", "core_clock_step_mhz",
//                "min_power_cap_w", "max_power_cap_w" } ]
// }

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtb/error.hpp"
#include "gtb/model.hpp"

namespace gtb {

inline constexpr int kSpecDbVersion = 1;

class SpecDatabase {
 public:
  const std::vector<GpuSpec>& gpus() const { return gpus_; }
  const std::vector<HostProfile>& hosts() const { return hosts_; }

  void add(GpuSpec gpu) {
    validate(gpu);
    if (find_gpu(gpu.name)) throw DomainError("duplicate gpu name '" + gpu.name + "'");
    gpus_.push_back(std::move(gpu));
  }

  void add(HostProfile host) {
    validate(host);
    for (const auto& h : hosts_)
      if (h.spec.name == host.spec.name) throw DomainError("duplicate host '" + host.spec.name + "'");
    hosts_.push_back(std::move(host));
  }

  const GpuSpec* find_gpu(const std::string& name) const {
    for (const auto& g : gpus_)
      if (g.name == name) return &g;
    return nullptr;
  }

  const GpuSpec& gpu(const std::string& name) const {
    if (const auto* g = find_gpu(name)) return *g;
    throw DomainError("unknown gpu '" + name + "' in spec database");
  }

  const HostProfile& host(const std::string& name) const {
    for (const auto& h : hosts_)
      if (h.spec.name == name) return h;
    throw DomainError("unknown host '" + name + "' in spec database");
  }

 private:
  std::vector<GpuSpec> gpus_;
  std::vector<HostProfile> hosts_;
};

namespace detail {

template <typename T>
T required_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DomainError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline GpuSpec gpu_from_json(const nlohmann::json& j) {
  const std::string where = "gpu '" + j.value("name", std::string("?")) + "'";
  GpuSpec g;
  g.name = detail::required_field<std::string>(j, "name", where);
  g.display_name = j.value("display_name", std::string());
  g.theoretical_fp32_tflops = detail::required_field<double>(j, "theoretical_fp32_tflops", where);
  g.nominal_power_w = detail::required_field<double>(j, "nominal_power_w", where);
  g.nominal_core_clock_mhz = detail::required_field<int>(j, "nominal_core_clock_mhz", where);
  g.nominal_mem_bandwidth_gbs = detail::required_field<double>(j, "nominal_mem_bandwidth_gbs", where);
  if (j.contains("nominal_mem_clock_mhz")) g.nominal_mem_clock_mhz = j.at("nominal_mem_clock_mhz").get<int>();
  if (j.contains("power_override_w")) g.power_override_w = j.at("power_override_w").get<double>();
  return g;
}

inline nlohmann::json to_json(const GpuSpec& g) {
  nlohmann::json j = {{"name", g.name}};
  if (!g.display_name.empty()) j["display_name"] = g.display_name;
  j["theoretical_fp32_tflops"] = g.theoretical_fp32_tflops;
  j["nominal_power_w"] = g.nominal_power_w;
  j["nominal_core_clock_mhz"] = g.nominal_core_clock_mhz;
  j["nominal_mem_bandwidth_gbs"] = g.nominal_mem_bandwidth_gbs;
  if (g.nominal_mem_clock_mhz) j["nominal_mem_clock_mhz"] = *g.nominal_mem_clock_mhz;
  if (g.power_override_w) j["power_override_w"] = *g.power_override_w;
  return j;
}

inline SpecDatabase parse_spec_database(const std::string& text, const std::string& origin = "<memory>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(origin + ": " + e.what());
  }
  if (doc.value("format", std::string()) != "gtb-gpu-specs")
    throw DomainError(origin + ": not a gpu spec database (format field must be \"gtb-gpu-specs\")");
  if (doc.value("version", 0) != kSpecDbVersion)
    throw DomainError(origin + ": unsupported spec database version " + doc.value("version", nlohmann::json()).dump());

  SpecDatabase db;
  try {
    for (const auto& jg : doc.value("gpus", nlohmann::json::array())) db.add(gpu_from_json(jg));
    for (const auto& jh : doc.value("hosts", nlohmann::json::array())) {
      const std::string where = "host '" + jh.value("name", std::string("?")) + "'";
      HostProfile h;
      h.spec = db.gpu(detail::required_field<std::string>(jh, "gpu", where));
      h.spec.name = detail::required_field<std::string>(jh, "name", where);
      h.supported_mem_clocks_mhz = detail::required_field<std::vector<int>>(jh, "supported_mem_clocks_mhz", where);
      h.supported_core_clock_step_mhz = jh.value("core_clock_step_mhz", 15);
      h.min_power_cap_w = detail::required_field<double>(jh, "min_power_cap_w", where);
      h.max_power_cap_w = detail::required_field<double>(jh, "max_power_cap_w", where);
      db.add(std::move(h));
    }
  } catch (const DomainError& e) {
    throw DomainError(origin + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(origin + ": " + e.what());
  }
  return db;
}

inline SpecDatabase load_spec_database(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read spec database " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec_database(ss.str(), path.string());
}

}  // namespace gtb
