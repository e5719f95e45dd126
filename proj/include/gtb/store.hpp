#pragma once

// Append-only result store persisted as line-delimited JSON (results.ndjson).
//
// Line 1:  {"kind":"header","format":"gtb-results","version":1,"campaign_id":...,"tier_labels":{...}}
// Then one entry per line, in insertion order:
//   {"kind":"calibration", ...CalibrationReport}
//   {"kind":"run", ...RunRecord}
//   {"kind":"event","at":...,"message":...}

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gtb/calibrate.hpp"
#include "gtb/error.hpp"
#include "gtb/metrics.hpp"

namespace gtb {

inline constexpr int kResultsVersion = 1;
inline constexpr const char* kResultsFile = "results.ndjson";

struct EventEntry {
  std::string at;
  std::string message;
  bool operator==(const EventEntry&) const = default;
};

using StoreEntry = std::variant<CalibrationReport, RunRecord, EventEntry>;

inline nlohmann::json to_json(const ThrottleConfig& c) {
  return {{"power_cap_w", c.power_cap_w}, {"core_clock_cap_mhz", c.core_clock_cap_mhz}, {"mem_clock_cap_mhz", c.mem_clock_cap_mhz}};
}

inline ThrottleConfig throttle_from_json(const nlohmann::json& j) {
  return {j.at("power_cap_w").get<double>(), j.at("core_clock_cap_mhz").get<int>(), j.at("mem_clock_cap_mhz").get<int>()};
}

inline nlohmann::json to_json(const CalibrationReport& r) {
  return {{"kind", "calibration"},
          {"tier_name", r.tier_name},
          {"target_tflops", r.target_tflops},
          {"final_config", to_json(r.final_config)},
          {"measured_tflops", r.measured_tflops},
          {"deviation_pct", r.deviation_pct},
          {"probes_used", r.probes_used},
          {"converged", r.converged},
          {"warnings", r.warnings}};
}

inline CalibrationReport calibration_from_json(const nlohmann::json& j) {
  CalibrationReport r;
  r.tier_name = j.at("tier_name").get<std::string>();
  r.target_tflops = j.at("target_tflops").get<double>();
  r.final_config = throttle_from_json(j.at("final_config"));
  r.measured_tflops = j.at("measured_tflops").get<double>();
  r.deviation_pct = j.at("deviation_pct").get<double>();
  r.probes_used = j.at("probes_used").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline nlohmann::json to_json(const RunRecord& r) {
  return {{"kind", "run"},
          {"tier_name", r.tier_name},
          {"splat_count", r.splat_count},
          {"animated", r.animated},
          {"animated_splats", r.animated_splats},
          {"repeat_index", r.repeat_index},
          {"repeats", r.repeats},
          {"duration_s", r.duration_s},
          {"fps",
           {{"mean_fps", r.fps.mean_fps},
            {"sd_fps", r.fps.sd_fps},
            {"bucket_count", r.fps.bucket_count},
            {"total_frames", r.fps.total_frames}}},
          {"energy",
           {{"p_avg_w", r.energy.p_avg_w},
            {"energy_per_frame_j", r.energy.energy_per_frame_j},
            {"perf_per_watt", r.energy.perf_per_watt}}},
          {"violations", r.violations},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at}};
}

inline RunRecord run_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.tier_name = j.at("tier_name").get<std::string>();
  r.splat_count = j.at("splat_count").get<std::int64_t>();
  r.animated = j.at("animated").get<bool>();
  r.animated_splats = j.at("animated_splats").get<std::int64_t>();
  r.repeat_index = j.at("repeat_index").get<int>();
  r.repeats = j.at("repeats").get<int>();
  r.duration_s = j.at("duration_s").get<double>();
  const auto& f = j.at("fps");
  r.fps = {f.at("mean_fps").get<double>(), f.at("sd_fps").get<double>(), f.at("bucket_count").get<std::int64_t>(),
           f.at("total_frames").get<std::int64_t>()};
  const auto& e = j.at("energy");
  r.energy = {e.at("p_avg_w").get<double>(), e.at("energy_per_frame_j").get<double>(), e.at("perf_per_watt").get<double>()};
  r.violations = j.at("violations").get<std::int64_t>();
  r.started_at = j.at("started_at").get<std::string>();
  r.finished_at = j.at("finished_at").get<std::string>();
  if (r.duration_s <= 0 || r.violations < 0) throw DomainError("run record violates duration/violation invariants");
  return r;
}

inline nlohmann::json to_json(const EventEntry& e) { return {{"kind", "event"}, {"at", e.at}, {"message", e.message}}; }

inline std::string entry_line(const StoreEntry& e) {
  return std::visit([](const auto& v) { return to_json(v).dump(); }, e);
}

class ResultStore {
 public:
  ResultStore() = default;
  explicit ResultStore(std::string campaign_id) : campaign_id_(std::move(campaign_id)) {}

  const std::string& campaign_id() const { return campaign_id_; }
  void set_campaign_id(std::string id) { campaign_id_ = std::move(id); }

  const std::map<std::string, std::string>& tier_labels() const { return tier_labels_; }
  void set_tier_label(const std::string& tier, const std::string& label) { tier_labels_[tier] = label; }
  std::string label_for(const std::string& tier) const {
    auto it = tier_labels_.find(tier);
    return it == tier_labels_.end() ? tier : it->second;
  }

  const std::vector<StoreEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  /// Throws if a run with the same (tier, splats, animated, repeat) is present.
  void add(StoreEntry e) {
    if (const auto* r = std::get_if<RunRecord>(&e)) {
      if (has_run(key_of(*r)))
        throw DomainError("duplicate run record for tier '" + r->tier_name + "', splats " +
                          std::to_string(r->splat_count) + ", repeat " + std::to_string(r->repeat_index));
      run_keys_.push_back(key_of(*r));
    }
    entries_.push_back(std::move(e));
  }

  bool has_run(const RunKey& k) const { return std::find(run_keys_.begin(), run_keys_.end(), k) != run_keys_.end(); }

  std::vector<RunRecord> runs() const { return collect<RunRecord>(); }
  std::vector<CalibrationReport> calibrations() const { return collect<CalibrationReport>(); }
  std::vector<EventEntry> events() const { return collect<EventEntry>(); }

  /// Most recent calibration for `tier`.
  std::optional<CalibrationReport> calibration_for(const std::string& tier) const {
    std::optional<CalibrationReport> out;
    for (const auto& e : entries_)
      if (const auto* c = std::get_if<CalibrationReport>(&e); c && c->tier_name == tier) out = *c;
    return out;
  }

  std::string header_line() const {
    nlohmann::json h = {{"kind", "header"},
                        {"format", "gtb-results"},
                        {"version", kResultsVersion},
                        {"campaign_id", campaign_id_},
                        {"tier_labels", tier_labels_}};
    return h.dump();
  }

  bool operator==(const ResultStore&) const = default;

 private:
  template <typename T>
  std::vector<T> collect() const {
    std::vector<T> out;
    for (const auto& e : entries_)
      if (const auto* v = std::get_if<T>(&e)) out.push_back(*v);
    return out;
  }

  std::string campaign_id_;
  std::map<std::string, std::string> tier_labels_;
  std::vector<StoreEntry> entries_;
  std::vector<RunKey> run_keys_;
};

inline std::string serialize_store(const ResultStore& store) {
  std::string out = store.header_line() + "\n";
  for (const auto& e : store.entries()) out += entry_line(e) + "\n";
  return out;
}

inline void persist(const ResultStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kResultsFile;
  const auto tmp = dir / (std::string(kResultsFile) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write " + tmp.string());
    out << serialize_store(store);
    if (!out.flush()) throw DomainError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct LoadResult {
  ResultStore store;
  std::vector<std::string> warnings;  // one per skipped line, with its line number
};

inline LoadResult parse_store(std::istream& in, const std::string& origin) {
  LoadResult res;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      if (!have_header) throw DomainError(origin + ": line " + std::to_string(lineno) + ": unreadable header");
      res.warnings.push_back(origin + ": line " + std::to_string(lineno) + ": corrupt entry skipped");
      continue;
    }
    if (!have_header) {
      if (!j.is_object() || j.value("kind", "") != "header" || j.value("format", "") != "gtb-results")
        throw DomainError(origin + ": line " + std::to_string(lineno) + ": missing gtb-results header");
      if (j.value("version", 0) != kResultsVersion)
        throw DomainError(origin + ": results version " + j.value("version", nlohmann::json()).dump() +
                          " is not supported (expected " + std::to_string(kResultsVersion) + ")");
      res.store.set_campaign_id(j.value("campaign_id", ""));
      const nlohmann::json labels = j.value("tier_labels", nlohmann::json::object());
      for (const auto& [k, v] : labels.items()) res.store.set_tier_label(k, v.get<std::string>());
      have_header = true;
      continue;
    }
    try {
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "calibration") {
        res.store.add(calibration_from_json(j));
      } else if (kind == "run") {
        res.store.add(run_from_json(j));
      } else if (kind == "event") {
        res.store.add(EventEntry{j.at("at").get<std::string>(), j.at("message").get<std::string>()});
      } else {
        throw DomainError("unknown entry kind '" + kind + "'");
      }
    } catch (const std::exception& e) {
      res.warnings.push_back(origin + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return res;
}

/// A directory without a results file loads as an empty store.
inline LoadResult load(const std::filesystem::path& dir) {
  const auto path = dir / kResultsFile;
  if (!std::filesystem::exists(path)) return {};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read " + path.string());
  return parse_store(in, path.string());
}

/// Appends entries to results.ndjson as they are produced, flushing each line.
class ResultWriter {
 public:
  ResultWriter(const std::filesystem::path& dir, const ResultStore& store) {
    std::filesystem::create_directories(dir);
    const auto path = dir / kResultsFile;
    if (!std::filesystem::exists(path) || std::filesystem::file_size(path) == 0) {
      persist(store, dir);
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw DomainError("cannot append to " + path.string());
  }

  void append(const StoreEntry& e) {
    out_ << entry_line(e) << '\n';
    out_.flush();
    if (!out_) throw DomainError("failed to append result entry");
  }

 private:
  std::ofstream out_;
};

}  // namespace gtb
