#pragma once

// Power/clock telemetry: nvidia-smi dmon parsing, time-weighted averages,
// envelope checks and the on-disk trace format.

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gtb/error.hpp"
#include "gtb/model.hpp"
#include "gtb/util.hpp"

namespace gtb {

struct PowerSample {
  double t = 0;  // seconds since trace start
  std::optional<double> power_w;
  std::optional<int> sm_clock_mhz;
  std::optional<int> mem_clock_mhz;

  bool operator==(const PowerSample&) const = default;
};

struct PowerTrace {
  std::vector<PowerSample> samples;
  double sample_period_s = 1.0;

  double start() const { return samples.empty() ? 0.0 : samples.front().t; }
  /// The last sample holds for one period.
  double end() const { return samples.empty() ? 0.0 : samples.back().t + sample_period_s; }

  bool operator==(const PowerTrace&) const = default;
};

struct DmonParseResult {
  PowerTrace trace;
  std::size_t skipped_rows = 0;
};

/// Incremental parser for `nvidia-smi dmon -s pc` output. Lines starting with
/// '#' are headers; the one naming `gpu` fixes the column layout. Power comes
/// from `pwr`, the core clock from `pclk` (or `sm`), memory clock from `mclk`.
class DmonParser {
 public:
  explicit DmonParser(double period_s = 1.0) {
    if (!(period_s > 0)) throw DomainError("dmon sample period must be > 0");
    result_.trace.sample_period_s = period_s;
  }

  /// `t` is the receipt time of the line, relative to sampler start.
  void feed(std::string_view line, double t) {
    auto text = trim(line);
    if (text.empty()) return;
    if (text.front() == '#') {
      header(text.substr(1));
      return;
    }
    if (!layout_) {
      ++result_.skipped_rows;
      return;
    }
    auto tok = split_ws(text);
    if (tok.size() != columns_) {
      ++result_.skipped_rows;
      return;
    }
    PowerSample s;
    bool ok = true;
    auto field = [&](std::size_t col) -> std::optional<double> {
      if (tok[col] == "-") return std::nullopt;
      auto v = parse_double(tok[col]);
      if (!v || !std::isfinite(*v) || *v < 0) ok = false;
      return v;
    };
    s.power_w = field(layout_->pwr);
    if (auto v = field(layout_->core)) s.sm_clock_mhz = static_cast<int>(std::lround(*v));
    if (auto v = field(layout_->mem)) s.mem_clock_mhz = static_cast<int>(std::lround(*v));
    if (!ok) {
      ++result_.skipped_rows;
      return;
    }
    auto& samples = result_.trace.samples;
    s.t = std::max(t, 0.0);
    if (!samples.empty() && s.t <= samples.back().t) s.t = samples.back().t + 1e-6;
    samples.push_back(s);
  }

  std::size_t sample_count() const { return result_.trace.samples.size(); }

  DmonParseResult finish() const {
    if (result_.trace.samples.empty())
      throw DomainError("dmon stream contained no parseable data rows (" + std::to_string(result_.skipped_rows) +
                        " skipped)");
    return result_;
  }

 private:
  struct Layout {
    std::size_t pwr, core, mem;
  };

  void header(std::string_view rest) {
    auto tok = split_ws(rest);
    if (std::find(tok.begin(), tok.end(), "gpu") == tok.end()) return;  // units line
    auto col = [&](std::string_view name) -> std::optional<std::size_t> {
      auto it = std::find(tok.begin(), tok.end(), name);
      if (it == tok.end()) return std::nullopt;
      return static_cast<std::size_t>(it - tok.begin());
    };
    auto pwr = col("pwr");
    auto core = col("pclk");
    if (!core) core = col("sm");
    auto mem = col("mclk");
    std::string missing;
    if (!pwr) missing += " pwr";
    if (!core) missing += " pclk/sm";
    if (!mem) missing += " mclk";
    if (!missing.empty()) throw DomainError("dmon header is missing required columns:" + missing);
    layout_ = Layout{*pwr, *core, *mem};
    columns_ = tok.size();
  }

  DmonParseResult result_;
  std::optional<Layout> layout_;
  std::size_t columns_ = 0;
};

struct TimedLine {
  double t = 0;
  std::string text;
};

inline DmonParseResult parse_dmon_stream(const std::vector<TimedLine>& lines, double period_s) {
  DmonParser p(period_s);
  for (const auto& l : lines) p.feed(l.text, l.t);
  return p.finish();
}

/// For logs without receipt times: the n-th data row (malformed rows included)
/// is stamped n * period.
inline DmonParseResult parse_dmon_stream(std::istream& in, double period_s = 1.0) {
  DmonParser p(period_s);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    auto text = trim(line);
    if (text.empty()) continue;
    const bool data = text.front() != '#';
    p.feed(text, static_cast<double>(row) * period_s);
    if (data) ++row;
  }
  return p.finish();
}

/// Time-weighted mean power over [t0, t1]. Each sample holds until the next
/// one (the last for one period); samples without a power reading drop out of
/// both numerator and weight.
inline Watts average_power(const PowerTrace& trace, double t0, double t1) {
  if (!(t1 > t0)) throw DomainError("average_power: window end must exceed start");
  const auto& s = trace.samples;
  double energy = 0;
  double weight = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i].power_w) continue;
    const double a = std::max(s[i].t, t0);
    const double b = std::min(i + 1 < s.size() ? s[i + 1].t : s[i].t + trace.sample_period_s, t1);
    if (b <= a) continue;
    energy += *s[i].power_w * (b - a);
    weight += b - a;
  }
  if (!(weight > 0))
    throw DomainError("average_power: no power readings in window [" + format_exact(t0) + ", " + format_exact(t1) + "]");
  return energy / weight;
}

inline Watts average_power(const PowerTrace& trace) { return average_power(trace, trace.start(), trace.end()); }

struct EnvelopeTolerances {
  double power = 0.05;
  double clock = 0.02;
};

enum class EnvelopeChannel { power, core_clock, mem_clock };

inline const char* to_string(EnvelopeChannel c) {
  switch (c) {
    case EnvelopeChannel::power: return "power";
    case EnvelopeChannel::core_clock: return "core_clock";
    case EnvelopeChannel::mem_clock: return "mem_clock";
  }
  return "?";
}

struct EnvelopeViolation {
  std::size_t sample_index = 0;
  EnvelopeChannel kind = EnvelopeChannel::power;
  double observed = 0;
  double limit = 0;

  bool operator==(const EnvelopeViolation&) const = default;
};

/// Samples above a cap by more than its tolerance. Values exactly at the
/// tolerated limit pass; missing readings never flag.
inline std::vector<EnvelopeViolation> validate_envelope(const PowerTrace& trace, const ThrottleConfig& config,
                                                        const EnvelopeTolerances& tol = {}) {
  std::vector<EnvelopeViolation> out;
  const double power_limit = config.power_cap_w * (1 + tol.power);
  const double core_limit = config.core_clock_cap_mhz * (1 + tol.clock);
  const double mem_limit = config.mem_clock_cap_mhz * (1 + tol.clock);
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    if (s.power_w && *s.power_w > power_limit) out.push_back({i, EnvelopeChannel::power, *s.power_w, power_limit});
    if (s.sm_clock_mhz && *s.sm_clock_mhz > core_limit)
      out.push_back({i, EnvelopeChannel::core_clock, static_cast<double>(*s.sm_clock_mhz), core_limit});
    if (s.mem_clock_mhz && *s.mem_clock_mhz > mem_limit)
      out.push_back({i, EnvelopeChannel::mem_clock, static_cast<double>(*s.mem_clock_mhz), mem_limit});
  }
  return out;
}

// Trace file: "# gpu-tier-bench trace v1 period=<s>", a column header, then
// "t_s,power_w,sm_clock_mhz,mem_clock_mhz" rows with empty fields for missing values.

inline constexpr std::string_view kTraceMagic = "# gpu-tier-bench trace v1 period=";
inline constexpr std::string_view kTraceColumns = "t_s,power_w,sm_clock_mhz,mem_clock_mhz";

inline void write_trace(std::ostream& out, const PowerTrace& trace) {
  out << kTraceMagic << format_exact(trace.sample_period_s) << '\n' << kTraceColumns << '\n';
  for (const auto& s : trace.samples) {
    out << format_exact(s.t) << ',';
    if (s.power_w) out << format_exact(*s.power_w);
    out << ',';
    if (s.sm_clock_mhz) out << *s.sm_clock_mhz;
    out << ',';
    if (s.mem_clock_mhz) out << *s.mem_clock_mhz;
    out << '\n';
  }
}

inline PowerTrace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kTraceMagic, 0) != 0)
    throw DomainError("not a gpu-tier-bench v1 trace file (bad first line)");
  PowerTrace trace;
  auto period = parse_double(std::string_view(line).substr(kTraceMagic.size()));
  if (!period || !(*period > 0)) throw DomainError("trace file: bad period in '" + line + "'");
  trace.sample_period_s = *period;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto text = trim(line);
    if (text.empty() || text == kTraceColumns) continue;
    auto f = split_char(text, ',');
    auto fail = [&] { return DomainError("trace file line " + std::to_string(lineno) + ": malformed row '" + line + "'"); };
    if (f.size() != 4) throw fail();
    PowerSample s;
    auto t = parse_double(f[0]);
    if (!t) throw fail();
    s.t = *t;
    if (!f[1].empty()) {
      s.power_w = parse_double(f[1]);
      if (!s.power_w) throw fail();
    }
    for (int c = 2; c < 4; ++c) {
      if (f[c].empty()) continue;
      auto v = parse_int(f[c]);
      if (!v) throw fail();
      (c == 2 ? s.sm_clock_mhz : s.mem_clock_mhz) = static_cast<int>(*v);
    }
    if (!trace.samples.empty() && s.t <= trace.samples.back().t) throw DomainError("trace file line " + std::to_string(lineno) + ": timestamps must increase");
    trace.samples.push_back(s);
  }
  return trace;
}

/// dmon-compatible rendering, used by the simulated sampler.
inline std::string dmon_header() {
  return "# gpu    pwr  gtemp  mtemp   mclk   pclk\n"
         "# Idx      W      C      C    MHz    MHz\n";
}

inline std::string dmon_row(int gpu, std::optional<double> power_w, std::optional<int> mem_mhz, std::optional<int> core_mhz) {
  auto cell = [](std::optional<long> v) { return v ? std::to_string(*v) : std::string("-"); };
  char buf[128];
  std::snprintf(buf, sizeof buf, "%5d %6s %6s %6s %6s %6s\n", gpu,
                cell(power_w ? std::optional<long>(std::lround(*power_w)) : std::nullopt).c_str(), "40", "-",
                cell(mem_mhz ? std::optional<long>(*mem_mhz) : std::nullopt).c_str(),
                cell(core_mhz ? std::optional<long>(*core_mhz) : std::nullopt).c_str());
  return buf;
}

}  // namespace gtb
