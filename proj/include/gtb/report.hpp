#pragma once

// Reports over a result store: a markdown table laid out like the reference
// frame-rate table, a full-precision CSV, and three SVG charts.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "gtb/error.hpp"
#include "gtb/metrics.hpp"
#include "gtb/store.hpp"
#include "gtb/util.hpp"

namespace gtb {

enum class ReportFormat { table, csv, svg };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "table") return ReportFormat::table;
  if (s == "csv") return ReportFormat::csv;
  if (s == "svg") return ReportFormat::svg;
  throw UsageError("unknown report format '" + s + "' (expected table, csv or svg)");
}

/// "3.49 M"
inline std::string format_splats_millions(std::int64_t splats) {
  return format_fixed(static_cast<double>(splats) / 1e6, 2) + " M";
}

/// "38.9 ±2.7"
inline std::string format_fps_cell(double mean, double sd) {
  return format_fixed(mean, 1) + " ±" + format_fixed(sd, 1);
}

/// One aggregated record per (tier, splats, animation) cell, ordered by tier
/// (first appearance in the store), animated before static, then by
/// descending splat count.
inline std::vector<RunRecord> aggregated_rows(const ResultStore& store) {
  std::vector<std::string> tier_order;
  std::map<std::tuple<std::string, bool, std::int64_t>, std::vector<RunRecord>> cells;
  for (const auto& r : store.runs()) {
    if (std::find(tier_order.begin(), tier_order.end(), r.tier_name) == tier_order.end()) tier_order.push_back(r.tier_name);
    cells[{r.tier_name, r.animated, r.splat_count}].push_back(r);
  }
  std::vector<RunRecord> rows;
  for (auto& [key, recs] : cells) rows.push_back(aggregate_repeats(recs));
  auto tier_rank = [&](const std::string& t) { return std::find(tier_order.begin(), tier_order.end(), t) - tier_order.begin(); };
  std::sort(rows.begin(), rows.end(), [&](const RunRecord& a, const RunRecord& b) {
    return std::make_tuple(tier_rank(a.tier_name), !a.animated, -a.total_splats()) <
           std::make_tuple(tier_rank(b.tier_name), !b.animated, -b.total_splats());
  });
  return rows;
}

inline std::string render_table(const ResultStore& store) {
  const auto rows = aggregated_rows(store);
  if (rows.empty()) throw DomainError("report: result store has no run records");
  std::ostringstream out;
  out << "| GPU | Animations? | # Splats | FPS (mean ± SD) | P_avg (W) | E/frame (J) | FPS/W |\n";
  out << "|---|---|---:|---:|---:|---:|---:|\n";
  std::string last_tier;
  std::optional<bool> last_anim;
  for (const auto& r : rows) {
    const bool new_tier = r.tier_name != last_tier;
    const bool new_anim = new_tier || last_anim != r.animated;
    out << "| " << (new_tier ? store.label_for(r.tier_name) : "") << " | " << (new_anim ? (r.animated ? "Yes" : "No") : "")
        << " | " << format_splats_millions(r.total_splats()) << " | " << format_fps_cell(r.fps.mean_fps, r.fps.sd_fps)
        << " | " << format_fixed(r.energy.p_avg_w, 1) << " | " << format_fixed(r.energy.energy_per_frame_j, 3) << " | "
        << format_fixed(r.energy.perf_per_watt, 4) << " |\n";
    last_tier = r.tier_name;
    last_anim = r.animated;
  }
  return out.str();
}

inline std::string render_csv(const ResultStore& store) {
  const auto rows = aggregated_rows(store);
  if (rows.empty()) throw DomainError("report: result store has no run records");
  std::ostringstream out;
  out << "tier,gpu,animated,splat_count,animated_splats,total_splats,repeats,duration_s,mean_fps,sd_fps,bucket_count,"
         "total_frames,p_avg_w,energy_per_frame_j,perf_per_watt,violations\n";
  for (const auto& r : rows) {
    out << r.tier_name << ',' << store.label_for(r.tier_name) << ',' << (r.animated ? 1 : 0) << ',' << r.splat_count << ','
        << r.animated_splats << ',' << r.total_splats() << ',' << r.repeats << ',' << format_exact(r.duration_s) << ','
        << format_exact(r.fps.mean_fps) << ',' << format_exact(r.fps.sd_fps) << ',' << r.fps.bucket_count << ','
        << r.fps.total_frames << ',' << format_exact(r.energy.p_avg_w) << ',' << format_exact(r.energy.energy_per_frame_j)
        << ',' << format_exact(r.energy.perf_per_watt) << ',' << r.violations << '\n';
  }
  return out.str();
}

// --- SVG ---------------------------------------------------------------------

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline double nice_step(double range) {
  if (!(range > 0)) return 1;
  const double raw = range / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10 * mag;
}

}  // namespace detail

/// Line chart; with `x_categories`, x values are indices into it.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<ChartSeries>& series,
                                  const std::vector<std::string>& x_categories = {}) {
  constexpr double W = 760, H = 460, L = 70, R = 190, T = 40, B = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 0, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) xmin = 0, xmax = 1;
  if (!(ymax > ymin)) ymax = ymin + 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  const double ystep = detail::nice_step(ymax - ymin);
  ymax = std::ceil(ymax / ystep) * ystep;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::xml_escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double y = ymin; y <= ymax + ystep * 1e-9; y += ystep) {
    o << "<line x1=\"" << L - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << W - R << "\" y2=\"" << py(y)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << format_fixed(y, ystep < 1 ? 3 : 0)
      << "</text>\n";
  }
  if (!x_categories.empty()) {
    for (std::size_t i = 0; i < x_categories.size(); ++i)
      o << "<text x=\"" << px(static_cast<double>(i)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
        << detail::xml_escape(x_categories[i]) << "</text>\n";
  } else {
    const double xstep = detail::nice_step(xmax - xmin);
    for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + xstep * 1e-9; x += xstep)
      o << "<text x=\"" << px(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
        << format_fixed(x, xstep < 1 ? 2 : 0) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << detail::xml_escape(x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (T + H - B) / 2
    << ")\">" << detail::xml_escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % std::size(palette)];
    auto pts = series[i].points;
    std::sort(pts.begin(), pts.end());
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) o << px(x) << ',' << py(y) << ' ';
    o << "\"/>\n";
    for (auto [x, y] : pts) o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = T + 16 * static_cast<double>(i);
    o << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << W - R + 28 << "\" y=\"" << ly + 1 << "\">" << detail::xml_escape(series[i].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string cell_name(const RunRecord& r) {
  return format_splats_millions(r.total_splats()) + (r.animated ? " anim" : " static");
}

/// chart file name -> SVG text
inline std::map<std::string, std::string> render_charts(const ResultStore& store) {
  const auto rows = aggregated_rows(store);
  if (rows.empty()) throw DomainError("report: result store has no run records");
  std::vector<std::string> tiers;
  for (const auto& r : rows)
    if (std::find(tiers.begin(), tiers.end(), r.tier_name) == tiers.end()) tiers.push_back(r.tier_name);
  std::map<std::string, double> power_cap;
  for (const auto& c : store.calibrations()) power_cap[c.tier_name] = c.final_config.power_cap_w;

  std::map<std::string, ChartSeries> fps_power, energy;
  std::map<std::string, ChartSeries> ppw;
  for (const auto& r : rows) {
    const std::string cell = cell_name(r);
    const auto tier_idx = static_cast<double>(std::find(tiers.begin(), tiers.end(), r.tier_name) - tiers.begin());
    if (auto it = power_cap.find(r.tier_name); it != power_cap.end()) {
      fps_power[cell].name = cell;
      fps_power[cell].points.emplace_back(it->second, r.fps.mean_fps);
    }
    energy[cell].name = cell;
    energy[cell].points.emplace_back(tier_idx, r.energy.energy_per_frame_j);
    const std::string series = store.label_for(r.tier_name) + (r.animated ? " anim" : " static");
    ppw[series].name = series;
    ppw[series].points.emplace_back(static_cast<double>(r.total_splats()) / 1e6, r.energy.perf_per_watt);
  }
  auto values = [](const std::map<std::string, ChartSeries>& m) {
    std::vector<ChartSeries> v;
    for (const auto& [k, s] : m) v.push_back(s);
    return v;
  };
  std::vector<std::string> tier_labels;
  for (const auto& t : tiers) tier_labels.push_back(store.label_for(t));
  return {
      {"fps_vs_power.svg", svg_line_chart("FPS vs power cap", "power cap (W)", "FPS", values(fps_power))},
      {"energy_per_frame.svg",
       svg_line_chart("Energy per frame by tier", "tier", "J/frame", values(energy), tier_labels)},
      {"perf_per_watt.svg", svg_line_chart("Performance per watt vs splat count", "splats (M)", "FPS/W", values(ppw))},
  };
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw DomainError("cannot write " + path.string());
}

/// Writes report.md, report.csv or charts/*.svg under `out_dir`; returns the paths written.
inline std::vector<std::filesystem::path> render_report(const ResultStore& store, ReportFormat format,
                                                        const std::filesystem::path& out_dir) {
  if (store.runs().empty()) throw DomainError("report: result store has no run records");
  std::vector<std::filesystem::path> written;
  switch (format) {
    case ReportFormat::table:
      written.push_back(out_dir / "report.md");
      write_text_file(written.back(), render_table(store));
      break;
    case ReportFormat::csv:
      written.push_back(out_dir / "report.csv");
      write_text_file(written.back(), render_csv(store));
      break;
    case ReportFormat::svg:
      for (const auto& [name, svg] : render_charts(store)) {
        written.push_back(out_dir / "charts" / name);
        write_text_file(written.back(), svg);
      }
      break;
  }
  return written;
}

}  // namespace gtb
