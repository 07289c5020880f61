#pragma once

// Static SVG charts from MetricRow CSVs: one file per CSV with a min-rate and
// a sum-rate panel, a line per scheme/regime (mean across seeds) and a shaded
// min/max band.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "covert_rsma/experiment.hpp"

namespace covert_rsma {

struct SeriesPoint {
  double x = 0.0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct Series {
  std::string label;  // "<scheme> <regime>"
  std::vector<SeriesPoint> points;
};

/// Aggregates rows across seeds. When the rows cover several sweep values the
/// x axis is the sweep value (using each seed's last row); otherwise it is
/// the episode index.
inline std::vector<Series> build_series(const std::vector<MetricRow>& rows, bool sum_rate,
                                        bool* over_sweep = nullptr) {
  std::set<double> sweep_values;
  for (const auto& r : rows) sweep_values.insert(r.sweep_value);
  const bool by_sweep = sweep_values.size() > 1;
  if (over_sweep) *over_sweep = by_sweep;

  std::map<std::string, std::map<double, std::vector<double>>> grouped;
  if (by_sweep) {
    std::map<std::tuple<std::string, double, std::uint64_t>, const MetricRow*> last;
    for (const auto& r : rows) {
      auto& slot = last[{r.scheme + " " + r.regime, r.sweep_value, r.seed}];
      if (!slot || r.episode >= slot->episode) slot = &r;
    }
    for (const auto& [k, r] : last) {
      grouped[std::get<0>(k)][std::get<1>(k)].push_back(sum_rate ? r->avg_sum_rate
                                                                 : r->avg_min_rate);
    }
  } else {
    for (const auto& r : rows) {
      grouped[r.scheme + " " + r.regime][static_cast<double>(r.episode)].push_back(
          sum_rate ? r.avg_sum_rate : r.avg_min_rate);
    }
  }
  std::vector<Series> out;
  for (const auto& [label, xs] : grouped) {
    Series s{label, {}};
    for (const auto& [x, ys] : xs) {
      double total = 0.0;
      for (double y : ys) total += y;
      s.points.push_back({x, total / static_cast<double>(ys.size()),
                          *std::min_element(ys.begin(), ys.end()),
                          *std::max_element(ys.begin(), ys.end())});
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline std::string svg_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline std::string x_axis_label(const std::string& stem, bool over_sweep) {
  if (!over_sweep) return "episode";
  if (stem.find("power") != std::string::npos) return "transmit power P_t (dB)";
  if (stem.find("epsilon") != std::string::npos) return "covert requirement epsilon";
  if (stem.find("blocklength") != std::string::npos) return "max blocklength (kbits)";
  return "sweep value";
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

inline void svg_panel(std::ostream& os, const std::vector<Series>& series, double top,
                      const std::string& title, const std::string& xlabel) {
  constexpr double left = 70.0;
  constexpr double width = 560.0;
  constexpr double height = 240.0;
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymax = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymax = std::max(ymax, p.hi);
    }
  }
  if (!(xmax > xmin)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  ymax *= 1.05;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * width; };
  auto py = [&](double y) { return top + height - y / ymax * height; };

  os << "<text x=\"" << left + width / 2 << "\" y=\"" << top - 10
     << "\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width << "\" height=\""
     << height << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymax * i / 4.0;
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4
       << "\" text-anchor=\"end\" font-size=\"10\">" << svg_num(yv) << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << top + height + 14
       << "\" text-anchor=\"middle\" font-size=\"10\">" << svg_num(xv) << "</text>\n";
  }
  os << "<text x=\"" << left + width / 2 << "\" y=\"" << top + height + 32
     << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  os << "<text transform=\"translate(" << left - 50 << "," << top + height / 2
     << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">rate (bps/Hz)</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::ostringstream band;
    for (const auto& p : s.points) band << px(p.x) << ',' << py(p.hi) << ' ';
    for (auto it = s.points.rbegin(); it != s.points.rend(); ++it) {
      band << px(it->x) << ',' << py(it->lo) << ' ';
    }
    os << "<polygon points=\"" << band.str() << "\" fill=\"" << color
       << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    std::ostringstream line;
    for (const auto& p : s.points) line << px(p.x) << ',' << py(p.mean) << ' ';
    os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    os << "<text x=\"" << left + width + 10 << "\" y=\"" << top + 16 + 16.0 * i
       << "\" font-size=\"11\" fill=\"" << color << "\">" << s.label << "</text>\n";
  }
}

}  // namespace detail

/// Writes `<stem>.svg` into `out_dir` for every CSV; returns the paths written.
/// A CSV that is empty or violates the schema raises ConfigError before any
/// file is written for it.
inline std::vector<std::filesystem::path> render_plots(
    const std::vector<std::filesystem::path>& csv_paths, const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  std::filesystem::create_directories(out_dir);
  for (const auto& path : csv_paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    const auto rows = read_csv(in, path.string());
    if (rows.empty()) throw ConfigError(path.string() + ": no data rows");
    bool over_sweep = false;
    const auto min_series = build_series(rows, false, &over_sweep);
    const auto sum_series = build_series(rows, true);
    const std::string stem = path.stem().string();
    const std::string xlabel = detail::x_axis_label(stem, over_sweep);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"660\" "
           "font-family=\"sans-serif\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    detail::svg_panel(svg, min_series, 40.0, "average min-rate", xlabel);
    detail::svg_panel(svg, sum_series, 360.0, "average sum-rate", xlabel);
    svg << "</svg>\n";

    const auto target = out_dir / (stem + ".svg");
    std::ofstream out(target, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + target.string() + "'");
    out << svg.str();
    written.push_back(target);
  }
  return written;
}

}  // namespace covert_rsma
