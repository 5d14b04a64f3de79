#include "safemm/plots.hpp"

#include "safemm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace safemm {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kMargin = 50.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string open_svg(double w, double h) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + s + "</text>\n";
}

void save(const std::string& path, const std::string& body, std::vector<std::string>& written) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << body;
  written.push_back(path);
}

std::string empty_plot(const std::string& title) {
  return open_svg(kWidth, kHeight) + text(kWidth / 2, 30, title, "middle", 16) +
         text(kWidth / 2, kHeight / 2, "empty trace", "middle", 14) + "</svg>\n";
}

// Gray level from light (early) to dark (late).
std::string shade(double s) {
  const int v = static_cast<int>(std::lround(200.0 - 170.0 * std::clamp(s, 0.0, 1.0)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", v, v, std::min(255, v + 40));
  return buf;
}

std::string clearance_plot(const std::vector<TraceRecord>& rows) {
  const double t0 = rows.front().time;
  const double t1 = std::max(rows.back().time, t0 + 1e-9);
  double dmax = 0.1;
  for (const auto& r : rows) {
    for (double d : {r.min_distance, r.sensed_distance, r.predicted_distance, r.true_distance}) {
      if (std::isfinite(d)) dmax = std::max(dmax, d);
    }
  }
  dmax = std::min(dmax, 3.0);
  const double top_h = 0.62 * (kHeight - 2 * kMargin);
  const double bottom_y = kMargin + top_h + 30.0;
  const double bottom_h = kHeight - kMargin - bottom_y;
  auto x_of = [&](double t) { return kMargin + (t - t0) / (t1 - t0) * (kWidth - 2 * kMargin); };
  auto y_dist = [&](double d) { return kMargin + top_h * (1.0 - std::min(d, dmax) / dmax); };
  auto y_scale = [&](double s) { return bottom_y + bottom_h * (1.0 - s); };

  std::string svg = open_svg(kWidth, kHeight);
  svg += text(kWidth / 2, 24, "clearance and speed scale", "middle", 16);
  svg += "<g stroke=\"#888\" fill=\"none\">\n";
  svg += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(kWidth - 2 * kMargin) +
         "\" height=\"" + num(top_h) + "\"/>\n";
  svg += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(bottom_y) + "\" width=\"" + num(kWidth - 2 * kMargin) +
         "\" height=\"" + num(bottom_h) + "\"/>\n</g>\n";
  svg += text(kMargin - 5, kMargin + 4, num(dmax) + " m", "end", 10) + text(kMargin - 5, kMargin + top_h, "0", "end", 10);
  svg += text(kMargin - 5, bottom_y + 4, "1", "end", 10) + text(kMargin - 5, bottom_y + bottom_h, "0", "end", 10);
  svg += text(kMargin, kHeight - 12, "t = " + num(t0) + " s") + text(kWidth - kMargin, kHeight - 12, num(t1) + " s", "end");

  struct Series {
    const char* name;
    const char* color;
    double TraceRecord::*field;
  };
  const Series series[] = {{"min_distance", "#1f77b4", &TraceRecord::min_distance},
                           {"sensed_distance", "#2ca02c", &TraceRecord::sensed_distance},
                           {"predicted_distance", "#ff7f0e", &TraceRecord::predicted_distance},
                           {"true_distance", "#7f7f7f", &TraceRecord::true_distance}};
  double legend_x = kMargin;
  for (const auto& s : series) {
    std::string points;
    for (const auto& r : rows) points += num(x_of(r.time)) + "," + num(y_dist(r.*s.field)) + " ";
    svg += "<polyline data-series=\"" + std::string(s.name) + "\" fill=\"none\" stroke=\"" + s.color +
           "\" stroke-width=\"1.2\" points=\"" + points + "\"/>\n";
    svg += "<rect x=\"" + num(legend_x) + "\" y=\"" + num(kMargin - 14) + "\" width=\"10\" height=\"4\" fill=\"" +
           s.color + "\"/>" + text(legend_x + 14, kMargin - 9, s.name, "start", 10);
    legend_x += 140;
  }
  std::string points;
  for (const auto& r : rows) points += num(x_of(r.time)) + "," + num(y_scale(std::clamp(r.speed_scale, 0.0, 1.0))) + " ";
  svg += "<polyline data-series=\"speed_scale\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.2\" points=\"" +
         points + "\"/>\n";
  svg += text(kMargin + 4, bottom_y + 12, "speed scale", "start", 10);
  svg += "</svg>\n";
  return svg;
}

struct View {
  double x0 = -1, y0 = -1, x1 = 1, y1 = 1;

  void add(double x, double y, double r = 0.0) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x - r);
    y0 = std::min(y0, y - r);
    x1 = std::max(x1, x + r);
    y1 = std::max(y1, y + r);
  }
  double scale() const { return std::min((kWidth - 2 * kMargin) / (x1 - x0), (kWidth - 2 * kMargin) / (y1 - y0)); }
  // World coordinates inside the group: y points up.
  std::string group() const {
    const double s = scale();
    return "<g transform=\"translate(" + num(kMargin - s * x0) + "," + num(kMargin + s * y1) + ") scale(" + num(s) +
           "," + num(-s) + ")\">\n";
  }
};

View view_of(const std::vector<TraceRecord>& rows) {
  View v;
  v.x0 = v.y0 = std::numeric_limits<double>::infinity();
  v.x1 = v.y1 = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    v.add(r.ee.x(), r.ee.y());
    for (const auto& o : r.obstacles) v.add(o.center.x(), o.center.y(), o.radius);
    for (const auto& b : r.band) v.add(b.x(), b.y());
  }
  if (!std::isfinite(v.x0)) v = View{};
  const double pad = 0.2;
  v.x0 -= pad;
  v.y0 -= pad;
  v.x1 += pad;
  v.y1 += pad;
  return v;
}

std::string polyline(const std::vector<Vec2>& pts, const std::string& color, double width, const char* extra = "") {
  std::string points;
  for (const auto& p : pts) points += num(p.x()) + "," + num(p.y()) + " ";
  return "<polyline " + std::string(extra) + "fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + num(width) +
         "\" vector-effect=\"non-scaling-stroke\" points=\"" + points + "\"/>\n";
}

std::string band_plot(const std::vector<TraceRecord>& rows) {
  const View v = view_of(rows);
  std::string svg = open_svg(kWidth, kWidth);
  svg += text(kWidth / 2, 24, "band evolution (end effector, top view)", "middle", 16);
  svg += v.group();
  std::vector<std::size_t> with_band;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].band.empty()) with_band.push_back(i);
  }
  const std::size_t stride = std::max<std::size_t>(1, with_band.size() / 40);
  for (std::size_t k = 0; k < with_band.size(); k += stride) {
    const auto& r = rows[with_band[k]];
    svg += polyline(r.band, shade(static_cast<double>(k) / std::max<std::size_t>(1, with_band.size() - 1)), 1.0,
                    ("data-tick=\"" + std::to_string(r.tick) + "\" ").c_str());
  }
  std::vector<Vec2> executed;
  for (const auto& r : rows) executed.emplace_back(r.ee.x(), r.ee.y());
  svg += polyline(executed, "#d62728", 2.0, "data-series=\"executed\" ");
  svg += "</g>\n</svg>\n";
  return svg;
}

std::string snapshot_plot(const std::vector<TraceRecord>& rows, std::size_t index, const View& v) {
  const TraceRecord& r = rows[index];
  std::string svg = open_svg(kWidth, kWidth);
  svg += text(kWidth / 2, 24, "t = " + num(r.time) + " s, " + r.phase + ", scale " + num(r.speed_scale), "middle", 16);
  svg += v.group();
  for (const auto& o : r.obstacles) {
    svg += "<circle data-id=\"" + std::to_string(o.id) + "\" cx=\"" + num(o.center.x()) + "\" cy=\"" +
           num(o.center.y()) + "\" r=\"" + num(o.radius) +
           "\" fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"#3182bd\" vector-effect=\"non-scaling-stroke\"/>\n";
  }
  for (const auto& t : r.tracks) {
    svg += "<circle data-track=\"" + std::to_string(t.id) + "\" cx=\"" + num(t.position.x()) + "\" cy=\"" +
           num(t.position.y()) + "\" r=\"0.05\" fill=\"#ff7f0e\"/>\n";
    svg += polyline({t.position, t.position + t.velocity}, "#ff7f0e", 1.5);
  }
  if (!r.band.empty()) svg += polyline(r.band, "#2ca02c", 1.5, "data-series=\"band\" ");
  std::vector<Vec2> executed;
  for (std::size_t i = 0; i <= index; ++i) executed.emplace_back(rows[i].ee.x(), rows[i].ee.y());
  svg += polyline(executed, "#d62728", 1.5, "data-series=\"executed\" ");
  svg += "<circle data-series=\"ee\" cx=\"" + num(r.ee.x()) + "\" cy=\"" + num(r.ee.y()) + "\" r=\"0.04\" fill=\"#d62728\"/>\n";
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace

std::vector<std::string> export_plots(const std::vector<TraceRecord>& rows, const std::string& dir, int snapshots) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  std::vector<std::string> written;
  if (rows.empty()) {
    save((base / "clearance.svg").string(), empty_plot("clearance and speed scale"), written);
    save((base / "band.svg").string(), empty_plot("band evolution"), written);
    save((base / "snapshot.svg").string(), empty_plot("snapshot"), written);
    return written;
  }
  save((base / "clearance.svg").string(), clearance_plot(rows), written);
  save((base / "band.svg").string(), band_plot(rows), written);
  const View v = view_of(rows);
  const int n = std::max(1, snapshots);
  std::vector<std::size_t> picks;
  for (int k = 0; k < n; ++k) {
    const std::size_t i = n == 1 ? rows.size() - 1 : (rows.size() - 1) * static_cast<std::size_t>(k) / static_cast<std::size_t>(n - 1);
    if (picks.empty() || picks.back() != i) picks.push_back(i);
  }
  for (std::size_t i : picks) {
    char name[40];
    std::snprintf(name, sizeof name, "snapshot_%05ld.svg", rows[i].tick);
    save((base / name).string(), snapshot_plot(rows, i, v), written);
  }
  return written;
}

}  // namespace safemm
