#include "latcast/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "latcast/textio.hpp"

namespace latcast {

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 480.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  double to_px(double v, double px_lo, double px_hi) const {
    if (hi == lo) return (px_lo + px_hi) / 2.0;
    return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
  }
};

std::string polyline(const std::vector<ForecastRow>& rows, const Axis& x,
                     const Axis& y, bool predicted) {
  std::string pts;
  for (const ForecastRow& r : rows) {
    const double vx = x.to_px(static_cast<double>(r.ts_ms), kMarginLeft,
                              kWidth - kMarginRight);
    const double vy = y.to_px(predicted ? r.predicted_latency_ms
                                        : r.actual_latency_ms,
                              kHeight - kMarginBottom, kMarginTop);
    pts += format_double(vx) + "," + format_double(vy) + " ";
  }
  if (!pts.empty()) pts.pop_back();
  return pts;
}

// Round tick spacing to a 1/2/5 decade step.
double nice_step(double span, int target_ticks) {
  if (span <= 0) return 1.0;
  const double raw = span / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

void write_plot_svg(const std::filesystem::path& path,
                    const std::vector<ForecastRow>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("plot: no paired rows to draw");
  }

  Axis x, y;
  x.lo = static_cast<double>(rows.front().ts_ms);
  x.hi = static_cast<double>(rows.back().ts_ms);
  double y_lo = rows.front().actual_latency_ms;
  double y_hi = y_lo;
  for (const ForecastRow& r : rows) {
    y_lo = std::min({y_lo, r.actual_latency_ms, r.predicted_latency_ms});
    y_hi = std::max({y_hi, r.actual_latency_ms, r.predicted_latency_ms});
  }
  const double pad = (y_hi - y_lo) * 0.05;
  y.lo = y_lo - pad;
  y.hi = y_hi + pad;
  if (y.lo == y.hi) {
    y.lo -= 1.0;
    y.hi += 1.0;
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
     << kHeight << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "  <text x=\"" << kWidth / 2
     << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
        "text-anchor=\"middle\">Uplink latency: actual vs predicted</text>\n";

  // Axes.
  os << "  <line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop
     << "\" x2=\"" << kMarginLeft << "\" y2=\"" << kHeight - kMarginBottom
     << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom
     << "\" x2=\"" << kWidth - kMarginRight << "\" y2=\""
     << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";

  const double x_step = nice_step(x.hi - x.lo, 8);
  for (double v = std::ceil(x.lo / x_step) * x_step; v <= x.hi; v += x_step) {
    const double px = x.to_px(v, kMarginLeft, kWidth - kMarginRight);
    os << "  <line x1=\"" << px << "\" y1=\"" << kHeight - kMarginBottom
       << "\" x2=\"" << px << "\" y2=\"" << kHeight - kMarginBottom + 5
       << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << px << "\" y=\"" << kHeight - kMarginBottom + 20
       << "\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"middle\">" << format_double(v) << "</text>\n";
  }
  const double y_step = nice_step(y.hi - y.lo, 6);
  for (double v = std::ceil(y.lo / y_step) * y_step; v <= y.hi; v += y_step) {
    const double py = y.to_px(v, kHeight - kMarginBottom, kMarginTop);
    os << "  <line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << py << "\" x2=\""
       << kMarginLeft << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << kMarginLeft - 9 << "\" y=\"" << py + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"end\">" << format_double(v) << "</text>\n";
  }
  os << "  <text x=\"" << (kMarginLeft + kWidth - kMarginRight) / 2 << "\" y=\""
     << kHeight - 12
     << "\" font-family=\"sans-serif\" font-size=\"12\" "
        "text-anchor=\"middle\">ts_ms</text>\n";
  os << "  <text x=\"18\" y=\"" << (kMarginTop + kHeight - kMarginBottom) / 2
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
        "transform=\"rotate(-90 18 "
     << (kMarginTop + kHeight - kMarginBottom) / 2
     << ")\">latency_ms</text>\n";

  os << "  <polyline class=\"actual\" fill=\"none\" stroke=\"#1f77b4\" "
        "stroke-width=\"1.5\" points=\""
     << polyline(rows, x, y, false) << "\"/>\n";
  os << "  <polyline class=\"predicted\" fill=\"none\" stroke=\"#d62728\" "
        "stroke-width=\"1.5\" stroke-dasharray=\"5,3\" points=\""
     << polyline(rows, x, y, true) << "\"/>\n";

  // Legend.
  os << "  <line x1=\"" << kWidth - 200 << "\" y1=\"" << kMarginTop + 10
     << "\" x2=\"" << kWidth - 170 << "\" y2=\"" << kMarginTop + 10
     << "\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
  os << "  <text x=\"" << kWidth - 164 << "\" y=\"" << kMarginTop + 14
     << "\" font-family=\"sans-serif\" font-size=\"12\">actual</text>\n";
  os << "  <line x1=\"" << kWidth - 200 << "\" y1=\"" << kMarginTop + 28
     << "\" x2=\"" << kWidth - 170 << "\" y2=\"" << kMarginTop + 28
     << "\" stroke=\"#d62728\" stroke-width=\"1.5\" "
        "stroke-dasharray=\"5,3\"/>\n";
  os << "  <text x=\"" << kWidth - 164 << "\" y=\"" << kMarginTop + 32
     << "\" font-family=\"sans-serif\" font-size=\"12\">predicted</text>\n";

  os << "</svg>\n";
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void write_tidy_csv(const std::filesystem::path& path,
                    const std::vector<ForecastRow>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("plot: no paired rows to write");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  os << "ts_ms,actual_latency_ms,predicted_latency_ms\n";
  for (const ForecastRow& r : rows) {
    os << r.ts_ms << ',' << format_double(r.actual_latency_ms) << ','
       << format_double(r.predicted_latency_ms) << '\n';
  }
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace latcast
