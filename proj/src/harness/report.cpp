#include "vdfp/harness/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vdfp::harness {

Curve smoothed_curve(const std::vector<LogRow>& rows, int window) {
  Curve c;
  std::vector<double> returns;
  for (const auto& r : rows) {
    c.x.push_back(static_cast<double>(r.global_step));
    returns.push_back(r.episode_return);
  }
  c.y = moving_average(returns, window);
  return c;
}

Band aggregate(const std::vector<Curve>& curves, int points) {
  if (curves.empty()) throw std::invalid_argument("aggregate: no curves");
  if (points < 1) throw std::invalid_argument("aggregate: points must be positive");
  double x_max = 0.0;
  for (const auto& c : curves) {
    if (!c.x.empty()) x_max = std::max(x_max, c.x.back());
  }
  Band b;
  for (int k = 1; k <= points; ++k) {
    const double x = x_max * k / points;
    std::vector<double> ys;
    for (const auto& c : curves) {
      const auto it = std::upper_bound(c.x.begin(), c.x.end(), x);
      if (it == c.x.begin()) continue;
      ys.push_back(c.y[static_cast<std::size_t>(std::distance(c.x.begin(), it) - 1)]);
    }
    if (ys.empty()) continue;
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    double half = 0.0;
    if (ys.size() > 1) {
      double ss = 0.0;
      for (double y : ys) ss += (y - mean) * (y - mean);
      half = 0.5 * std::sqrt(ss / static_cast<double>(ys.size() - 1));
    }
    b.x.push_back(x);
    b.mean.push_back(mean);
    b.half_std.push_back(half);
    b.n.push_back(static_cast<int>(ys.size()));
  }
  return b;
}

std::string band_csv(const Band& b) {
  std::string out = "x,mean,half_std,n\n";
  for (std::size_t i = 0; i < b.x.size(); ++i) out += fmt::format("{},{},{},{}\n", b.x[i], b.mean[i], b.half_std[i], b.n[i]);
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::string& title, const std::vector<Series>& series) {
  constexpr double W = 720, H = 440, L = 80, R = 170, T = 40, B = 50;
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 0.0;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.band.x.size(); ++i) {
      const double lo = s.band.mean[i] - s.band.half_std[i];
      const double hi = s.band.mean[i] + s.band.half_std[i];
      if (!any) {
        y_lo = lo;
        y_hi = hi;
        any = true;
      }
      y_lo = std::min(y_lo, lo);
      y_hi = std::max(y_hi, hi);
      x_hi = std::max(x_hi, s.band.x[i]);
    }
  }
  if (!any) y_hi = 1.0;
  if (y_hi - y_lo < 1e-9) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto px = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto py = [&](double y) { return T + (y_hi - y) / (y_hi - y_lo) * (H - T - B); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  svg += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", (L + W - R) / 2,
                     escape(title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", L, T,
                     W - L - R, H - T - B);
  for (int k = 0; k <= 4; ++k) {
    const double xv = x_lo + (x_hi - x_lo) * k / 4;
    const double yv = y_lo + (y_hi - y_lo) * k / 4;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.0f}</text>\n", px(xv), H - B + 18, xv);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", L - 6, py(yv) + 4, yv);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">environment steps</text>\n", (L + W - R) / 2,
                     H - 10);
  svg += fmt::format(
      "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">average return (100 "
      "episodes)</text>\n",
      (T + H - B) / 2, (T + H - B) / 2);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Band& b = series[si].band;
    const char* color = kPalette[si % std::size(kPalette)];
    if (b.x.empty()) continue;
    const bool shaded = std::any_of(b.half_std.begin(), b.half_std.end(), [](double h) { return h > 0.0; });
    if (shaded) {
      std::string pts;
      for (std::size_t i = 0; i < b.x.size(); ++i) pts += fmt::format("{:.2f},{:.2f} ", px(b.x[i]), py(b.mean[i] + b.half_std[i]));
      for (std::size_t i = b.x.size(); i-- > 0;) pts += fmt::format("{:.2f},{:.2f} ", px(b.x[i]), py(b.mean[i] - b.half_std[i]));
      svg += fmt::format("<polygon class=\"band\" points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
                         pts, color);
    }
    std::string pts;
    for (std::size_t i = 0; i < b.x.size(); ++i) pts += fmt::format("{:.2f},{:.2f} ", px(b.x[i]), py(b.mean[i]));
    svg += fmt::format("<polyline class=\"mean\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts,
                       color);
    const double ly = T + 16 + 20 * static_cast<double>(si);
    svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"3\"/>\n", W - R + 12,
                       ly, W - R + 32, ly, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", W - R + 38, ly + 4, escape(series[si].label));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace vdfp::harness
