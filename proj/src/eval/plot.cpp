#include "vpure/eval/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "vpure/common/error.hpp"

namespace vpure::eval {
namespace {

constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                "#ff7f0e", "#9467bd", "#8c564b"};
constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 50;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string histogram_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, int bins) {
  if (series.empty() || bins < 1) throw invalid_input("histogram_svg: nothing to plot");
  double lo = 1e300, hi = -1e300;
  for (const auto& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (lo > hi) throw invalid_input("histogram_svg: all series are empty");
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<std::vector<double>> density;
  double top = 0.0;
  for (const auto& s : series) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double v : s.values) {
      auto b = static_cast<int>((v - lo) / (hi - lo) * bins);
      h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
    }
    for (auto& c : h) {
      c /= std::max<std::size_t>(s.values.size(), 1);
      top = std::max(top, c);
    }
    density.push_back(std::move(h));
  }
  const double pw = kWidth - 2.0 * kMargin, ph = kHeight - 2.0 * kMargin;
  std::ostringstream os;
  os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                    kWidth, kHeight)
     << '\n';
  os << fmt::format(R"(<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>)", kWidth / 2, escape(title)) << '\n';
  os << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)", kMargin, kMargin, pw, ph) << '\n';
  for (std::size_t si = 0; si < series.size(); ++si) {
    std::ostringstream path;
    for (int b = 0; b < bins; ++b) {
      const double x0 = kMargin + pw * b / bins;
      const double x1 = kMargin + pw * (b + 1) / bins;
      const double y = kMargin + ph * (1.0 - density[si][b] / top);
      path << (b == 0 ? fmt::format("M{:.1f},{:.1f} ", x0, kMargin + ph) : "")
           << fmt::format("L{:.1f},{:.1f} L{:.1f},{:.1f} ", x0, y, x1, y);
    }
    path << fmt::format("L{:.1f},{:.1f}", kMargin + pw, kMargin + ph);
    const char* color = kColors[si % kColors.size()];
    os << fmt::format(R"(<path d="{}" fill="{}" fill-opacity="0.25" stroke="{}"/>)", path.str(), color, color) << '\n';
    os << fmt::format(R"(<text x="{}" y="{}" fill="{}">{}</text>)", kMargin + 8, kMargin + 16 + 16 * si, color,
                      escape(series[si].label))
       << '\n';
  }
  os << fmt::format(R"(<text x="{}" y="{}">{:.3f}</text>)", kMargin, kHeight - kMargin + 16, lo) << '\n';
  os << fmt::format(R"(<text x="{}" y="{}" text-anchor="end">{:.3f}</text>)", kWidth - kMargin, kHeight - kMargin + 16, hi) << '\n';
  os << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)", kWidth / 2, kHeight - 12, escape(x_label)) << '\n';
  os << "</svg>\n";
  return os.str();
}

std::string bar_svg(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                    double max_value) {
  if (bars.empty() || !(max_value > 0.0)) throw invalid_input("bar_svg: nothing to plot");
  const int row = 28;
  const int height = kMargin + row * static_cast<int>(bars.size()) + 20;
  const double pw = kWidth - 200.0 - kMargin;
  std::ostringstream os;
  os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                    kWidth, height)
     << '\n';
  os << fmt::format(R"(<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>)", kWidth / 2, escape(title)) << '\n';
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = kMargin + row * static_cast<double>(i);
    const double w = pw * std::clamp(bars[i].second / max_value, 0.0, 1.0);
    os << fmt::format(R"(<text x="{}" y="{}" text-anchor="end">{}</text>)", 190, y + 16, escape(bars[i].first)) << '\n';
    os << fmt::format(R"(<rect x="200" y="{}" width="{:.1f}" height="20" fill="{}"/>)", y, w, kColors[i % kColors.size()]) << '\n';
    os << fmt::format(R"(<text x="{:.1f}" y="{}">{:.3f}</text>)", 204 + w, y + 16, bars[i].second) << '\n';
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vpure::eval
