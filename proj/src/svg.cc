#include "seqattack/svg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace seqattack::svg {

namespace {

constexpr double kWidth = 640, kHeight = 360;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 60;

std::string Escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string F(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string Tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double y_min, y_max;
  double plot_w() const { return kWidth - kLeft - kRight; }
  double plot_h() const { return kHeight - kTop - kBottom; }
  double Y(double v) const {
    const double span = y_max > y_min ? y_max - y_min : 1.0;
    return kTop + plot_h() * (1.0 - (std::clamp(v, y_min, y_max) - y_min) / span);
  }
};

void Open(std::ostringstream& os, const std::string& title, const Frame& f,
          const std::string& x_label, const std::string& y_label) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << Escape(title) << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    const double y = f.Y(v);
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << F(y)
       << "\" y2=\"" << F(y) << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << F(y + 4) << "\" text-anchor=\"end\">"
       << Tick(v) << "</text>\n";
  }
  os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft << "\" y1=\"" << kTop << "\" y2=\""
     << kTop + f.plot_h() << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
     << "\" text-anchor=\"middle\">" << Escape(x_label) << "</text>\n"
     << "<text transform=\"translate(16," << kTop + f.plot_h() / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(y_label) << "</text>\n";
}

}  // namespace

std::string BarChart(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values, const std::string& y_label, double y_min,
                     double y_max) {
  Frame f{y_min, y_max};
  std::ostringstream os;
  Open(os, title, f, "", y_label);
  const std::size_t n = std::max<std::size_t>(values.size(), 1);
  const double slot = f.plot_w() / static_cast<double>(n);
  const double base = f.Y(std::clamp(0.0, y_min, y_max));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = kLeft + slot * (static_cast<double>(i) + 0.15);
    const double y = f.Y(values[i]);
    os << "<rect x=\"" << F(x) << "\" y=\"" << F(std::min(y, base)) << "\" width=\""
       << F(slot * 0.7) << "\" height=\"" << F(std::abs(base - y))
       << "\" fill=\"#4a7ab5\"/>\n"
       << "<text x=\"" << F(x + slot * 0.35) << "\" y=\"" << F(std::min(y, base) - 4)
       << "\" text-anchor=\"middle\">" << Tick(values[i]) << "</text>\n"
       << "<text x=\"" << F(x + slot * 0.35) << "\" y=\"" << F(kTop + f.plot_h() + 16)
       << "\" text-anchor=\"middle\">" << Escape(i < labels.size() ? labels[i] : "")
       << "</text>\n";
  }
  os << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << F(base)
     << "\" y2=\"" << F(base) << "\" stroke=\"black\"/>\n</svg>\n";
  return os.str();
}

std::string LineChart(const std::string& title, const std::vector<double>& values,
                      const std::string& x_label, const std::string& y_label) {
  double lo = 0.0, hi = 1.0;
  if (!values.empty()) {
    lo = *std::min_element(values.begin(), values.end());
    hi = *std::max_element(values.begin(), values.end());
    if (hi - lo < 1e-9) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  Frame f{lo, hi};
  std::ostringstream os;
  Open(os, title, f, x_label, y_label);
  const double n = static_cast<double>(std::max<std::size_t>(values.size(), 2) - 1);
  os << "<polyline fill=\"none\" stroke=\"#b5524a\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << F(kLeft + f.plot_w() * static_cast<double>(i) / n) << ',' << F(f.Y(values[i])) << ' ';
  }
  os << "\"/>\n<text x=\"" << kWidth - kRight << "\" y=\"" << F(kTop + f.plot_h() + 16)
     << "\" text-anchor=\"end\">" << values.size() << "</text>\n</svg>\n";
  return os.str();
}

std::string Histogram(const std::string& title, const std::vector<double>& values,
                      std::size_t bins, double lo, double hi, const std::string& x_label) {
  bins = std::max<std::size_t>(bins, 1);
  std::vector<double> counts(bins, 0.0);
  for (double v : values) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    auto b = static_cast<long>(std::floor(t * static_cast<double>(bins)));
    b = std::clamp<long>(b, 0, static_cast<long>(bins) - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < bins; ++i) {
    labels.push_back(Tick(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins)));
  }
  const double top = std::max(1.0, *std::max_element(counts.begin(), counts.end()));
  std::string out = BarChart(title, labels, counts, "count", 0.0, top);
  // Reuse the bar layout but label the x axis.
  const std::string marker = "</svg>\n";
  out.insert(out.size() - marker.size(),
             "<text x=\"" + F(kWidth / 2) + "\" y=\"" + F(kHeight - 10) +
                 "\" text-anchor=\"middle\">" + Escape(x_label) + "</text>\n");
  return out;
}

}  // namespace seqattack::svg
