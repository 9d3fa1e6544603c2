#ifndef SEQATTACK_SVG_H_
#define SEQATTACK_SVG_H_

#include <string>
#include <vector>

// Minimal standalone SVG charts for the run report.
namespace seqattack::svg {

// Vertical bars on a [0, y_max] axis. Negative values are drawn below the
// baseline when y_min < 0.
std::string BarChart(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values, const std::string& y_label,
                     double y_min = 0.0, double y_max = 1.0);

// Polyline over x = 0..n-1.
std::string LineChart(const std::string& title, const std::vector<double>& values,
                      const std::string& x_label, const std::string& y_label);

// Equal-width bins over [lo, hi]; values outside are clamped into the end
// bins.
std::string Histogram(const std::string& title, const std::vector<double>& values,
                      std::size_t bins, double lo, double hi, const std::string& x_label);

}  // namespace seqattack::svg

#endif  // SEQATTACK_SVG_H_
