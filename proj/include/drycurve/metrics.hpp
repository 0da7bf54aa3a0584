#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "drycurve/dataset.hpp"

namespace drycurve {

// The four reported measures. STD is the sample standard deviation of the
// absolute residuals; R^2 uses squared sums in both numerator and denominator
// (the translation-consistent form).
struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  double std_abs_resid = 0.0;
  double r2 = 0.0;
};

inline Metrics compute_metrics(std::span<const double> estimates,
                               std::span<const double> measured) {
  const std::size_t n = estimates.size();
  if (n == 0) throw std::invalid_argument("compute_metrics: empty input");
  if (measured.size() != n) throw std::invalid_argument("compute_metrics: length mismatch");

  double abs_sum = 0.0, sq_sum = 0.0, y_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = measured[i] - estimates[i];
    abs_sum += std::abs(r);
    sq_sum += r * r;
    y_sum += measured[i];
  }
  Metrics m;
  m.mae = abs_sum / static_cast<double>(n);
  m.mse = sq_sum / static_cast<double>(n);

  double var_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(measured[i] - estimates[i]) - m.mae;
    var_abs += d * d;
  }
  m.std_abs_resid = n > 1 ? std::sqrt(var_abs / static_cast<double>(n - 1)) : 0.0;

  const double y_mean = y_sum / static_cast<double>(n);
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = measured[i] - y_mean;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0) {
    m.r2 = sq_sum == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  } else {
    m.r2 = 1.0 - sq_sum / ss_tot;
  }
  return m;
}

enum class RollingAxis { DryingTime, Estimate };

// Moving-window view of the absolute residuals: for each center (the sorted
// unique axis values) the mean, standard deviation, and support count of
// |residual| within +/- half_width. Empty windows are omitted.
struct RollingCurve {
  struct Point {
    double center = 0.0;
    double mean_abs_resid = 0.0;
    double dispersion = 0.0;
    std::size_t count = 0;
  };
  std::vector<Point> points;
  double half_width = 0.0;
  RollingAxis axis = RollingAxis::DryingTime;
};

inline RollingCurve rolling_mae(std::span<const double> estimates,
                                std::span<const double> measured,
                                std::span<const double> axis_values, double half_width,
                                RollingAxis axis = RollingAxis::DryingTime) {
  const std::size_t n = estimates.size();
  if (measured.size() != n || axis_values.size() != n)
    throw std::invalid_argument("rolling_mae: length mismatch");
  if (!(half_width > 0.0)) throw std::invalid_argument("rolling_mae: half_width must be positive");

  std::vector<std::pair<double, double>> by_axis(n);  // (axis, |residual|)
  for (std::size_t i = 0; i < n; ++i)
    by_axis[i] = {axis_values[i], std::abs(measured[i] - estimates[i])};
  std::sort(by_axis.begin(), by_axis.end());

  std::vector<double> centers;
  for (const auto& [a, _] : by_axis)
    if (centers.empty() || centers.back() != a) centers.push_back(a);

  RollingCurve curve;
  curve.half_width = half_width;
  curve.axis = axis;
  std::size_t lo = 0;
  for (double c : centers) {
    while (lo < n && by_axis[lo].first < c - half_width) ++lo;
    std::size_t hi = lo;
    double sum = 0.0;
    while (hi < n && by_axis[hi].first <= c + half_width) sum += by_axis[hi++].second;
    const std::size_t count = hi - lo;
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = by_axis[i].second - mean;
      var += d * d;
    }
    const double disp = count > 1 ? std::sqrt(var / static_cast<double>(count - 1)) : 0.0;
    curve.points.push_back({c, mean, disp, count});
  }
  return curve;
}

// Metrics on the full fold and on its ECD samples only, mirroring the
// two-range report layout.
inline std::pair<Metrics, Metrics> evaluate_ranges(std::span<const double> estimates,
                                                   const Dataset& d) {
  if (estimates.size() != d.size())
    throw std::invalid_argument("evaluate_ranges: estimates not aligned with dataset");
  const Metrics overall = compute_metrics(estimates, targets(d));
  std::vector<double> est_ecd, mc_ecd;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.samples[i].cls == SampleClass::ECD) {
      est_ecd.push_back(estimates[i]);
      mc_ecd.push_back(d.samples[i].mc);
    }
  }
  if (est_ecd.empty()) throw std::invalid_argument("evaluate_ranges: no ECD samples");
  return {overall, compute_metrics(est_ecd, mc_ecd)};
}

}  // namespace drycurve
