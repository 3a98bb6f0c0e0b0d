// OpenMP kernels for recurrence-plot imaging. Serial counterparts live in
// reference/rp_reference.cpp.
#include <algorithm>
#include <cmath>
#include <string>

#include "itsc/error.hpp"
#include "itsc/imaging.hpp"

namespace itsc::rp {

namespace {

void check_threshold(double clip_threshold) {
  if (!(clip_threshold > 0) || !std::isfinite(clip_threshold))
    throw ParameterError("clip threshold N must be finite and > 0");
}

}  // namespace

RPImage modified_rp(const Trajectory& traj, double clip_threshold) {
  check_threshold(clip_threshold);
  const std::size_t n = traj.size();
  const std::size_t dim = traj.dim;
  RPImage out;
  out.side = n;
  out.clip_threshold = clip_threshold;
  out.values.resize(n * n);
  const double* x = traj.points.data();
  double* v = out.values.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * dim;
    double* row = v + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = std::min(detail::euclidean(xi, x + j * dim, dim), clip_threshold);
  }
  return out;
}

RPImage clipped_rp_resized(const Trajectory& traj, double clip_threshold, std::size_t target) {
  check_threshold(clip_threshold);
  const std::size_t n = traj.size();
  if (target < 1 || target > n)
    throw SizingError("clipped_rp_resized: target " + std::to_string(target) + " must lie in [1, " +
                      std::to_string(n) + "]");
  if (target == n) return modified_rp(traj, clip_threshold);

  const auto w = detail::area_weights(n, target);
  const std::size_t dim = traj.dim;
  const double* x = traj.points.data();
  RPImage out;
  out.side = target;
  out.clip_threshold = clip_threshold;
  out.values.assign(target * target, 0.0);
  double* o = out.values.data();
  const auto bins = static_cast<std::ptrdiff_t>(target);

#pragma omp parallel
  {
    std::vector<double> row(n);
    // Upper-triangle rows shrink with a; dynamic scheduling balances them.
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t sa = 0; sa < bins; ++sa) {
      const auto a = static_cast<std::size_t>(sa);
      const std::size_t col0 = w.first[a];
      double* out_row = o + a * target;
      for (std::size_t p = 0; p < w.weights[a].size(); ++p) {
        const double* xi = x + (w.first[a] + p) * dim;
        for (std::size_t j = col0; j < n; ++j) row[j] = std::min(detail::euclidean(xi, x + j * dim, dim), clip_threshold);
        const double wa = w.weights[a][p];
        for (std::size_t b = a; b < target; ++b) {
          const double* seg = row.data() + w.first[b];
          const auto& wb = w.weights[b];
          double inner = 0.0;
          for (std::size_t q = 0; q < wb.size(); ++q) inner += wb[q] * seg[q];
          out_row[b] += wa * inner;
        }
      }
    }
  }
  for (std::size_t a = 0; a < target; ++a)
    for (std::size_t b = a; b < target; ++b) {
      const double v = std::clamp(o[a * target + b], 0.0, clip_threshold);
      o[a * target + b] = v;
      o[b * target + a] = v;
    }
  return out;
}

}  // namespace itsc::rp
