#include "itsc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "itsc/error.hpp"

namespace itsc::rp {

std::size_t embedded_length(std::size_t window_len, const EmbeddingParams& params) {
  if (params.m < 1) throw ParameterError("embedding m must be >= 1");
  if (params.tau < 1) throw ParameterError("embedding tau must be >= 1");
  const std::size_t span = (params.m - 1) * params.tau;
  if (window_len < span + 2)
    throw SizingError("window of " + std::to_string(window_len) + " samples too short for m=" +
                      std::to_string(params.m) + ", tau=" + std::to_string(params.tau));
  return window_len - span;
}

Trajectory delay_embed(std::span<const double> window, const EmbeddingParams& params) {
  const std::size_t n = embedded_length(window.size(), params);
  Trajectory traj;
  traj.dim = params.m;
  traj.points.resize(n * params.m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < params.m; ++k) {
      const double v = window[i + k * params.tau];
      if (!std::isfinite(v)) throw InputError("delay_embed: non-finite sample");
      traj.points[i * params.m + k] = v;
    }
  return traj;
}

BinaryRP classic_rp(const Trajectory& traj, double epsilon) {
  if (!(epsilon > 0) || !std::isfinite(epsilon)) throw ParameterError("classic_rp: epsilon must be finite and > 0");
  const std::size_t n = traj.size();
  BinaryRP out;
  out.side = n;
  out.epsilon = epsilon;
  out.values.resize(n * n);
  const double* x = traj.points.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.values[i * n + j] = detail::euclidean(x + i * traj.dim, x + j * traj.dim, traj.dim) <= epsilon ? 1 : 0;
  return out;
}

double trajectory_diameter(const Trajectory& traj) {
  const std::size_t n = traj.size();
  const double* x = traj.points.data();
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      best = std::max(best, detail::euclidean(x + i * traj.dim, x + j * traj.dim, traj.dim));
  return best;
}

namespace detail {

ResizeWeights area_weights(std::size_t source, std::size_t target) {
  // Work in units of 1/target so every boundary is an integer: bin a spans
  // [a*source, (a+1)*source), source cell i spans [i*target, (i+1)*target).
  ResizeWeights w;
  w.first.resize(target);
  w.weights.resize(target);
  const double inv = 1.0 / static_cast<double>(source);
  for (std::size_t a = 0; a < target; ++a) {
    const std::size_t lo = a * source;
    const std::size_t hi = (a + 1) * source;
    const std::size_t i0 = lo / target;
    w.first[a] = i0;
    for (std::size_t i = i0; i * target < hi; ++i) {
      const std::size_t cell_lo = i * target;
      const std::size_t cell_hi = (i + 1) * target;
      const std::size_t overlap = std::min(cell_hi, hi) - std::max(cell_lo, lo);
      w.weights[a].push_back(static_cast<double>(overlap) * inv);
    }
  }
  return w;
}

}  // namespace detail

RPImage resize_image(const RPImage& img, std::size_t target) {
  if (target < 1) throw SizingError("resize_image: target must be >= 1");
  if (target > img.side)
    throw SizingError("resize_image: target " + std::to_string(target) + " exceeds source side " +
                      std::to_string(img.side) + " (upsampling unsupported)");
  if (target == img.side) return img;

  const auto w = detail::area_weights(img.side, target);
  RPImage out;
  out.side = target;
  out.clip_threshold = img.clip_threshold;
  out.values.assign(target * target, 0.0);
  for (std::size_t a = 0; a < target; ++a) {
    for (std::size_t b = a; b < target; ++b) {
      double acc = 0.0;
      for (std::size_t p = 0; p < w.weights[a].size(); ++p) {
        const double* row = img.values.data() + (w.first[a] + p) * img.side + w.first[b];
        double inner = 0.0;
        for (std::size_t q = 0; q < w.weights[b].size(); ++q) inner += w.weights[b][q] * row[q];
        acc += w.weights[a][p] * inner;
      }
      acc = std::clamp(acc, 0.0, img.clip_threshold);
      out.values[a * target + b] = acc;
      out.values[b * target + a] = acc;
    }
  }
  return out;
}

UnitImage normalize_image(const RPImage& img) {
  UnitImage out;
  out.side = img.side;
  out.values.resize(img.values.size());
  if (!(img.clip_threshold > 0)) throw ParameterError("normalize_image: clip threshold must be > 0");
  for (std::size_t k = 0; k < img.values.size(); ++k) out.values[k] = img.values[k] / img.clip_threshold;
  return out;
}

double median_pairwise_distance(std::span<const Trajectory> trajs, std::size_t max_points) {
  if (max_points < 2) throw ParameterError("median_pairwise_distance: max_points must be >= 2");
  std::vector<double> pool;
  for (const auto& traj : trajs) {
    const std::size_t n = traj.size();
    const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / max_points);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
    for (std::size_t p = 0; p < idx.size(); ++p)
      for (std::size_t q = p + 1; q < idx.size(); ++q)
        pool.push_back(detail::euclidean(traj.points.data() + idx[p] * traj.dim,
                                         traj.points.data() + idx[q] * traj.dim, traj.dim));
  }
  if (pool.empty()) throw InputError("median_pairwise_distance: need at least one pair of points");
  auto mid = pool.begin() + static_cast<std::ptrdiff_t>(pool.size() / 2);
  std::nth_element(pool.begin(), mid, pool.end());
  return *mid;
}

}  // namespace itsc::rp
