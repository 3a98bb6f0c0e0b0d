#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace itsc::rp {

struct EmbeddingParams {
  std::size_t m = 2;    // embedding dimension
  std::size_t tau = 1;  // delay in samples
};

/// Delay-embedded trajectory; point i occupies points[i*dim .. i*dim+dim).
struct Trajectory {
  std::size_t dim = 0;
  std::vector<double> points;

  std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
};

/// Clipped distance image. Square, row-major, symmetric, zero diagonal,
/// every entry in [0, clip_threshold].
struct RPImage {
  std::size_t side = 0;
  std::vector<double> values;
  double clip_threshold = 0.0;

  double at(std::size_t i, std::size_t j) const { return values[i * side + j]; }
};

struct BinaryRP {
  std::size_t side = 0;
  std::vector<std::uint8_t> values;
  double epsilon = 0.0;

  std::uint8_t at(std::size_t i, std::size_t j) const { return values[i * side + j]; }
};

/// Square row-major image with values in [0, 1].
struct UnitImage {
  std::size_t side = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * side + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * side + j]; }
};

/// Number of embedded points for a window of `window_len` samples.
std::size_t embedded_length(std::size_t window_len, const EmbeddingParams& params);

/// point i = (w[i], w[i+tau], ..., w[i+(m-1)tau]).
Trajectory delay_embed(std::span<const double> window, const EmbeddingParams& params);

/// R(i,j) = min(‖x(i) − x(j)‖₂, N). Full matrix; rows computed in parallel.
RPImage modified_rp(const Trajectory& traj, double clip_threshold);

/// B(i,j) = 1 iff ‖x(i) − x(j)‖₂ ≤ epsilon.
BinaryRP classic_rp(const Trajectory& traj, double epsilon);

/// Largest pairwise distance.
double trajectory_diameter(const Trajectory& traj);

/// Area-average downsampling to target×target. Output cell (a,b) is the
/// overlap-weighted mean of the source cells it covers; for integer ratios
/// this is the plain block mean. Only target ≤ side is supported.
RPImage resize_image(const RPImage& img, std::size_t target);

/// resize_image(modified_rp(traj, N), target) without materialising the
/// full distance matrix. Output rows are computed in parallel.
RPImage clipped_rp_resized(const Trajectory& traj, double clip_threshold, std::size_t target);

/// values / clip_threshold.
UnitImage normalize_image(const RPImage& img);

/// Median of pooled pairwise distances (i < j) over the given trajectories.
/// Each trajectory is thinned to at most `max_points` evenly strided points
/// first. Returns the upper median for an even count.
double median_pairwise_distance(std::span<const Trajectory> trajs, std::size_t max_points = 256);

namespace detail {

/// Sparse area-averaging weights: bins[a] lists (source index, weight).
struct ResizeWeights {
  std::vector<std::size_t> first;   // first source index of each bin
  std::vector<std::vector<double>> weights;  // weights for first, first+1, ...
};

ResizeWeights area_weights(std::size_t source, std::size_t target);

inline double euclidean(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

}  // namespace itsc::rp
