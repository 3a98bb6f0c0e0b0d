#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace itsc::health {

/// Healthy-activation baseline for the squared Mahalanobis distance.
struct BaselineModel {
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> covariance;  // d×d maximum-likelihood estimate, without ridge
  double ridge_epsilon = 0.0;
  std::size_t fit_count = 0;
  std::vector<double> cholesky;  // lower factor L of (Σ + εI), row-major; upper part zero

  /// Recomputes `cholesky` from covariance and ridge.
  void factorize();
};

/// 1e-6 × trace(Σ)/d, or 1e-6 when the trace is zero.
double default_ridge(std::span<const double> covariance, std::size_t dim);

/// μ = sample mean, Σ = (1/n) Σ (aᵢ−μ)(aᵢ−μ)ᵀ, factor of Σ + εI. Without
/// an explicit ε the relative default_ridge is used.
BaselineModel fit_baseline(std::span<const std::vector<double>> healthy,
                           std::optional<double> ridge_epsilon = std::nullopt);

/// (a − μ)ᵀ (Σ + εI)⁻¹ (a − μ) via a triangular solve. Squared distance.
double mahalanobis(std::span<const double> a, const BaselineModel& model);

/// Score of each sample against a baseline refitted without it, with the
/// ridge fixed at `ridge_epsilon`. Out-of-sample healthy scores for
/// threshold calibration. Needs at least 3 samples.
std::vector<double> leave_one_out_scores(std::span<const std::vector<double>> healthy, double ridge_epsilon);

struct HealthSeries {
  std::vector<std::size_t> window_index;
  std::vector<double> scores;
  double threshold = 0.0;
};

HealthSeries score_series(std::span<const std::vector<double>> activations, const BaselineModel& model);

/// margin × nearest-rank quantile (sorted[ceil(q·n) − 1]), floored at the
/// smallest positive double so the alarm level is strictly positive.
double set_threshold(std::span<const double> healthy_scores, double quantile, double margin);

void save_baseline(const BaselineModel& model, const std::filesystem::path& path);
BaselineModel load_baseline(const std::filesystem::path& path);

/// CSV `window_index,md_score,above_threshold`.
void write_series_csv(const HealthSeries& series, const std::filesystem::path& path);

}  // namespace itsc::health
