#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "itsc/signal.hpp"

/// Knowledge-based reference diagnostics: time-domain statistics, the
/// Clarke-Concordia locus and the third-harmonic ratio.
namespace itsc::features {

struct FeatureVector {
  double max_abs = 0.0;
  double rms = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // non-excess: Gaussian → 3
  double crest_factor = 0.0;
  double entropy = 0.0;  // nats, histogram over the window's range

  static constexpr std::size_t kCount = 6;
  static constexpr std::array<std::string_view, kCount> kNames = {"max_abs",  "rms",          "skewness",
                                                                  "kurtosis", "crest_factor", "entropy"};
  std::array<double, kCount> as_array() const { return {max_abs, rms, skewness, kurtosis, crest_factor, entropy}; }
};

/// Throws DegenerateWindowError for an all-zero or zero-variance window.
FeatureVector time_features(std::span<const double> window, std::size_t entropy_bins = 32);

struct NormalizedFeatures {
  std::vector<std::array<double, FeatureVector::kCount>> rows;
  std::array<double, FeatureVector::kCount> mean{};
  std::array<double, FeatureVector::kCount> stddev{};  // population (1/n) standard deviation
  std::array<bool, FeatureVector::kCount> passthrough{};  // zero-variance column left unscaled
};

/// Column-wise z-score.
NormalizedFeatures normalize_features(std::span<const FeatureVector> rows);

struct ClarkeLocus {
  std::vector<double> alpha;
  std::vector<double> beta;
  /// √(1 − (b/a)²) of the least-squares ellipse; empty when the locus is
  /// degenerate (e.g. pure zero-sequence input).
  std::optional<double> eccentricity;
  double semi_major = 0.0;
  double semi_minor = 0.0;
};

/// Power-invariant Clarke transform:
///   α = √(2/3)(ia − ib/2 − ic/2),  β = √(2/3)(√3/2)(ib − ic).
/// Requires at least one period of `fundamental_hz`.
ClarkeLocus clarke_transform(const sim::ThreePhaseSignal& sig, double fundamental_hz);

struct EllipseFit {
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double eccentricity = 0.0;
};

/// Algebraic least-squares fit of A x² + B xy + C y² + D x + E y = 1 after
/// centring on the centroid and scaling to unit RMS radius.
std::optional<EllipseFit> fit_ellipse(std::span<const double> x, std::span<const double> y);

/// |X(3f)| / |X(f)| from single-bin direct correlations.
double third_harmonic_ratio(std::span<const double> window, double sample_rate, double fundamental_hz);

/// Magnitude of Σ x[n] e^{−2πi f n / fs}.
double bin_magnitude(std::span<const double> window, double sample_rate, double frequency);

}  // namespace itsc::features
