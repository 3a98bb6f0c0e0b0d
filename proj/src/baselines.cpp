#include "itsc/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "itsc/error.hpp"

namespace itsc::features {

FeatureVector time_features(std::span<const double> window, std::size_t entropy_bins) {
  if (window.size() < 2) throw SizingError("time_features: window needs at least 2 samples");
  if (entropy_bins < 1) throw ParameterError("time_features: entropy_bins must be >= 1");
  const double n = static_cast<double>(window.size());

  double mean = 0.0, sq = 0.0, max_abs = 0.0;
  double lo = window[0], hi = window[0];
  for (double v : window) {
    mean += v;
    sq += v * v;
    max_abs = std::max(max_abs, std::abs(v));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (max_abs == 0.0) throw DegenerateWindowError("time_features: all-zero window, crest factor undefined");
  mean /= n;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : window) {
    const double c = v - mean;
    const double c2 = c * c;
    m2 += c2;
    m3 += c2 * c;
    m4 += c2 * c2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) throw DegenerateWindowError("time_features: constant window, moments undefined");

  FeatureVector f;
  f.max_abs = max_abs;
  f.rms = std::sqrt(sq / n);
  f.skewness = m3 / std::pow(m2, 1.5);
  f.kurtosis = m4 / (m2 * m2);
  f.crest_factor = max_abs / f.rms;

  std::vector<std::size_t> hist(entropy_bins, 0);
  const double width = (hi - lo) / static_cast<double>(entropy_bins);
  for (double v : window) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    hist[std::min(b, entropy_bins - 1)]++;
  }
  double h = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  f.entropy = h;
  return f;
}

NormalizedFeatures normalize_features(std::span<const FeatureVector> rows) {
  if (rows.size() < 2) throw InputError("normalize_features: need at least 2 rows");
  constexpr std::size_t m = FeatureVector::kCount;
  const double n = static_cast<double>(rows.size());
  NormalizedFeatures out;
  out.rows.reserve(rows.size());
  for (const auto& r : rows) out.rows.push_back(r.as_array());
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (const auto& r : out.rows) mean += r[c];
    mean /= n;
    double var = 0.0;
    for (const auto& r : out.rows) var += (r[c] - mean) * (r[c] - mean);
    const double sd = std::sqrt(var / n);
    out.mean[c] = mean;
    out.stddev[c] = sd;
    out.passthrough[c] = !(sd > 0.0);
    if (out.passthrough[c]) continue;
    for (auto& r : out.rows) r[c] = (r[c] - mean) / sd;
  }
  return out;
}

std::optional<EllipseFit> fit_ellipse(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 5) return std::nullopt;
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cx += x[i];
    cy += y[i];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  double r2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) r2 += (x[i] - cx) * (x[i] - cx) + (y[i] - cy) * (y[i] - cy);
  const double scale = std::sqrt(r2 / static_cast<double>(n));
  if (!(scale > 0.0) || !std::isfinite(scale)) return std::nullopt;

  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), 5);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (x[i] - cx) / scale;
    const double v = (y[i] - cy) / scale;
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = u * u;
    design(r, 1) = u * v;
    design(r, 2) = v * v;
    design(r, 3) = u;
    design(r, 4) = v;
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  const auto qr = design.colPivHouseholderQr();
  if (qr.rank() < 5) return std::nullopt;
  const Eigen::VectorXd p = qr.solve(ones);
  const double A = p[0], B = p[1], C = p[2], D = p[3], E = p[4];

  Eigen::Matrix2d quad;
  quad << A, B / 2, B / 2, C;
  const double det = quad.determinant();
  if (!(det > 0.0)) return std::nullopt;
  const Eigen::Vector2d centre = quad.inverse() * Eigen::Vector2d(-D / 2, -E / 2);
  const double cx0 = centre.x(), cy0 = centre.y();
  // Translated to the centre the linear terms vanish: A u² + B uv + C v² = level.
  const double level = 1.0 - (A * cx0 * cx0 + B * cx0 * cy0 + C * cy0 * cy0) - (D * cx0 + E * cy0);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(quad);
  const double l0 = eig.eigenvalues()[0], l1 = eig.eigenvalues()[1];
  if (!(l0 > 0.0) || !(l1 > 0.0) || !(level > 0.0)) return std::nullopt;
  EllipseFit fit;
  fit.semi_major = std::sqrt(level / l0) * scale;  // smallest eigenvalue ↔ longest axis
  fit.semi_minor = std::sqrt(level / l1) * scale;
  const double ratio = fit.semi_minor / fit.semi_major;
  fit.eccentricity = std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
  return fit;
}

ClarkeLocus clarke_transform(const sim::ThreePhaseSignal& sig, double fundamental_hz) {
  sig.validate();
  if (!(fundamental_hz > 0.0)) throw ParameterError("clarke_transform: fundamental must be > 0");
  const double period = sig.sample_rate / fundamental_hz;
  if (static_cast<double>(sig.size()) < period)
    throw SizingError("clarke_transform: " + std::to_string(sig.size()) + " samples is less than one period (" +
                      std::to_string(period) + ")");
  const double k = std::sqrt(2.0 / 3.0);
  const double h = std::sqrt(3.0) / 2.0;
  ClarkeLocus locus;
  const std::size_t n = sig.size();
  locus.alpha.resize(n);
  locus.beta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = sig.ia()[i], b = sig.ib()[i], c = sig.ic()[i];
    locus.alpha[i] = k * (a - 0.5 * b - 0.5 * c);
    locus.beta[i] = k * h * (b - c);
  }
  if (auto fit = fit_ellipse(locus.alpha, locus.beta)) {
    locus.eccentricity = fit->eccentricity;
    locus.semi_major = fit->semi_major;
    locus.semi_minor = fit->semi_minor;
  }
  return locus;
}

double bin_magnitude(std::span<const double> window, double sample_rate, double frequency) {
  const double w = 2.0 * std::numbers::pi * frequency / sample_rate;
  double re = 0.0, im = 0.0;
  for (std::size_t n = 0; n < window.size(); ++n) {
    const double phase = w * static_cast<double>(n);
    re += window[n] * std::cos(phase);
    im -= window[n] * std::sin(phase);
  }
  return std::hypot(re, im);
}

double third_harmonic_ratio(std::span<const double> window, double sample_rate, double fundamental_hz) {
  if (!(sample_rate > 0.0) || !(fundamental_hz > 0.0))
    throw ParameterError("third_harmonic_ratio: rates must be > 0");
  if (!(3.0 * fundamental_hz < sample_rate / 2.0))
    throw ParameterError("third_harmonic_ratio: 3 × fundamental must be below Nyquist");
  const double needed = 3.0 * sample_rate / fundamental_hz;
  if (static_cast<double>(window.size()) < needed)
    throw SizingError("third_harmonic_ratio: window must span at least 3 fundamental periods");
  const double fund = bin_magnitude(window, sample_rate, fundamental_hz);
  if (!(fund > 0.0)) throw DegenerateWindowError("third_harmonic_ratio: no fundamental content");
  return bin_magnitude(window, sample_rate, 3.0 * fundamental_hz) / fund;
}

}  // namespace itsc::features
