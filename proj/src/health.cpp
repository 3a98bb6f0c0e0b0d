#include "itsc/health.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "itsc/binary_io.hpp"
#include "itsc/error.hpp"

namespace itsc::health {

void BaselineModel::factorize() {
  const std::size_t d = dim;
  cholesky.assign(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = covariance[j * d + j] + ridge_epsilon;
    for (std::size_t k = 0; k < j; ++k) diag -= cholesky[j * d + k] * cholesky[j * d + k];
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      if (ridge_epsilon == 0.0)
        throw SingularityError("covariance is singular (pivot " + std::to_string(j) +
                               "); refit with a positive ridge epsilon");
      throw SingularityError("covariance plus ridge is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(diag);
    cholesky[j * d + j] = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = covariance[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= cholesky[i * d + k] * cholesky[j * d + k];
      cholesky[i * d + j] = s / ljj;
    }
  }
}

double default_ridge(std::span<const double> covariance, std::size_t dim) {
  double trace = 0.0;
  for (std::size_t i = 0; i < dim; ++i) trace += covariance[i * dim + i];
  const double eps = 1e-6 * trace / static_cast<double>(dim);
  // Degenerate data (all samples equal) has zero trace; fall back to a
  // unit-scale ridge so the model stays usable.
  return eps > 0.0 ? eps : 1e-6;
}

BaselineModel fit_baseline(std::span<const std::vector<double>> healthy, std::optional<double> ridge_epsilon) {
  if (healthy.size() < 2) throw InputError("fit_baseline: need at least 2 samples, got " + std::to_string(healthy.size()));
  const std::size_t d = healthy.front().size();
  if (d == 0) throw InputError("fit_baseline: zero-dimensional activations");
  for (const auto& a : healthy) {
    if (a.size() != d) throw ShapeError("fit_baseline: activation dimensions differ");
    for (double v : a)
      if (!std::isfinite(v)) throw InputError("fit_baseline: non-finite activation");
  }
  if (ridge_epsilon && !(*ridge_epsilon >= 0.0 && std::isfinite(*ridge_epsilon)))
    throw ParameterError("fit_baseline: ridge epsilon must be >= 0");

  const std::size_t n = healthy.size();
  BaselineModel m;
  m.dim = d;
  m.fit_count = n;
  m.mean.assign(d, 0.0);
  for (const auto& a : healthy)
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += a[i];
  for (double& v : m.mean) v /= static_cast<double>(n);

  m.covariance.assign(d * d, 0.0);
  std::vector<double> c(d);
  for (const auto& a : healthy) {
    for (std::size_t i = 0; i < d; ++i) c[i] = a[i] - m.mean[i];
    for (std::size_t i = 0; i < d; ++i) {
      if (c[i] == 0.0) continue;
      double* row = m.covariance.data() + i * d;
      for (std::size_t j = i; j < d; ++j) row[j] += c[i] * c[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      const double v = m.covariance[i * d + j] * inv;
      m.covariance[i * d + j] = v;
      m.covariance[j * d + i] = v;
    }

  m.ridge_epsilon = ridge_epsilon ? *ridge_epsilon : default_ridge(m.covariance, d);
  m.factorize();
  return m;
}

double mahalanobis(std::span<const double> a, const BaselineModel& model) {
  const std::size_t d = model.dim;
  if (a.size() != d)
    throw ShapeError("mahalanobis: vector dimension " + std::to_string(a.size()) + " != baseline dimension " +
                     std::to_string(d));
  // Forward substitution L y = a − μ; MD = ‖y‖².
  std::vector<double> y(d);
  double md = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = a[i] - model.mean[i];
    const double* row = model.cholesky.data() + i * d;
    for (std::size_t k = 0; k < i; ++k) s -= row[k] * y[k];
    y[i] = s / row[i];
    md += y[i] * y[i];
  }
  return md;
}

std::vector<double> leave_one_out_scores(std::span<const std::vector<double>> healthy, double ridge_epsilon) {
  if (healthy.size() < 3)
    throw InputError("leave_one_out_scores: need at least 3 samples, got " + std::to_string(healthy.size()));
  std::vector<double> scores(healthy.size());
  std::vector<std::vector<double>> rest(healthy.begin() + 1, healthy.end());
  for (std::size_t i = 0; i < healthy.size(); ++i) {
    if (i > 0) rest[i - 1] = healthy[i - 1];  // rest = healthy without sample i
    scores[i] = mahalanobis(healthy[i], fit_baseline(rest, ridge_epsilon));
  }
  return scores;
}

HealthSeries score_series(std::span<const std::vector<double>> activations, const BaselineModel& model) {
  HealthSeries s;
  s.scores.resize(activations.size());
  s.window_index.resize(activations.size());
  for (const auto& a : activations)
    if (a.size() != model.dim) throw ShapeError("score_series: activation dimension mismatch");
  const auto n = static_cast<std::ptrdiff_t>(activations.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    s.scores[k] = mahalanobis(activations[k], model);
    s.window_index[k] = k;
  }
  return s;
}

double set_threshold(std::span<const double> healthy_scores, double quantile, double margin) {
  if (healthy_scores.empty()) throw InputError("set_threshold: no healthy scores");
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ParameterError("set_threshold: quantile must lie in (0, 1]");
  if (!(margin >= 1.0) || !std::isfinite(margin)) throw ParameterError("set_threshold: margin must be >= 1");
  std::vector<double> sorted(healthy_scores.begin(), healthy_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(quantile * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return std::max(margin * sorted[rank - 1], std::numeric_limits<double>::min());
}

namespace {
constexpr std::uint32_t kBaselineMagic = 0x4C534248;  // "HBSL"
}

void save_baseline(const BaselineModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_u32(out, kBaselineMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(model.dim));
  binio::write_f64(out, model.ridge_epsilon);
  binio::write_u64(out, model.fit_count);
  binio::write_f64s(out, model.mean);
  binio::write_f64s(out, model.covariance);
  if (!out) throw IoError("write failed: " + path.string());
}

BaselineModel load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (binio::read_u32(in, "magic") != kBaselineMagic) throw FormatError(path.string() + ": not a baseline file");
  BaselineModel m;
  m.dim = binio::read_u32(in, "dimension");
  m.ridge_epsilon = binio::read_f64(in, "ridge epsilon");
  m.fit_count = binio::read_u64(in, "fit count");
  if (m.dim == 0 || !(m.ridge_epsilon >= 0.0)) throw FormatError(path.string() + ": invalid baseline header");
  m.mean.resize(m.dim);
  m.covariance.resize(m.dim * m.dim);
  binio::read_f64s(in, m.mean, "mean");
  binio::read_f64s(in, m.covariance, "covariance");
  m.factorize();
  return m;
}

void write_series_csv(const HealthSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "window_index,md_score,above_threshold\n";
  char buf[32];
  for (std::size_t i = 0; i < series.scores.size(); ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, series.scores[i]);
    out << series.window_index[i] << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << ','
        << (series.scores[i] > series.threshold ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace itsc::health
