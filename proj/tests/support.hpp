#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "itsc/imaging.hpp"
#include "itsc/rng.hpp"

namespace test {

namespace fs = std::filesystem;

/// Fresh, empty scratch directory.
inline fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "itsc-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline itsc::rp::Trajectory random_trajectory(itsc::Rng& rng, std::size_t n, std::size_t dim, double scale = 1.0) {
  itsc::rp::Trajectory t;
  t.dim = dim;
  t.points.resize(n * dim);
  for (double& v : t.points) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline std::vector<double> sinusoid(std::size_t n, double period, double amplitude = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / period + phase);
  return x;
}

/// |Σ x[n] e^{-2πi k n / N}| evaluated term by term.
inline double dft_magnitude(const std::vector<double>& x, double k) {
  std::complex<long double> acc = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double arg = -2.0L * std::numbers::pi_v<long double> * k * static_cast<long double>(i) / n;
    acc += static_cast<long double>(x[i]) * std::complex<long double>(std::cos(arg), std::sin(arg));
  }
  return static_cast<double>(std::abs(acc));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace test
