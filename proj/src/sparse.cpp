#include "itsc/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "itsc/binary_io.hpp"
#include "itsc/error.hpp"
#include "itsc/rng.hpp"

namespace itsc::sparse {

std::size_t patch_count(std::size_t side, std::size_t patch_side, std::size_t stride) {
  if (patch_side < 1) throw SizingError("patch side must be >= 1");
  if (stride < 1) throw SizingError("patch stride must be >= 1");
  if (patch_side > side)
    throw SizingError("patch side " + std::to_string(patch_side) + " exceeds image side " + std::to_string(side));
  const std::size_t per_axis = (side - patch_side) / stride + 1;
  return per_axis * per_axis;
}

std::vector<Patch> extract_patches(const rp::UnitImage& img, std::size_t patch_side, std::size_t stride) {
  const std::size_t count = patch_count(img.side, patch_side, stride);
  const std::size_t per_axis = (img.side - patch_side) / stride + 1;
  std::vector<Patch> patches;
  patches.reserve(count);
  for (std::size_t py = 0; py < per_axis; ++py)
    for (std::size_t px = 0; px < per_axis; ++px) {
      Patch p(patch_side * patch_side);
      for (std::size_t y = 0; y < patch_side; ++y)
        for (std::size_t x = 0; x < patch_side; ++x) p[y * patch_side + x] = img.at(py * stride + y, px * stride + x);
      patches.push_back(std::move(p));
    }
  return patches;
}

namespace {

double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

std::vector<double> gram(const Dictionary& dict) {
  const std::size_t k = dict.size();
  std::vector<double> g(k * k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) {
      const auto u = dict.atom(a);
      const auto v = dict.atom(b);
      const double s = std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
      g[a * k + b] = s;
      g[b * k + a] = s;
    }
  return g;
}

double power_iteration(const std::vector<double>& g, std::size_t k) {
  std::vector<double> v(k), w(k);
  // Deterministic, non-symmetric start so no eigenvector is missed by
  // construction.
  for (std::size_t i = 0; i < k; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i);
  double lambda = 0.0;
  for (int it = 0; it < 1000; ++it) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += g[i * k + j] * v[j];
      w[i] = s;
    }
    const double next = std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
    v.swap(w);
    if (it > 0 && std::abs(next - lambda) <= 1e-13 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

/// Shared state for coding many signals against one dictionary.
class Coder {
 public:
  explicit Coder(const Dictionary& dict) : dict_(dict), k_(dict.size()), gram_(gram(dict)) {
    // Power iteration approaches the top eigenvalue from below; the margin
    // keeps the step within 1/λmax, which ISTA's descent property needs.
    step_bound_ = 1.01 * power_iteration(gram_, k_);
    if (!(step_bound_ > 0)) throw InputError("dictionary has no non-zero atoms");
  }

  double lipschitz() const { return step_bound_; }

  /// Runs `iters` ISTA steps from the code in `a`.
  void code(std::span<const double> x, std::span<double> a, double lambda, std::size_t iters,
            std::vector<double>* objective) const {
    std::vector<double> c(k_), grad(k_);
    for (std::size_t i = 0; i < k_; ++i) {
      const auto u = dict_.atom(i);
      c[i] = std::inner_product(u.begin(), u.end(), x.begin(), 0.0);
    }
    if (objective) objective->push_back(lasso_objective(x, dict_, a, lambda));
    const double inv_l = 1.0 / step_bound_;
    const double thresh = lambda * inv_l;
    for (std::size_t it = 0; it < iters; ++it) {
      for (std::size_t i = 0; i < k_; ++i) {
        double s = -c[i];
        for (std::size_t j = 0; j < k_; ++j) s += gram_[i * k_ + j] * a[j];
        grad[i] = s;
      }
      for (std::size_t i = 0; i < k_; ++i) a[i] = soft(a[i] - inv_l * grad[i], thresh);
      if (objective) objective->push_back(lasso_objective(x, dict_, a, lambda));
    }
  }

 private:
  const Dictionary& dict_;
  std::size_t k_;
  std::vector<double> gram_;
  double step_bound_ = 0.0;
};

void check_coding_args(std::span<const double> x, const Dictionary& dict, double lambda) {
  if (x.size() != dict.dim)
    throw ShapeError("signal dimension " + std::to_string(x.size()) + " does not match atom dimension " +
                     std::to_string(dict.dim));
  if (!(lambda > 0) || !std::isfinite(lambda)) throw ParameterError("lambda must be finite and > 0");
}

}  // namespace

double lipschitz_constant(const Dictionary& dict) { return power_iteration(gram(dict), dict.size()); }

double lasso_objective(std::span<const double> x, const Dictionary& dict, std::span<const double> code, double lambda) {
  std::vector<double> r(x.begin(), x.end());
  double l1 = 0.0;
  for (std::size_t k = 0; k < code.size(); ++k) {
    if (code[k] == 0.0) continue;
    const auto u = dict.atom(k);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= code[k] * u[i];
    l1 += std::abs(code[k]);
  }
  double sq = 0.0;
  for (double v : r) sq += v * v;
  return 0.5 * sq + lambda * l1;
}

SparseCode sparse_code(std::span<const double> x, const Dictionary& dict, double lambda, std::size_t iters,
                       bool track_objective) {
  check_coding_args(x, dict, lambda);
  if (iters < 1) throw ParameterError("sparse_code: iters must be >= 1");
  const Coder coder(dict);
  SparseCode out;
  out.lambda = lambda;
  out.coefficients.assign(dict.size(), 0.0);
  coder.code(x, out.coefficients, lambda, iters, track_objective ? &out.objective : nullptr);
  return out;
}

LearnResult learn_dictionary(std::span<const Patch> patches, std::size_t patch_side, const LearnOptions& opts) {
  if (patches.empty()) throw InputError("learn_dictionary: empty patch set");
  if (opts.atoms < 1) throw ParameterError("learn_dictionary: atom count must be >= 1");
  if (opts.epochs < 1) throw ParameterError("learn_dictionary: epochs must be >= 1");
  if (!(opts.lambda > 0)) throw ParameterError("learn_dictionary: lambda must be > 0");
  const std::size_t dim = patch_side * patch_side;
  for (const auto& p : patches)
    if (p.size() != dim) throw ShapeError("learn_dictionary: patch dimension does not match patch_side²");

  const std::size_t n = patches.size();
  const std::size_t k = opts.atoms;
  Rng rng(derive_seed(opts.seed, "dictionary/init"));

  LearnResult result;
  Dictionary& dict = result.dictionary;
  dict.patch_side = patch_side;
  dict.dim = dim;
  dict.atoms.assign(k * dim, 0.0);

  // Initial atoms: distinct random patches, normalised; Gaussian if a
  // chosen patch is zero or patches run out.
  std::vector<std::size_t> pick(n);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  for (std::size_t i = 0; i < std::min(k, n); ++i) std::swap(pick[i], pick[i + rng.index(n - i)]);
  for (std::size_t a = 0; a < k; ++a) {
    auto atom = dict.atom(a);
    double norm = 0.0;
    if (a < n) {
      std::copy(patches[pick[a]].begin(), patches[pick[a]].end(), atom.begin());
      for (double v : atom) norm += v * v;
    }
    if (norm < 1e-24) {
      norm = 0.0;
      for (double& v : atom) {
        v = rng.normal();
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (double& v : atom) v /= norm;
  }

  std::vector<double> codes(n * k, 0.0);
  std::vector<double> residual(n * dim);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const Coder coder(dict);
    std::vector<double> per_patch(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t si = 0; si < count; ++si) {
      const auto i = static_cast<std::size_t>(si);
      std::span<double> a(codes.data() + i * k, k);
      coder.code(patches[i], a, opts.lambda, opts.ista_iters, nullptr);
      per_patch[i] = lasso_objective(patches[i], dict, a, opts.lambda);
    }
    result.objective.push_back(std::accumulate(per_patch.begin(), per_patch.end(), 0.0));

    for (std::size_t i = 0; i < n; ++i) {
      double* r = residual.data() + i * dim;
      std::copy(patches[i].begin(), patches[i].end(), r);
      for (std::size_t a = 0; a < k; ++a) {
        const double c = codes[i * k + a];
        if (c == 0.0) continue;
        const auto u = dict.atom(a);
        for (std::size_t j = 0; j < dim; ++j) r[j] -= c * u[j];
      }
    }

    std::vector<bool> used_for_reseed(n, false);
    for (std::size_t a = 0; a < k; ++a) {
      double usage = 0.0;
      for (std::size_t i = 0; i < n; ++i) usage += codes[i * k + a] * codes[i * k + a];
      auto atom = dict.atom(a);
      if (usage == 0.0) {
        // Unused atom: its codes are all zero, so replacing it leaves the
        // current reconstruction (and objective) unchanged.
        std::size_t worst = n;
        double worst_err = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (used_for_reseed[i]) continue;
          double e = 0.0, norm = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            e += residual[i * dim + j] * residual[i * dim + j];
            norm += patches[i][j] * patches[i][j];
          }
          if (norm > 0.0 && e > worst_err) {
            worst_err = e;
            worst = i;
          }
        }
        if (worst == n) continue;
        used_for_reseed[worst] = true;
        double norm = 0.0;
        for (double v : patches[worst]) norm += v * v;
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dim; ++j) atom[j] = patches[worst][j] / norm;
        result.reseeds.push_back({epoch, a, worst});
        continue;
      }
      // u = (R + d aᵀ) a / ‖a‖²; its direction is the exact minimiser over
      // unit-norm atoms with the codes held fixed.
      std::vector<double> u(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double c = codes[i * k + a];
        if (c == 0.0) continue;
        const double* r = residual.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) u[j] += c * (r[j] + c * atom[j]);
      }
      double norm = 0.0;
      for (double v : u) norm += v * v;
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = codes[i * k + a];
        if (c == 0.0) continue;
        double* r = residual.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) r[j] += c * (atom[j] - u[j] / norm);
      }
      for (std::size_t j = 0; j < dim; ++j) atom[j] = u[j] / norm;
    }
  }
  return result;
}

rp::UnitImage emphasize(const rp::UnitImage& img, const Dictionary& dict, double lambda, std::size_t iters,
                        std::size_t stride) {
  const std::size_t p = dict.patch_side;
  if (p * p != dict.dim) throw ShapeError("dictionary patch_side does not match atom dimension");
  if (!(lambda > 0)) throw ParameterError("emphasize: lambda must be > 0");
  const auto patches = extract_patches(img, p, stride);
  const std::size_t per_axis = (img.side - p) / stride + 1;
  const std::size_t k = dict.size();
  const Coder coder(dict);

  std::vector<double> codes(patches.size() * k, 0.0);
  const auto count = static_cast<std::ptrdiff_t>(patches.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < count; ++si) {
    const auto i = static_cast<std::size_t>(si);
    coder.code(patches[i], std::span<double>(codes.data() + i * k, k), lambda, iters, nullptr);
  }

  std::vector<double> recon(img.values.size(), 0.0);
  std::vector<std::uint32_t> hits(img.values.size(), 0);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const std::size_t oy = (i / per_axis) * stride;
    const std::size_t ox = (i % per_axis) * stride;
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x) {
        double v = 0.0;
        for (std::size_t a = 0; a < k; ++a) v += codes[i * k + a] * dict.atoms[a * dict.dim + y * p + x];
        const std::size_t idx = (oy + y) * img.side + ox + x;
        recon[idx] += v;
        ++hits[idx];
      }
  }

  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t idx = 0; idx < recon.size(); ++idx) {
    if (hits[idx] == 0) continue;
    recon[idx] /= hits[idx];
    lo = std::min(lo, recon[idx]);
    hi = std::max(hi, recon[idx]);
  }

  rp::UnitImage out = img;
  if (!(hi > lo)) return out;
  const double span = hi - lo;
  for (std::size_t idx = 0; idx < recon.size(); ++idx) {
    if (hits[idx] == 0) continue;
    out.values[idx] = img.values[idx] * ((recon[idx] - lo) / span);
  }
  return out;
}

namespace {
constexpr std::int32_t kDictMagic = 0x54434944;  // "DICT"
}

void save_dictionary(const Dictionary& dict, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_i32(out, kDictMagic);
  binio::write_i32(out, static_cast<std::int32_t>(dict.size()));
  binio::write_i32(out, static_cast<std::int32_t>(dict.dim));
  binio::write_i32(out, static_cast<std::int32_t>(dict.patch_side));
  binio::write_f64s(out, dict.atoms);
  if (!out) throw IoError("write failed: " + path.string());
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (binio::read_i32(in, "magic") != kDictMagic) throw FormatError(path.string() + ": not a dictionary file");
  const std::int32_t k = binio::read_i32(in, "K");
  const std::int32_t d = binio::read_i32(in, "d");
  const std::int32_t p = binio::read_i32(in, "patch_side");
  if (k < 1 || d < 1 || p < 1 || static_cast<std::int64_t>(p) * p != d)
    throw FormatError(path.string() + ": inconsistent dictionary header");
  Dictionary dict;
  dict.patch_side = static_cast<std::size_t>(p);
  dict.dim = static_cast<std::size_t>(d);
  dict.atoms.resize(static_cast<std::size_t>(k) * dict.dim);
  binio::read_f64s(in, dict.atoms, "atoms");
  return dict;
}

}  // namespace itsc::sparse
