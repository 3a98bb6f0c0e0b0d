#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "itsc/imaging.hpp"

namespace itsc::sparse {

/// K unit-norm atoms of dimension patch_side², stored one atom per row.
struct Dictionary {
  std::size_t patch_side = 0;
  std::size_t dim = 0;
  std::vector<double> atoms;

  std::size_t size() const { return dim == 0 ? 0 : atoms.size() / dim; }
  std::span<const double> atom(std::size_t k) const { return {atoms.data() + k * dim, dim}; }
  std::span<double> atom(std::size_t k) { return {atoms.data() + k * dim, dim}; }
  bool operator==(const Dictionary&) const = default;
};

struct SparseCode {
  std::vector<double> coefficients;
  double lambda = 0.0;
  /// Objective ½‖x − Da‖² + λ‖a‖₁ at the starting point and after every
  /// iteration; only filled when requested.
  std::vector<double> objective;
};

using Patch = std::vector<double>;

std::size_t patch_count(std::size_t side, std::size_t patch_side, std::size_t stride);

/// Row-major flattened patches, ordered by (top-left row, top-left column).
std::vector<Patch> extract_patches(const rp::UnitImage& img, std::size_t patch_side, std::size_t stride);

/// Largest eigenvalue of DᵀD by power iteration.
double lipschitz_constant(const Dictionary& dict);

/// ISTA from a zero start: a ← soft(a + Dᵀ(x − Da)/L, λ/L).
SparseCode sparse_code(std::span<const double> x, const Dictionary& dict, double lambda, std::size_t iters,
                       bool track_objective = false);

/// ½‖x − Da‖² + λ‖a‖₁, evaluated from the explicit residual.
double lasso_objective(std::span<const double> x, const Dictionary& dict, std::span<const double> code, double lambda);

struct LearnOptions {
  std::size_t atoms = 32;
  double lambda = 0.1;
  std::size_t epochs = 10;
  std::size_t ista_iters = 50;
  std::uint64_t seed = 0;
};

struct ReseedEvent {
  std::size_t epoch;
  std::size_t atom;
  std::size_t patch;
};

struct LearnResult {
  Dictionary dictionary;
  std::vector<double> objective;  // total objective after each epoch's coding step
  std::vector<ReseedEvent> reseeds;
};

/// Alternating minimisation: code every patch (warm-started ISTA), then
/// update each atom by least squares against the residual and renormalise.
/// An atom no patch uses is re-seeded from the worst-reconstructed patch.
LearnResult learn_dictionary(std::span<const Patch> patches, std::size_t patch_side, const LearnOptions& opts);

/// Sparse-codes every patch, reassembles the reconstruction (overlaps
/// averaged), min-max normalises it into a [0,1] mask and returns
/// image × mask. A constant reconstruction yields an all-ones mask; pixels
/// no patch covers keep mask 1.
rp::UnitImage emphasize(const rp::UnitImage& img, const Dictionary& dict, double lambda, std::size_t iters,
                        std::size_t stride);

void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);

}  // namespace itsc::sparse
