#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "itsc/error.hpp"
#include "itsc/sparse.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace itsc;
using namespace itsc::sparse;

namespace {

Dictionary random_dictionary(Rng& rng, std::size_t k, std::size_t dim, std::size_t side = 0) {
  Dictionary d{side, dim, std::vector<double>(k * dim)};
  for (std::size_t a = 0; a < k; ++a) {
    double norm = 0;
    for (auto& v : d.atom(a)) {
      v = rng.normal();
      norm += v * v;
    }
    for (auto& v : d.atom(a)) v /= std::sqrt(norm);
  }
  return d;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

bool non_increasing(const std::vector<double>& seq) {
  for (std::size_t i = 1; i < seq.size(); ++i)
    if (seq[i] > seq[i - 1] + 1e-12 * std::max(1.0, std::abs(seq[i - 1]))) return false;
  return true;
}

rp::UnitImage random_image(Rng& rng, std::size_t side) {
  rp::UnitImage img{side, std::vector<double>(side * side)};
  for (double& v : img.values) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("patch extraction examples") {
  rp::UnitImage img{4, {}};
  for (int i = 0; i < 16; ++i) img.values.push_back(i / 16.0);
  const auto whole = extract_patches(img, 4, 1);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0] == img.values);

  const auto quads = extract_patches(img, 2, 2);
  REQUIRE(quads.size() == 4);
  CHECK(quads[0] == std::vector<double>{0 / 16.0, 1 / 16.0, 4 / 16.0, 5 / 16.0});
  CHECK(quads[3] == std::vector<double>{10 / 16.0, 11 / 16.0, 14 / 16.0, 15 / 16.0});

  Rng rng(1);
  const auto six = random_image(rng, 6);
  const auto patches = extract_patches(six, 3, 1);
  REQUIRE(patches.size() == 16);
  CHECK(patch_count(6, 3, 1) == 16);
  std::size_t i = 0;
  for (std::size_t oy = 0; oy + 3 <= 6; ++oy)
    for (std::size_t ox = 0; ox + 3 <= 6; ++ox, ++i)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) CHECK(patches[i][y * 3 + x] == six.at(oy + y, ox + x));

  CHECK(patch_count(600, 20, 20) == 900);
  CHECK_THROWS_AS(extract_patches(img, 5, 1), SizingError);
  CHECK_THROWS_AS(extract_patches(img, 2, 0), SizingError);
}

TEST_CASE("one-atom code is the soft-thresholded projection") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_vector(rng, 9);
    const double norm = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
    Dictionary d{3, 9, x};
    for (double& v : d.atoms) v /= norm;
    const double lambda = 0.01;
    const auto code = sparse_code(x, d, lambda, 50);
    CHECK(std::abs(code.coefficients[0] - (norm - lambda)) < 1e-9);
  }
}

TEST_CASE("large lambda gives the zero code") {
  Rng rng(3);
  const auto d = random_dictionary(rng, 6, 10);
  const auto x = random_vector(rng, 10);
  double max_corr = 0;
  for (std::size_t a = 0; a < d.size(); ++a)
    max_corr = std::max(max_corr, std::abs(std::inner_product(x.begin(), x.end(), d.atom(a).begin(), 0.0)));
  const auto code = sparse_code(x, d, max_corr * 1.0001, 30);
  CHECK(std::all_of(code.coefficients.begin(), code.coefficients.end(), [](double c) { return c == 0.0; }));
}

TEST_CASE("ISTA reaches the exact lasso minimum with a monotone objective") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = random_dictionary(rng, 4, 8);
    const auto x = random_vector(rng, 8);
    const auto code = sparse_code(x, d, 0.1, 200, true);
    REQUIRE(code.objective.size() == 201);
    CHECK(non_increasing(code.objective));
    const double reached = lasso_objective(x, d, code.coefficients, 0.1);
    CHECK(reached == doctest::Approx(code.objective.back()).epsilon(1e-12));
    CHECK(std::abs(reached - oracle::lasso_minimum(x, d, 0.1)) < 1e-6);
  }
}

TEST_CASE("coding argument checks") {
  Rng rng(5);
  const auto d = random_dictionary(rng, 3, 4);
  CHECK_THROWS_AS(sparse_code(std::vector<double>(5, 1.0), d, 0.1, 10), ShapeError);
  CHECK_THROWS_AS(sparse_code(std::vector<double>(4, 1.0), d, 0.0, 10), ParameterError);
  CHECK_THROWS_AS(sparse_code(std::vector<double>(4, 1.0), d, 0.1, 0), ParameterError);
  CHECK(lipschitz_constant(d) >= 1.0 - 1e-9);  // λmax(DᵀD) ≥ max diagonal entry = 1
}

TEST_CASE("rank-one data learns its direction") {
  Rng rng(6);
  auto u = random_vector(rng, 16);
  const double n = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
  for (double& v : u) v /= n;
  const std::vector<Patch> patches(20, u);
  LearnOptions opts;
  opts.atoms = 1;
  opts.lambda = 0.01;
  opts.epochs = 5;
  opts.seed = 9;
  const auto learned = learn_dictionary(patches, 4, opts);
  const double dot = std::inner_product(u.begin(), u.end(), learned.dictionary.atom(0).begin(), 0.0);
  CHECK(std::abs(std::abs(dot) - 1.0) < 1e-6);
}

TEST_CASE("spanning dictionary drives reconstruction error to zero") {
  Rng rng(7);
  std::vector<Patch> patches;
  for (int i = 0; i < 4; ++i) patches.push_back(random_vector(rng, 9));
  LearnOptions opts;
  opts.atoms = 4;
  opts.lambda = 1e-6;
  opts.epochs = 30;
  opts.ista_iters = 400;
  opts.seed = 1;
  const auto learned = learn_dictionary(patches, 3, opts);
  double err = 0, energy = 0;
  for (const auto& p : patches) {
    const auto code = sparse_code(p, learned.dictionary, opts.lambda, 2000);
    std::vector<double> r = p;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t j = 0; j < 9; ++j) r[j] -= code.coefficients[a] * learned.dictionary.atom(a)[j];
    for (std::size_t j = 0; j < 9; ++j) err += r[j] * r[j], energy += p[j] * p[j];
  }
  CHECK(err / energy < 1e-6);
}

TEST_CASE("dictionary objective is monotone between re-seeds and atoms stay unit norm") {
  Rng rng(8);
  std::vector<Patch> patches;
  for (int i = 0; i < 50; ++i) patches.push_back(random_vector(rng, 16));
  LearnOptions opts;
  opts.atoms = 8;
  opts.lambda = 0.1;
  opts.epochs = 20;
  opts.seed = 2;
  const auto learned = learn_dictionary(patches, 4, opts);
  REQUIRE(learned.objective.size() == 20);
  for (std::size_t e = 1; e < learned.objective.size(); ++e) {
    const bool reseeded = std::any_of(learned.reseeds.begin(), learned.reseeds.end(),
                                      [&](const ReseedEvent& r) { return r.epoch == e - 1; });
    if (!reseeded)
      CHECK(learned.objective[e] <= learned.objective[e - 1] + 1e-12 * learned.objective[e - 1]);
  }
  for (std::size_t a = 0; a < learned.dictionary.size(); ++a) {
    const auto atom = learned.dictionary.atom(a);
    CHECK(std::abs(std::sqrt(std::inner_product(atom.begin(), atom.end(), atom.begin(), 0.0)) - 1.0) < 1e-9);
  }
  const auto again = learn_dictionary(patches, 4, opts);
  CHECK(again.dictionary == learned.dictionary);
  CHECK(again.objective == learned.objective);
  CHECK_THROWS_AS(learn_dictionary(std::vector<Patch>{}, 4, opts), InputError);
}

TEST_CASE("emphasis product matches a patch-by-patch recomputation") {
  Rng rng(9);
  const std::size_t side = 12, p = 3;
  const auto d = random_dictionary(rng, 5, p * p, p);
  for (std::size_t stride : {3, 2, 4}) {
    const auto img = random_image(rng, side);
    const auto out = emphasize(img, d, 0.05, 40, stride);
    std::vector<double> recon(side * side, 0.0), hits(side * side, 0.0);
    const std::size_t per_axis = (side - p) / stride + 1;
    for (std::size_t oy = 0; oy < per_axis; ++oy)
      for (std::size_t ox = 0; ox < per_axis; ++ox) {
        std::vector<double> patch;
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) patch.push_back(img.at(oy * stride + y, ox * stride + x));
        const auto code = sparse_code(patch, d, 0.05, 40);
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) {
            double v = 0;
            for (std::size_t a = 0; a < d.size(); ++a) v += code.coefficients[a] * d.atom(a)[y * p + x];
            const std::size_t idx = (oy * stride + y) * side + ox * stride + x;
            recon[idx] += v;
            hits[idx] += 1;
          }
      }
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < recon.size(); ++i)
      if (hits[i] > 0) {
        recon[i] /= hits[i];
        lo = std::min(lo, recon[i]);
        hi = std::max(hi, recon[i]);
      }
    for (std::size_t i = 0; i < recon.size(); ++i) {
      const double mask = hits[i] > 0 ? (recon[i] - lo) / (hi - lo) : 1.0;
      CHECK(std::abs(out.values[i] - img.values[i] * mask) < 1e-12);
      CHECK(out.values[i] <= img.values[i]);
      CHECK(out.values[i] >= 0.0);
    }
  }
}

TEST_CASE("emphasis edge cases") {
  Rng rng(10);
  const auto d = random_dictionary(rng, 4, 9, 3);
  rp::UnitImage black{9, std::vector<double>(81, 0.0)};
  CHECK(emphasize(black, d, 0.1, 20, 3).values == black.values);

  // A constant image coded by a dictionary containing the constant atom
  // reconstructs to a constant: the mask is neutral.
  Dictionary flat{3, 9, std::vector<double>(9, 1.0 / 3.0)};
  rp::UnitImage grey{9, std::vector<double>(81, 0.4)};
  CHECK(emphasize(grey, flat, 0.01, 50, 3).values == grey.values);

  CHECK_THROWS_AS(emphasize(grey, Dictionary{4, 9, std::vector<double>(9, 1.0 / 3.0)}, 0.1, 10, 3), ShapeError);
}

TEST_CASE("faulty-looking image is changed by a dictionary learned on smooth patches") {
  Rng rng(11);
  std::vector<Patch> smooth;
  for (int i = 0; i < 60; ++i) {
    const double a = rng.uniform(), b = rng.uniform(-0.05, 0.05);
    Patch p(16);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) p[y * 4 + x] = a + b * (x + y);
    smooth.push_back(p);
  }
  LearnOptions opts;
  opts.atoms = 4;
  opts.lambda = 0.01;
  opts.seed = 3;
  const auto dict = learn_dictionary(smooth, 4, opts).dictionary;
  const auto img = random_image(rng, 16);
  CHECK(emphasize(img, dict, 0.01, 50, 4).values != img.values);
}

TEST_CASE("dictionary file round trip") {
  Rng rng(12);
  const auto d = random_dictionary(rng, 6, 16, 4);
  const auto dir = test::scratch("dictionary");
  save_dictionary(d, dir / "d.bin");
  CHECK(load_dictionary(dir / "d.bin") == d);
  CHECK(std::filesystem::file_size(dir / "d.bin") == 16 + 6 * 16 * 8);
  std::ofstream(dir / "junk.bin") << "not a dictionary";
  CHECK_THROWS_AS(load_dictionary(dir / "junk.bin"), FormatError);
}
