#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "itsc/error.hpp"
#include "itsc/image_io.hpp"
#include "itsc/imaging.hpp"
#include "itsc/reference.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace itsc;
using namespace itsc::rp;
namespace fs = std::filesystem;

namespace {

RPImage image_of(std::size_t side, std::vector<double> values, double n) { return {side, std::move(values), n}; }

}  // namespace

TEST_CASE("delay embedding examples") {
  const std::vector<double> w{1, 2, 3, 4};
  const auto t = delay_embed(w, {2, 1});
  CHECK(t.dim == 2);
  CHECK(t.points == std::vector<double>{1, 2, 2, 3, 3, 4});

  const auto id = delay_embed(w, {1, 7});
  CHECK(id.points == w);

  const std::vector<double> p4{0, 1, 0, -1, 0, 1, 0, -1};
  const auto t4 = delay_embed(p4, {2, 2});
  REQUIRE(t4.size() == 6);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < 4; ++i) pts.emplace_back(t4.point(i)[0], t4.point(i)[1]);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  CHECK(pts == std::vector<std::pair<double, double>>{{-1, 1}, {0, 0}, {1, -1}});

  CHECK(embedded_length(10, {3, 4}) == 2);
  CHECK_THROWS_AS(delay_embed(std::vector<double>{1, 2, 3}, {2, 2}), SizingError);
  CHECK_THROWS_AS(delay_embed(w, {0, 1}), ParameterError);
}

TEST_CASE("delay embedding definition on random windows") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.index(4), tau = 1 + rng.index(5);
    const std::size_t len = (m - 1) * tau + 2 + rng.index(40);
    std::vector<double> w(len);
    for (double& v : w) v = rng.normal();
    const auto t = delay_embed(w, {m, tau});
    REQUIRE(t.size() == len - (m - 1) * tau);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t k = 0; k < m; ++k) CHECK(t.point(i)[k] == w[i + k * tau]);
  }
}

TEST_CASE("modified RP examples") {
  const auto flat = delay_embed(std::vector<double>(20, 3.5), {2, 3});
  const auto zero = modified_rp(flat, 1.0);
  CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](double v) { return v == 0.0; }));

  Trajectory two{2, {0, 0, 3, 4}};
  const auto r = modified_rp(two, 3.0);
  CHECK(r.at(0, 1) == 3.0);
  CHECK(r.at(1, 0) == 3.0);
  CHECK(r.at(0, 0) == 0.0);
  CHECK(modified_rp(two, 6.0).at(0, 1) == 5.0);

  CHECK_THROWS_AS(modified_rp(two, 0.0), ParameterError);
  CHECK_THROWS_AS(modified_rp(two, -1.0), ParameterError);
  CHECK_THROWS_AS(modified_rp(two, NAN), ParameterError);
  CHECK_THROWS_AS(modified_rp(two, INFINITY), ParameterError);
}

TEST_CASE("modified RP invariants on random trajectories") {
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const auto t = test::random_trajectory(rng, 2 + rng.index(40), 1 + rng.index(4), 5.0);
    const double n = rng.uniform(0.1, 8.0);
    const auto r = modified_rp(t, n);
    const auto d = oracle::distance_matrix(t);
    REQUIRE(r.side == t.size());
    CHECK(r.clip_threshold == n);
    for (std::size_t i = 0; i < r.side; ++i) {
      CHECK(r.at(i, i) == 0.0);
      for (std::size_t j = 0; j < r.side; ++j) {
        CHECK(r.at(i, j) == r.at(j, i));
        CHECK(r.at(i, j) >= 0.0);
        CHECK(r.at(i, j) <= n);
        if (d[i * r.side + j] < n) CHECK(std::abs(r.at(i, j) - d[i * r.side + j]) <= 1e-12);
      }
    }
    CHECK(r.values == reference::modified_rp(t, n).values);
  }
}

TEST_CASE("saturation monotonicity") {
  Rng rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    const auto t = test::random_trajectory(rng, 30, 2, 3.0);
    const double n1 = rng.uniform(0.1, 3.0), n2 = n1 + rng.uniform(0.0, 3.0);
    const auto r1 = modified_rp(t, n1), r2 = modified_rp(t, n2);
    for (std::size_t k = 0; k < r1.values.size(); ++k) CHECK(r1.values[k] == std::min(r2.values[k], n1));
  }
}

TEST_CASE("classic RP examples and agreement with thresholded modified RP") {
  Rng rng(23);
  const auto t = test::random_trajectory(rng, 10, 3);
  const double diam = trajectory_diameter(t);
  const auto all = classic_rp(t, diam);
  CHECK(std::all_of(all.values.begin(), all.values.end(), [](auto v) { return v == 1; }));

  const auto d = oracle::distance_matrix(t);
  double min_nonzero = INFINITY;
  for (double v : d)
    if (v > 0) min_nonzero = std::min(min_nonzero, v);
  const auto ident = classic_rp(t, 0.5 * min_nonzero);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) CHECK(ident.at(i, j) == (i == j ? 1 : 0));

  for (int trial = 0; trial < 30; ++trial) {
    const auto tr = test::random_trajectory(rng, 10, 2);
    const double eps = rng.uniform(0.05, 2.0);
    const auto b = classic_rp(tr, eps);
    const auto m = modified_rp(tr, trajectory_diameter(tr) + 1.0);
    for (std::size_t k = 0; k < b.values.size(); ++k) CHECK(b.values[k] == (m.values[k] <= eps ? 1 : 0));
    for (std::size_t i = 0; i < b.side; ++i) CHECK(b.at(i, i) == 1);
  }
  CHECK_THROWS_AS(classic_rp(t, 0.0), ParameterError);
}

TEST_CASE("sinusoid RP repeats with the period") {
  const std::size_t period = 100;
  const auto w = test::sinusoid(700, static_cast<double>(period), 2.0);
  const auto t = delay_embed(w, {2, period / 4});
  const double n = trajectory_diameter(t) + 0.1;
  const auto r = modified_rp(t, n);
  double total = 0.0, worst = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + period < r.side; ++i)
    for (std::size_t j = 0; j + period < r.side; ++j) {
      const double diff = std::abs(r.at(i, j) - r.at(i + period, j + period));
      worst = std::max(worst, diff);
      total += diff;
      ++count;
    }
  CHECK(worst <= 1e-9);
  CHECK(total / static_cast<double>(count) < 1e-6 * n);
}

TEST_CASE("a spike moves clipped entries by at most N") {
  const auto clean = test::sinusoid(400, 80.0, 1.0);
  auto spiked = clean;
  const std::size_t at = 200, tau = 20;
  const double n = 1.0;
  spiked[at] += 50.0;
  const auto tc = delay_embed(clean, {2, tau}), ts = delay_embed(spiked, {2, tau});
  const auto rc = modified_rp(tc, n), rs = modified_rp(ts, n);
  const auto dc = oracle::distance_matrix(tc), ds = oracle::distance_matrix(ts);
  const std::size_t side = rc.side;
  for (std::size_t k = 0; k < rc.values.size(); ++k) CHECK(std::abs(rc.values[k] - rs.values[k]) <= n);
  for (std::size_t row : {at, at - tau})
    for (std::size_t j = 0; j < side; ++j) {
      if (j == at || j == at - tau) continue;
      CHECK(std::abs(dc[row * side + j] - ds[row * side + j]) > 10 * n);
    }
}

TEST_CASE("resize examples") {
  Rng rng(30);
  const auto t = test::random_trajectory(rng, 12, 2);
  const auto r = modified_rp(t, 0.8);
  const auto same = resize_image(r, 12);
  CHECK(same.values == r.values);

  const auto c = resize_image(image_of(4, std::vector<double>(16, 0.7), 1.0), 2);
  REQUIRE(c.side == 2);
  for (double v : c.values) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

  std::vector<double> six(36);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i; j < 6; ++j) six[i * 6 + j] = six[j * 6 + i] = i == j ? 0.0 : rng.uniform();
  const auto small = resize_image(image_of(6, six, 1.0), 3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      const double mean =
          (six[(2 * a) * 6 + 2 * b] + six[(2 * a) * 6 + 2 * b + 1] + six[(2 * a + 1) * 6 + 2 * b] +
           six[(2 * a + 1) * 6 + 2 * b + 1]) / 4;
      CHECK(small.at(a, b) == doctest::Approx(mean).epsilon(1e-14));
    }
  CHECK_THROWS_AS(resize_image(r, 13), SizingError);
}

TEST_CASE("resize preserves symmetry and range for non-integer ratios") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto t = test::random_trajectory(rng, 20 + rng.index(60), 2, 2.0);
    const double n = rng.uniform(0.2, 2.0);
    const auto r = modified_rp(t, n);
    const std::size_t target = 2 + rng.index(r.side - 1);
    const auto s = resize_image(r, target);
    REQUIRE(s.side == target);
    for (std::size_t i = 0; i < target; ++i)
      for (std::size_t j = 0; j < target; ++j) {
        CHECK(s.at(i, j) == s.at(j, i));
        CHECK(s.at(i, j) >= 0.0);
        CHECK(s.at(i, j) <= n);
      }
    // Area averaging conserves the total mass scaled by the area ratio.
    const double scale = static_cast<double>(target * target) / static_cast<double>(r.side * r.side);
    const double in = std::accumulate(r.values.begin(), r.values.end(), 0.0) * scale;
    const double out = std::accumulate(s.values.begin(), s.values.end(), 0.0);
    CHECK(out == doctest::Approx(in).epsilon(1e-10));
  }
}

TEST_CASE("area weights partition each source cell") {
  for (auto [src, dst] : {std::pair<std::size_t, std::size_t>{10, 3}, {7, 7}, {3971, 600}, {9, 2}}) {
    const auto w = detail::area_weights(src, dst);
    std::vector<double> coverage(src, 0.0);
    for (std::size_t a = 0; a < dst; ++a) {
      double sum = 0;
      for (std::size_t k = 0; k < w.weights[a].size(); ++k) {
        coverage[w.first[a] + k] += w.weights[a][k] * static_cast<double>(src) / static_cast<double>(dst);
        sum += w.weights[a][k];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (double c : coverage) CHECK(c == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fused clipped resize equals resize of the full matrix") {
  Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = test::random_trajectory(rng, 50 + rng.index(150), 2, 3.0);
    const double n = rng.uniform(0.5, 4.0);
    const std::size_t target = 2 + rng.index(t.size() - 1);
    const auto fused = clipped_rp_resized(t, n, target);
    const auto ref = resize_image(modified_rp(t, n), target);
    CHECK(fused.values == ref.values);
    CHECK(fused.values == reference::clipped_rp_resized(t, n, target).values);
  }
}

TEST_CASE("normalization") {
  Rng rng(33);
  const auto t = test::random_trajectory(rng, 25, 2);
  const auto r = modified_rp(t, 0.6);
  const auto u = normalize_image(r);
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    CHECK(u.values[k] == r.values[k] / 0.6);
    CHECK(u.values[k] <= 1.0);
  }
  for (std::size_t i = 0; i < u.side; ++i) CHECK(u.at(i, i) == 0.0);
  CHECK(*std::max_element(u.values.begin(), u.values.end()) == 1.0);
  const auto z = normalize_image(image_of(3, std::vector<double>(9, 0.0), 2.0));
  CHECK(std::all_of(z.values.begin(), z.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("constant window gives an all-black image") {
  const auto t = delay_embed(std::vector<double>(300, -2.0), {2, 10});
  const auto img = normalize_image(clipped_rp_resized(t, 1.0, 50));
  CHECK(std::all_of(img.values.begin(), img.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("median pairwise distance") {
  Trajectory line{1, {0, 1, 3}};  // distances 1, 2, 3
  CHECK(median_pairwise_distance(std::span(&line, 1)) == 2.0);
  Trajectory four{1, {0, 1, 3, 7}};  // 1,2,3,4,6,7 → upper median 4
  CHECK(median_pairwise_distance(std::span(&four, 1)) == 4.0);
  std::vector<Trajectory> pair{Trajectory{1, {0, 10}}, Trajectory{1, {0, 1}}};  // pooled 10, 1
  CHECK(median_pairwise_distance(pair) == 10.0);
  Trajectory single{1, {5}};
  CHECK_THROWS_AS(median_pairwise_distance(std::span(&single, 1)), InputError);
}

TEST_CASE("PGM round trip is pixel exact") {
  Rng rng(34);
  UnitImage img{17, std::vector<double>(17 * 17)};
  for (double& v : img.values) v = rng.uniform();
  img.values[0] = 0.0;
  img.values[1] = 1.0;
  const auto dir = test::scratch("pgm");
  write_pgm16(img, dir / "a.pgm");
  const auto back = read_pgm16(dir / "a.pgm");
  REQUIRE(back.side == 17);
  for (std::size_t k = 0; k < img.values.size(); ++k) CHECK(quantize(back.values[k]) == quantize(img.values[k]));
  write_pgm16(back, dir / "b.pgm");
  CHECK(read_pgm16(dir / "b.pgm").values == back.values);
  CHECK(quantize(0.5) == 32768);
  CHECK(quantize(1.5) == 65535);
  CHECK(quantize(-0.1) == 0);
  write_png16(img, dir / "a.png");
  CHECK(fs::file_size(dir / "a.png") > 0);
  std::ofstream(dir / "bad.pgm") << "P2\n2 2\n255\n";
  CHECK_THROWS_AS(read_pgm16(dir / "bad.pgm"), FormatError);
}
