#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "itsc/error.hpp"
#include "itsc/signal.hpp"
#include "support.hpp"

using namespace itsc;
using namespace itsc::sim;

namespace {

constexpr double kPi = std::numbers::pi;

NoiseSpec noiseless() { return NoiseSpec{}; }

std::complex<double> dft_bin(std::span<const double> x, std::size_t k) {
  std::complex<double> acc = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double arg = -2.0 * kPi * static_cast<double>(k * i % x.size()) / n;
    acc += x[i] * std::complex<double>(std::cos(arg), std::sin(arg));
  }
  return acc;
}

double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST_CASE("electrical frequency is speed/60 times pole pairs") {
  MotorConfig cfg;
  cfg.rated_speed_rpm = 3000;
  cfg.pole_pairs = 1;
  CHECK(cfg.electrical_frequency() == 50.0);
  cfg.pole_pairs = 4;
  CHECK(cfg.electrical_frequency() == 200.0);
}

TEST_CASE("healthy noiseless currents are balanced sinusoids") {
  MotorConfig cfg;
  const auto sig = simulate_currents(cfg, {0.0, Phase::A}, noiseless(), 0.01, 1);
  REQUIRE(sig.size() == 1000);
  const double w = 2 * kPi * cfg.electrical_frequency();
  double peak = 0.0;
  for (std::size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / cfg.sample_rate;
    for (int k = 0; k < 3; ++k) {
      CHECK(sig.phases[k][n] == cfg.rated_amplitude * std::sin(w * t - 2 * kPi * k / 3));
      peak = std::max(peak, std::abs(sig.phases[k][n]));
    }
  }
  CHECK(peak == doctest::Approx(cfg.rated_amplitude).epsilon(1e-9));

  // 1000 samples = 2 periods: fundamental in bin 2, third harmonic in bin 6.
  const auto a = dft_bin(sig.ia(), 2), b = dft_bin(sig.ib(), 2), c = dft_bin(sig.ic(), 2);
  CHECK(std::abs(std::remainder(std::arg(a) - std::arg(b) - 2 * kPi / 3, 2 * kPi)) < 1e-9);
  CHECK(std::abs(std::remainder(std::arg(b) - std::arg(c) - 2 * kPi / 3, 2 * kPi)) < 1e-9);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(dft_bin(sig.phases[k], 6)) / std::abs(dft_bin(sig.phases[k], 2)) < 1e-9);
}

TEST_CASE("faulted phase amplitude and third-harmonic ratio follow the coupling") {
  MotorConfig cfg;
  const double fr = 0.078;
  const auto sig = simulate_currents(cfg, {fr, Phase::A}, noiseless(), 0.05, 9);
  REQUIRE(sig.size() == 5000);  // 10 electrical periods
  const double n = static_cast<double>(sig.size());
  const double fund = 2.0 * std::abs(dft_bin(sig.ia(), 10)) / n;
  const double third = 2.0 * std::abs(dft_bin(sig.ia(), 30)) / n;
  CHECK(fund == doctest::Approx((1 - 0.039) * cfg.rated_amplitude).epsilon(1e-9));
  CHECK(third / fund == doctest::Approx(0.078 / (1 - 0.039)).epsilon(1e-9));
  // Healthy phases: full fundamental, half the third harmonic.
  CHECK(2.0 * std::abs(dft_bin(sig.ib(), 10)) / n == doctest::Approx(cfg.rated_amplitude).epsilon(1e-9));
  CHECK(2.0 * std::abs(dft_bin(sig.ic(), 30)) / n == doctest::Approx(0.5 * fr * cfg.rated_amplitude).epsilon(1e-9));
}

TEST_CASE("noiseless channel energy") {
  MotorConfig cfg;
  const auto sig = simulate_currents(cfg, {0.0433, Phase::B}, noiseless(), 0.02, 3);  // 4 periods
  const double ref = cfg.rated_amplitude / std::sqrt(2.0);
  const double fr = 0.0433;
  // Healthy phases: fundamental plus the half-strength third harmonic.
  const double healthy = std::sqrt(ref * ref + std::pow(0.5 * fr * cfg.rated_amplitude, 2) / 2);
  CHECK(rms(sig.ia()) == doctest::Approx(healthy).epsilon(1e-9));
  CHECK(rms(sig.ic()) == doctest::Approx(healthy).epsilon(1e-9));
  const double faulted = std::sqrt(std::pow((1 - 0.5 * fr) * cfg.rated_amplitude, 2) / 2 +
                                   std::pow(fr * cfg.rated_amplitude, 2) / 2);
  CHECK(rms(sig.ib()) == doctest::Approx(faulted).epsilon(1e-9));

  const auto clean = simulate_currents(cfg, {0.0, Phase::A}, noiseless(), 0.02, 3);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(rms(clean.phases[k]) - ref) < 1e-9);
}

TEST_CASE("simulation is a pure function of inputs and seed") {
  MotorConfig cfg;
  const NoiseSpec noise{25.0, 50.0, 2.0};
  const auto a = simulate_currents(cfg, {0.02, Phase::C}, noise, 0.05, 42);
  const auto b = simulate_currents(cfg, {0.02, Phase::C}, noise, 0.05, 42);
  const auto c = simulate_currents(cfg, {0.02, Phase::C}, noise, 0.05, 43);
  CHECK(a.phases == b.phases);
  CHECK(a.phases != c.phases);
}

TEST_CASE("measured SNR matches the request within half a decibel") {
  MotorConfig cfg;
  for (double snr : {10.0, 30.0}) {
    const auto noisy = simulate_currents(cfg, {0.05, Phase::A}, {snr, 0.0, 0.0}, 1.0, 5);
    const auto clean = simulate_currents(cfg, {0.05, Phase::A}, noiseless(), 1.0, 5);
    REQUIRE(noisy.size() >= 100000);
    for (int k = 0; k < 3; ++k) {
      double ps = 0, pn = 0;
      for (std::size_t i = 0; i < noisy.size(); ++i) {
        ps += clean.phases[k][i] * clean.phases[k][i];
        const double e = noisy.phases[k][i] - clean.phases[k][i];
        pn += e * e;
      }
      CHECK(std::abs(10 * std::log10(ps / pn) - snr) < 0.5);
    }
  }
}

TEST_CASE("spike count is consistent with the Poisson rate") {
  MotorConfig cfg;
  const double rate = 200.0, duration = 5.0;
  const auto spiky = simulate_currents(cfg, {0.0, Phase::A}, {INFINITY, rate, 3.0}, duration, 17);
  const auto clean = simulate_currents(cfg, {0.0, Phase::A}, noiseless(), duration, 17);
  const double mean = rate * duration, sigma = std::sqrt(mean);
  for (int k = 0; k < 3; ++k) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < spiky.size(); ++i) {
      const double d = spiky.phases[k][i] - clean.phases[k][i];
      if (d != 0.0) {
        // Two arrivals can land on one sample; same-sign pairs double up, opposite ones cancel.
        const double units = std::abs(d) / (3.0 * cfg.rated_amplitude);
        CHECK(std::abs(units - std::round(units)) < 1e-9);
        count += static_cast<std::size_t>(std::round(units));
      }
    }
    CHECK(std::abs(static_cast<double>(count) - mean) < 3 * sigma);
  }
}

TEST_CASE("sample count is floor(duration x rate)") {
  MotorConfig cfg;
  cfg.sample_rate = 1000;
  cfg.rated_speed_rpm = 600;
  cfg.pole_pairs = 1;
  CHECK(simulate_currents(cfg, {}, noiseless(), 0.0015, 1).size() == 1);
  CHECK(simulate_currents(cfg, {}, noiseless(), 0.0999, 1).size() == 99);
  CHECK_THROWS_AS(simulate_currents(cfg, {}, noiseless(), 0.0005, 1), ConfigError);
}

TEST_CASE("invalid parameters name the offending field") {
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  MotorConfig cfg;
  MotorConfig bad = cfg;
  bad.sample_rate = 300.0;  // below 2 × 200 Hz
  CHECK(message([&] { simulate_currents(bad, {}, {}, 1, 1); }).starts_with("motor.sample_rate"));
  bad = cfg;
  bad.rated_amplitude = NAN;
  CHECK(message([&] { simulate_currents(bad, {}, {}, 1, 1); }).starts_with("motor.rated_amplitude"));
  bad = cfg;
  bad.pole_pairs = 0;
  CHECK(message([&] { simulate_currents(bad, {}, {}, 1, 1); }).starts_with("motor.pole_pairs"));
  CHECK(message([&] { simulate_currents(cfg, {1.0, Phase::A}, {}, 1, 1); }).starts_with("fault.fault_ratio"));
  CHECK(message([&] { simulate_currents(cfg, {-0.1, Phase::A}, {}, 1, 1); }).starts_with("fault.fault_ratio"));
  CHECK(message([&] { simulate_currents(cfg, {}, {NAN, 0, 0}, 1, 1); }).starts_with("noise.snr_db"));
  CHECK(message([&] { simulate_currents(cfg, {}, {INFINITY, -1, 0}, 1, 1); }).starts_with("noise.spike_rate"));
  CHECK(message([&] { simulate_currents(cfg, {}, {}, INFINITY, 1); }).starts_with("duration_s"));
  CHECK_THROWS_AS(parse_phase("D"), ConfigError);
  CHECK(parse_phase("b") == Phase::B);
}

TEST_CASE("window counts and offsets") {
  ThreePhaseSignal sig;
  sig.sample_rate = 1;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 10; ++i) sig.phases[k].push_back(i + 100 * k);

  auto one = window_signal(sig, 10, 1);
  REQUIRE(one[0].size() == 1);
  CHECK(one[0][0] == sig.phases[0]);

  auto three = window_signal(sig, 4, 3);
  REQUIRE(three[1].size() == 3);
  CHECK(window_starts(10, 4, 3) == std::vector<std::size_t>{0, 3, 6});
  CHECK(three[1][2] == std::vector<double>{106, 107, 108, 109});

  CHECK(window_count(100000, 8192, 8192) == 12);
  std::size_t enumerated = 0;
  for (std::size_t s = 0; s + 8192 <= 100000; s += 8192) ++enumerated;
  CHECK(enumerated == 12);

  CHECK_THROWS_AS(window_signal(sig, 11, 1), SizingError);
  CHECK_THROWS_AS(window_signal(sig, 0, 1), SizingError);
  CHECK_THROWS_AS(window_signal(sig, 4, 0), SizingError);
}

TEST_CASE("window count property over random sizes") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.index(500), win = 1 + rng.index(len), hop = 1 + rng.index(50);
    const auto starts = window_starts(len, win, hop);
    REQUIRE(starts.size() == (len - win) / hop + 1);
    for (std::size_t k = 0; k < starts.size(); ++k) CHECK(starts[k] == k * hop);
    CHECK(starts.back() + win <= len);
    CHECK(starts.back() + hop + win > len);
  }
}

TEST_CASE("CSV round trip is exact") {
  MotorConfig cfg;
  const auto sig = simulate_currents(cfg, {0.03, Phase::B}, {20, 100, 1.5}, 0.01, 8);
  const auto dir = test::scratch("signal_csv");
  write_csv(sig, dir / "s.csv");
  const auto back = read_csv(dir / "s.csv", cfg.sample_rate);
  CHECK(back.sample_rate == cfg.sample_rate);
  CHECK(back.phases == sig.phases);

  std::ofstream(dir / "bad.csv") << "time,a,b,c\n0,1,2,3\n";
  CHECK_THROWS_AS(read_csv(dir / "bad.csv", 1.0), FormatError);
  CHECK_THROWS_AS(read_csv(dir / "missing.csv", 1.0), IoError);
}

TEST_CASE("signal validation") {
  ThreePhaseSignal sig;
  sig.sample_rate = 10;
  sig.phases = {std::vector<double>{1, 2}, {1, 2}, {1}};
  CHECK_THROWS_AS(sig.validate(), InputError);
  sig.phases[2] = {1, NAN};
  CHECK_THROWS_AS(sig.validate(), InputError);
  sig.phases[2] = {1, 2};
  CHECK_NOTHROW(sig.validate());
}
