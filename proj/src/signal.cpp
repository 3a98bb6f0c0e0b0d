#include "itsc/signal.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "itsc/error.hpp"
#include "itsc/rng.hpp"

namespace itsc::sim {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

Phase parse_phase(std::string_view name) {
  if (name == "A" || name == "a") return Phase::A;
  if (name == "B" || name == "b") return Phase::B;
  if (name == "C" || name == "c") return Phase::C;
  throw ConfigError("phase: expected one of A, B, C, got '" + std::string(name) + "'");
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::A: return "A";
    case Phase::B: return "B";
    case Phase::C: return "C";
  }
  return "?";
}

void MotorConfig::validate() const {
  require(std::isfinite(rated_speed_rpm) && rated_speed_rpm > 0, "motor.rated_speed", "must be finite and > 0");
  require(pole_pairs >= 1, "motor.pole_pairs", "must be >= 1");
  require(std::isfinite(rated_amplitude) && rated_amplitude > 0, "motor.rated_amplitude", "must be finite and > 0");
  require(std::isfinite(sample_rate) && sample_rate > 0, "motor.sample_rate", "must be finite and > 0");
  require(sample_rate > 2.0 * electrical_frequency(), "motor.sample_rate",
          "must exceed twice the electrical frequency");
  require(std::isfinite(coupling.alpha), "motor.coupling.alpha", "must be finite");
  require(std::isfinite(coupling.beta), "motor.coupling.beta", "must be finite");
  require(std::isfinite(coupling.gamma), "motor.coupling.gamma", "must be finite");
}

void FaultSpec::validate() const {
  require(std::isfinite(fault_ratio) && fault_ratio >= 0.0 && fault_ratio < 1.0, "fault.fault_ratio",
          "must lie in [0, 1)");
}

void NoiseSpec::validate() const {
  // +inf is the noiseless setting; -inf and NaN are rejected.
  require(!std::isnan(snr_db) && snr_db != -std::numeric_limits<double>::infinity(), "noise.snr_db",
          "must be a real number or +inf");
  require(std::isfinite(spike_rate) && spike_rate >= 0, "noise.spike_rate", "must be finite and >= 0");
  require(std::isfinite(spike_amplitude) && spike_amplitude >= 0, "noise.spike_amplitude",
          "must be finite and >= 0");
}

void ThreePhaseSignal::validate() const {
  if (!(sample_rate > 0) || !std::isfinite(sample_rate)) throw InputError("signal: sample_rate must be > 0");
  const std::size_t n = phases[0].size();
  if (n == 0) throw InputError("signal: channels must be non-empty");
  for (const auto& ch : phases) {
    if (ch.size() != n) throw InputError("signal: channel lengths differ");
    for (double v : ch)
      if (!std::isfinite(v)) throw InputError("signal: non-finite sample");
  }
}

ThreePhaseSignal clean_currents(const MotorConfig& cfg, const FaultSpec& fault, std::size_t samples) {
  cfg.validate();
  fault.validate();
  const double w = kTwoPi * cfg.electrical_frequency();
  const double amp = cfg.rated_amplitude;
  const double fr = fault.fault_ratio;
  const int faulted = static_cast<int>(fault.faulted_phase);

  ThreePhaseSignal sig;
  sig.sample_rate = cfg.sample_rate;
  for (int k = 0; k < 3; ++k) {
    const double offset = kTwoPi * k / 3.0;
    const bool is_faulted = (k == faulted);
    const double fundamental = is_faulted ? amp * (1.0 - cfg.coupling.alpha * fr) : amp;
    const double lag = is_faulted ? cfg.coupling.beta * fr : 0.0;
    const double third = is_faulted ? cfg.coupling.gamma * fr * amp : 0.5 * cfg.coupling.gamma * fr * amp;

    auto& ch = sig.phases[k];
    ch.resize(samples);
    for (std::size_t n = 0; n < samples; ++n) {
      const double t = static_cast<double>(n) / cfg.sample_rate;
      double v = fundamental * std::sin(w * t - offset - lag);
      if (third != 0.0) v += third * std::sin(3.0 * w * t - offset);
      ch[n] = v;
    }
  }
  return sig;
}

ThreePhaseSignal simulate_currents(const MotorConfig& cfg, const FaultSpec& fault, const NoiseSpec& noise,
                                   double duration_s, std::uint64_t seed) {
  cfg.validate();
  fault.validate();
  noise.validate();
  require(std::isfinite(duration_s) && duration_s > 0, "duration_s", "must be finite and > 0");
  const double count = std::floor(duration_s * cfg.sample_rate);
  require(count >= 1, "duration_s", "duration × sample_rate must be >= 1");
  const auto samples = static_cast<std::size_t>(count);

  ThreePhaseSignal sig = clean_currents(cfg, fault, samples);

  static constexpr std::string_view kNames[3] = {"a", "b", "c"};
  for (int k = 0; k < 3; ++k) {
    auto& ch = sig.phases[k];
    if (std::isfinite(noise.snr_db)) {
      double power = 0.0;
      for (double v : ch) power += v * v;
      power /= static_cast<double>(samples);
      const double sigma = std::sqrt(power / std::pow(10.0, noise.snr_db / 10.0));
      Rng rng(derive_seed(seed, std::string("noise/") + std::string(kNames[k])));
      for (double& v : ch) v += sigma * rng.normal();
    }
    if (noise.spike_rate > 0 && noise.spike_amplitude > 0) {
      Rng rng(derive_seed(seed, std::string("spikes/") + std::string(kNames[k])));
      const double magnitude = noise.spike_amplitude * cfg.rated_amplitude;
      for (double t = rng.exponential(noise.spike_rate); t < duration_s; t += rng.exponential(noise.spike_rate)) {
        const auto idx = static_cast<std::size_t>(t * cfg.sample_rate);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        if (idx < samples) ch[idx] += sign * magnitude;
      }
    }
  }
  return sig;
}

std::size_t window_count(std::size_t length, std::size_t window_len, std::size_t hop) {
  if (window_len < 1) throw SizingError("window_len must be >= 1");
  if (hop < 1) throw SizingError("hop must be >= 1");
  if (window_len > length)
    throw SizingError("window_len " + std::to_string(window_len) + " exceeds signal length " +
                      std::to_string(length));
  return (length - window_len) / hop + 1;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len, std::size_t hop) {
  const std::size_t n = window_count(length, window_len, hop);
  std::vector<std::size_t> starts(n);
  for (std::size_t k = 0; k < n; ++k) starts[k] = k * hop;
  return starts;
}

PhaseWindows window_signal(const ThreePhaseSignal& sig, std::size_t window_len, std::size_t hop) {
  const auto starts = window_starts(sig.size(), window_len, hop);
  PhaseWindows out;
  for (int k = 0; k < 3; ++k) {
    const auto& ch = sig.phases[k];
    out[k].reserve(starts.size());
    for (std::size_t s : starts) out[k].emplace_back(ch.begin() + s, ch.begin() + s + window_len);
  }
  return out;
}

namespace {

void append_double(std::string& buf, double v) {
  char tmp[32];
  auto [ptr, ec] = std::to_chars(tmp, tmp + sizeof tmp, v);
  buf.append(tmp, ptr);
}

}  // namespace

void write_csv(const ThreePhaseSignal& sig, const std::filesystem::path& path) {
  sig.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::string buf = "t,ia,ib,ic\n";
  buf.reserve(1 << 20);
  for (std::size_t n = 0; n < sig.size(); ++n) {
    append_double(buf, static_cast<double>(n) / sig.sample_rate);
    for (int k = 0; k < 3; ++k) {
      buf.push_back(',');
      append_double(buf, sig.phases[k][n]);
    }
    buf.push_back('\n');
    if (buf.size() > (1 << 20) - 128) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ThreePhaseSignal read_csv(const std::filesystem::path& path, double sample_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "t,ia,ib,ic")
    throw FormatError(path.string() + ": expected header 't,ia,ib,ic'");
  ThreePhaseSignal sig;
  sig.sample_rate = sample_rate;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    double vals[4];
    for (int c = 0; c < 4; ++c) {
      auto [next, ec] = std::from_chars(p, end, vals[c]);
      if (ec != std::errc{} || (c < 3 && (next == end || *next != ',')))
        throw FormatError(path.string() + ": malformed row " + std::to_string(row));
      p = next + 1;
    }
    for (int k = 0; k < 3; ++k) sig.phases[k].push_back(vals[k + 1]);
  }
  sig.validate();
  return sig;
}

}  // namespace itsc::sim
