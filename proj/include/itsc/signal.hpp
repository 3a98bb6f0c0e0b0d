#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace itsc::sim {

enum class Phase { A = 0, B = 1, C = 2 };

Phase parse_phase(std::string_view name);
std::string_view phase_name(Phase p);

/// Fault-to-signal coupling. Faulted phase: amplitude × (1 − alpha·FR),
/// lag beta·FR rad, third harmonic gamma·FR·I. Healthy phases carry a third
/// harmonic of gamma·FR·I/2.
struct FaultCoupling {
  double alpha = 0.5;
  double beta = 0.2;
  double gamma = 1.0;
};

struct MotorConfig {
  double rated_speed_rpm = 3000.0;
  int pole_pairs = 4;
  double rated_amplitude = 10.0;  // phase-current peak, A
  double sample_rate = 100'000.0;  // Hz
  FaultCoupling coupling{};

  double electrical_frequency() const { return rated_speed_rpm / 60.0 * pole_pairs; }
  void validate() const;
};

struct FaultSpec {
  double fault_ratio = 0.0;
  Phase faulted_phase = Phase::A;

  void validate() const;
};

struct NoiseSpec {
  double snr_db = std::numeric_limits<double>::infinity();
  double spike_rate = 0.0;       // expected spikes per second, per channel
  double spike_amplitude = 0.0;  // multiple of rated_amplitude

  void validate() const;
};

struct ThreePhaseSignal {
  double sample_rate = 0.0;
  std::array<std::vector<double>, 3> phases;

  std::size_t size() const { return phases[0].size(); }
  std::span<const double> channel(Phase p) const { return phases[static_cast<int>(p)]; }
  const std::vector<double>& ia() const { return phases[0]; }
  const std::vector<double>& ib() const { return phases[1]; }
  const std::vector<double>& ic() const { return phases[2]; }

  /// Throws InputError unless the three channels share one non-zero length,
  /// the sample rate is positive and every sample is finite.
  void validate() const;
};

/// Noise-free phase currents for the given operating point and fault.
ThreePhaseSignal clean_currents(const MotorConfig& cfg, const FaultSpec& fault, std::size_t samples);

/// Synthetic stator currents: clean model + white Gaussian noise at
/// `noise.snr_db` (per channel, against that channel's clean power) +
/// Poisson-timed single-sample spikes of random sign.
ThreePhaseSignal simulate_currents(const MotorConfig& cfg, const FaultSpec& fault,
                                   const NoiseSpec& noise, double duration_s, std::uint64_t seed);

std::size_t window_count(std::size_t length, std::size_t window_len, std::size_t hop);

/// Start offsets of all full windows.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len, std::size_t hop);

/// windows[phase][k] is the k-th window of that phase.
using PhaseWindows = std::array<std::vector<std::vector<double>>, 3>;

PhaseWindows window_signal(const ThreePhaseSignal& sig, std::size_t window_len, std::size_t hop);

/// CSV with header `t,ia,ib,ic`; values written in shortest round-trip form.
void write_csv(const ThreePhaseSignal& sig, const std::filesystem::path& path);
ThreePhaseSignal read_csv(const std::filesystem::path& path, double sample_rate);

}  // namespace itsc::sim
