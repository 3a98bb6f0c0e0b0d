#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "itsc/cnn.hpp"
#include "itsc/signal.hpp"

namespace itsc::pipeline {

struct SeverityLevel {
  std::string label;
  double fault_ratio = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 20240601;

  sim::MotorConfig motor{};
  sim::Phase faulted_phase = sim::Phase::A;
  std::vector<SeverityLevel> fault_grid = {
      {"healthy", 0.0}, {"fr_1.82", 0.0182}, {"fr_4.33", 0.0433}, {"fr_7.80", 0.0780}};
  sim::NoiseSpec noise{30.0, 20.0, 2.0};
  double train_duration_s = 3.0;
  double test_duration_s = 2.0;

  std::size_t window_len = 4096;
  std::size_t hop = 4096;
  sim::Phase imaged_phase = sim::Phase::A;

  std::size_t embedding_m = 2;
  std::optional<std::size_t> embedding_tau;  // empty: quarter electrical period
  std::optional<double> clip_threshold;      // empty: median healthy pairwise distance
  std::size_t median_max_points = 256;
  std::size_t image_side = 600;
  bool export_png = false;

  bool emphasis_enabled = true;
  std::size_t patch_side = 20;
  std::size_t patch_stride = 20;
  std::size_t dictionary_atoms = 32;
  double sparsity_lambda = 0.1;
  std::size_t dictionary_epochs = 10;
  std::size_t ista_iters = 50;
  std::size_t dictionary_patches = 2000;

  cnn::NetworkSpec network{};
  bool severity_classes = true;  // false: healthy-vs-faulty labels
  double learning_rate = 0.001;
  std::size_t train_epochs = 10;
  std::size_t batch_size = 8;

  std::optional<double> ridge_epsilon;  // empty: relative default
  double threshold_quantile = 0.99;
  double threshold_margin = 1.0;

  std::size_t entropy_bins = 32;

  /// Throws ConfigError naming the first unsatisfiable field.
  void validate() const;

  std::size_t resolved_tau() const;
  std::size_t class_count() const;
  /// `network` with class_count filled in from the labelling mode.
  cnn::NetworkSpec resolved_network() const;
  int label_of(std::size_t grid_index) const;
};

/// Parses a JSON config; missing keys keep their defaults.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& json_text);
/// Complete JSON snapshot with every default written out.
std::string dump_config(const RunConfig& cfg);

}  // namespace itsc::pipeline
