#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "itsc/imaging.hpp"

namespace itsc::cnn {

/// Dense row-major tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents);

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

struct ConvLayerSpec {
  std::size_t kernel = 3;
  std::size_t channels = 1;
  std::size_t stride = 1;
  std::size_t pool = 1;  // max-pool window and stride; 1 disables pooling

  bool operator==(const ConvLayerSpec&) const = default;
};

/// Spatial sizes implied by a NetworkSpec.
struct DerivedDims {
  std::size_t conv1_side, pool1_side, conv2_side, pool2_side;
  std::size_t flat;  // activation dimension = conv2.channels × pool2_side²
};

/// conv → ReLU → max-pool, conv → ReLU → max-pool, FC → ReLU, FC → logits.
struct NetworkSpec {
  std::size_t input_side = 600;
  ConvLayerSpec conv1{32, 8, 8, 2};
  ConvLayerSpec conv2{16, 16, 2, 2};
  std::size_t fc1_width = 64;
  std::size_t class_count = 2;

  /// Throws SpecError naming the first derived dimension that is invalid.
  DerivedDims derive() const;
  bool operator==(const NetworkSpec&) const = default;

  /// 8×8 input, 3×3 kernels with two channels each; small enough for
  /// finite-difference checks.
  static NetworkSpec tiny();
};

/// Layer parameters, in a fixed order used for serialization and
/// gradient bookkeeping.
struct Parameters {
  Tensor conv1_w, conv1_b, conv2_w, conv2_b;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;

  static constexpr std::size_t kCount = 8;
  std::array<Tensor*, kCount> all();
  std::array<const Tensor*, kCount> all() const;
  static Parameters zeros_like(const NetworkSpec& spec);
  bool operator==(const Parameters&) const = default;
};

struct Network {
  NetworkSpec spec;
  Parameters params;
  std::uint64_t seed = 0;

  bool operator==(const Network&) const = default;
};

/// Glorot-uniform weights from `seed`, zero biases.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> activations;  // |conv2 after ReLU and pooling|, flattened [channel][y][x]
};

ForwardResult forward(const Network& net, const rp::UnitImage& image);

/// Absolute last-conv activations.
std::vector<double> extract_activation(const Network& net, const rp::UnitImage& image);

struct LossAndGradients {
  double loss = 0.0;  // mean softmax cross-entropy
  Parameters gradients;
  std::size_t correct = 0;  // argmax(logits) == label count
};

LossAndGradients loss_and_gradients(const Network& net, std::span<const rp::UnitImage> images,
                                    std::span<const int> labels);

struct Dataset {
  std::vector<rp::UnitImage> images;
  std::vector<int> labels;
};

struct TrainOptions {
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

struct EpochStats {
  double loss = 0.0;      // mean of per-batch losses, weighted by batch size
  double accuracy = 0.0;  // fraction of training samples classified correctly during the epoch
};

struct TrainResult {
  Network network;
  std::vector<EpochStats> trace;
};

/// Plain minibatch SGD. Each epoch reshuffles with a generator derived from
/// (seed, epoch). Throws TrainingError if the loss becomes non-finite.
TrainResult train(Network net, const Dataset& data, const TrainOptions& opts);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

namespace kernels {

/// Valid convolution. in: [cin, side, side], weights: [cout, cin, k, k],
/// out: [cout, oside, oside]. Output rows are computed in parallel.
void conv_forward(std::span<const double> in, std::size_t cin, std::size_t side, std::span<const double> weights,
                  std::span<const double> bias, std::size_t cout, std::size_t kernel, std::size_t stride,
                  std::span<double> out);

/// Accumulates weight and bias gradients; writes the input gradient when
/// `grad_in` is non-empty. Serial: training fans out over samples instead.
void conv_backward(std::span<const double> in, std::size_t cin, std::size_t side, std::span<const double> weights,
                   std::size_t cout, std::size_t kernel, std::size_t stride, std::span<const double> grad_out,
                   std::span<double> grad_w, std::span<double> grad_b, std::span<double> grad_in);

}  // namespace kernels

}  // namespace itsc::cnn
