#include "itsc/cnn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "itsc/binary_io.hpp"
#include "itsc/error.hpp"
#include "itsc/rng.hpp"

namespace itsc::cnn {

Tensor::Tensor(std::vector<std::size_t> extents) : shape(std::move(extents)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  values.assign(n, 0.0);
}

namespace {

std::size_t conv_side(std::size_t in, const ConvLayerSpec& l, const char* name) {
  if (l.kernel < 1 || l.channels < 1 || l.stride < 1 || l.pool < 1)
    throw SpecError(std::string(name) + ": kernel, channels, stride and pool must all be >= 1");
  if (l.kernel > in)
    throw SpecError(std::string(name) + "_side: kernel " + std::to_string(l.kernel) + " exceeds incoming side " +
                    std::to_string(in));
  return (in - l.kernel) / l.stride + 1;
}

std::size_t pool_side(std::size_t in, const ConvLayerSpec& l, const char* name) {
  const std::size_t out = in / l.pool;
  if (out < 1)
    throw SpecError(std::string(name) + ": pooling " + std::to_string(l.pool) + " leaves no output from side " +
                    std::to_string(in));
  return out;
}

}  // namespace

DerivedDims NetworkSpec::derive() const {
  if (input_side < 1) throw SpecError("input_side must be >= 1");
  if (fc1_width < 1) throw SpecError("fc1_width must be >= 1");
  if (class_count < 2) throw SpecError("class_count must be >= 2");
  DerivedDims d{};
  d.conv1_side = conv_side(input_side, conv1, "conv1");
  d.pool1_side = pool_side(d.conv1_side, conv1, "pool1_side");
  d.conv2_side = conv_side(d.pool1_side, conv2, "conv2");
  d.pool2_side = pool_side(d.conv2_side, conv2, "pool2_side");
  d.flat = conv2.channels * d.pool2_side * d.pool2_side;
  return d;
}

NetworkSpec NetworkSpec::tiny() {
  NetworkSpec s;
  s.input_side = 8;
  s.conv1 = {3, 2, 1, 1};
  s.conv2 = {3, 2, 1, 2};
  s.fc1_width = 4;
  s.class_count = 2;
  return s;
}

std::array<Tensor*, Parameters::kCount> Parameters::all() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

std::array<const Tensor*, Parameters::kCount> Parameters::all() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

Parameters Parameters::zeros_like(const NetworkSpec& spec) {
  const DerivedDims d = spec.derive();
  const auto& c1 = spec.conv1;
  const auto& c2 = spec.conv2;
  Parameters p;
  p.conv1_w = Tensor({c1.channels, 1, c1.kernel, c1.kernel});
  p.conv1_b = Tensor({c1.channels});
  p.conv2_w = Tensor({c2.channels, c1.channels, c2.kernel, c2.kernel});
  p.conv2_b = Tensor({c2.channels});
  p.fc1_w = Tensor({spec.fc1_width, d.flat});
  p.fc1_b = Tensor({spec.fc1_width});
  p.fc2_w = Tensor({spec.class_count, spec.fc1_width});
  p.fc2_b = Tensor({spec.class_count});
  return p;
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net{spec, Parameters::zeros_like(spec), seed};
  Rng rng(derive_seed(seed, "cnn/init"));
  auto glorot = [&rng](Tensor& w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.values) v = rng.uniform(-limit, limit);
  };
  const auto& c1 = spec.conv1;
  const auto& c2 = spec.conv2;
  const double k1 = static_cast<double>(c1.kernel * c1.kernel);
  const double k2 = static_cast<double>(c2.kernel * c2.kernel);
  glorot(net.params.conv1_w, k1, static_cast<double>(c1.channels) * k1);
  glorot(net.params.conv2_w, static_cast<double>(c1.channels) * k2, static_cast<double>(c2.channels) * k2);
  glorot(net.params.fc1_w, static_cast<double>(net.params.fc1_w.shape[1]), static_cast<double>(spec.fc1_width));
  glorot(net.params.fc2_w, static_cast<double>(spec.fc1_width), static_cast<double>(spec.class_count));
  return net;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

struct ForwardCache {
  std::vector<double> conv1;  // post-ReLU
  std::vector<double> pool1;
  std::vector<std::size_t> arg1;
  std::vector<double> conv2;  // post-ReLU
  std::vector<double> pool2;
  std::vector<std::size_t> arg2;
  std::vector<double> hidden;  // post-ReLU
  std::vector<double> logits;
};

void relu(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void max_pool(const std::vector<double>& in, std::size_t channels, std::size_t side, std::size_t pool,
              std::vector<double>& out, std::vector<std::size_t>& arg) {
  const std::size_t oside = side / pool;
  out.assign(channels * oside * oside, 0.0);
  arg.assign(out.size(), 0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < oside; ++y)
      for (std::size_t x = 0; x < oside; ++x) {
        std::size_t best = (c * side + y * pool) * side + x * pool;
        for (std::size_t dy = 0; dy < pool; ++dy)
          for (std::size_t dx = 0; dx < pool; ++dx) {
            const std::size_t idx = (c * side + y * pool + dy) * side + x * pool + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (c * oside + y) * oside + x;
        out[o] = in[best];
        arg[o] = best;
      }
}

void check_input(const NetworkSpec& spec, const rp::UnitImage& image) {
  if (image.side != spec.input_side || image.values.size() != spec.input_side * spec.input_side)
    throw ShapeError("network expects " + std::to_string(spec.input_side) + "x" + std::to_string(spec.input_side) +
                     " input, got side " + std::to_string(image.side));
}

void run_forward(const Network& net, const rp::UnitImage& image, ForwardCache& fc) {
  const auto& spec = net.spec;
  check_input(spec, image);
  const DerivedDims d = spec.derive();
  const auto& p = net.params;

  fc.conv1.assign(spec.conv1.channels * d.conv1_side * d.conv1_side, 0.0);
  kernels::conv_forward(image.values, 1, spec.input_side, p.conv1_w.values, p.conv1_b.values, spec.conv1.channels,
                        spec.conv1.kernel, spec.conv1.stride, fc.conv1);
  relu(fc.conv1);
  max_pool(fc.conv1, spec.conv1.channels, d.conv1_side, spec.conv1.pool, fc.pool1, fc.arg1);

  fc.conv2.assign(spec.conv2.channels * d.conv2_side * d.conv2_side, 0.0);
  kernels::conv_forward(fc.pool1, spec.conv1.channels, d.pool1_side, p.conv2_w.values, p.conv2_b.values,
                        spec.conv2.channels, spec.conv2.kernel, spec.conv2.stride, fc.conv2);
  relu(fc.conv2);
  max_pool(fc.conv2, spec.conv2.channels, d.conv2_side, spec.conv2.pool, fc.pool2, fc.arg2);

  const auto flat = static_cast<Eigen::Index>(d.flat);
  const auto hidden = static_cast<Eigen::Index>(spec.fc1_width);
  const auto classes = static_cast<Eigen::Index>(spec.class_count);
  fc.hidden.assign(spec.fc1_width, 0.0);
  VecMap h(fc.hidden.data(), hidden);
  h.noalias() = ConstRowMap(p.fc1_w.values.data(), hidden, flat) * ConstVecMap(fc.pool2.data(), flat);
  h += ConstVecMap(p.fc1_b.values.data(), hidden);
  relu(fc.hidden);
  fc.logits.assign(spec.class_count, 0.0);
  VecMap z(fc.logits.data(), classes);
  z.noalias() = ConstRowMap(p.fc2_w.values.data(), classes, hidden) * ConstVecMap(fc.hidden.data(), hidden);
  z += ConstVecMap(p.fc2_b.values.data(), classes);
}

/// Softmax cross-entropy for one sample; writes dL/dlogits (unscaled).
double cross_entropy(const std::vector<double>& logits, int label, std::vector<double>& grad) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_sum = mx + std::log(sum);
  grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) grad[k] = std::exp(logits[k] - log_sum);
  grad[static_cast<std::size_t>(label)] -= 1.0;
  return log_sum - logits[static_cast<std::size_t>(label)];
}

/// Backpropagates dL/dlogits of one sample, accumulating into `g`.
void run_backward(const Network& net, const rp::UnitImage& image, const ForwardCache& fc,
                  const std::vector<double>& dlogits, Parameters& g) {
  const auto& spec = net.spec;
  const DerivedDims d = spec.derive();
  const auto& p = net.params;
  const auto flat = static_cast<Eigen::Index>(d.flat);
  const auto hidden = static_cast<Eigen::Index>(spec.fc1_width);
  const auto classes = static_cast<Eigen::Index>(spec.class_count);

  const ConstVecMap dz(dlogits.data(), classes);
  const ConstVecMap h(fc.hidden.data(), hidden);
  RowMap(g.fc2_w.values.data(), classes, hidden).noalias() += dz * h.transpose();
  VecMap(g.fc2_b.values.data(), classes) += dz;

  Eigen::VectorXd dh = ConstRowMap(p.fc2_w.values.data(), classes, hidden).transpose() * dz;
  for (Eigen::Index k = 0; k < hidden; ++k)
    if (!(fc.hidden[static_cast<std::size_t>(k)] > 0.0)) dh[k] = 0.0;

  const ConstVecMap act(fc.pool2.data(), flat);
  RowMap(g.fc1_w.values.data(), hidden, flat).noalias() += dh * act.transpose();
  VecMap(g.fc1_b.values.data(), hidden) += dh;
  const Eigen::VectorXd dact = ConstRowMap(p.fc1_w.values.data(), hidden, flat).transpose() * dh;

  std::vector<double> dconv2(fc.conv2.size(), 0.0);
  for (std::size_t o = 0; o < fc.arg2.size(); ++o) dconv2[fc.arg2[o]] += dact[static_cast<Eigen::Index>(o)];
  for (std::size_t k = 0; k < dconv2.size(); ++k)
    if (!(fc.conv2[k] > 0.0)) dconv2[k] = 0.0;

  std::vector<double> dpool1(fc.pool1.size(), 0.0);
  kernels::conv_backward(fc.pool1, spec.conv1.channels, d.pool1_side, p.conv2_w.values, spec.conv2.channels,
                         spec.conv2.kernel, spec.conv2.stride, dconv2, g.conv2_w.values, g.conv2_b.values, dpool1);

  std::vector<double> dconv1(fc.conv1.size(), 0.0);
  for (std::size_t o = 0; o < fc.arg1.size(); ++o) dconv1[fc.arg1[o]] += dpool1[o];
  for (std::size_t k = 0; k < dconv1.size(); ++k)
    if (!(fc.conv1[k] > 0.0)) dconv1[k] = 0.0;

  kernels::conv_backward(image.values, 1, spec.input_side, p.conv1_w.values, spec.conv1.channels, spec.conv1.kernel,
                         spec.conv1.stride, dconv1, g.conv1_w.values, g.conv1_b.values, {});
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void add_into(Parameters& dst, const Parameters& src, double scale) {
  auto d = dst.all();
  auto s = src.all();
  for (std::size_t t = 0; t < Parameters::kCount; ++t)
    for (std::size_t k = 0; k < d[t]->values.size(); ++k) d[t]->values[k] += scale * s[t]->values[k];
}

/// Mean loss and gradient over the samples selected by `order`.
LossAndGradients batch_gradients(const Network& net, std::span<const rp::UnitImage> images,
                                 std::span<const int> labels, std::span<const std::size_t> order) {
  if (order.empty()) throw InputError("loss_and_gradients: empty batch");
  const std::size_t n = order.size();
  for (std::size_t idx : order) {
    const int y = labels[idx];
    if (y < 0 || static_cast<std::size_t>(y) >= net.spec.class_count)
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(net.spec.class_count) + ")");
    check_input(net.spec, images[idx]);
  }

  std::vector<Parameters> per_sample(n);
  std::vector<double> losses(n, 0.0);
  std::vector<int> hits(n, 0);
  const auto count = static_cast<std::ptrdiff_t>(n);
  // Per-sample gradients are independent; the reduction below runs in
  // sample order so the result does not depend on the thread count.
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t s = 0; s < count; ++s) {
    const std::size_t idx = order[static_cast<std::size_t>(s)];
    ForwardCache fc;
    run_forward(net, images[idx], fc);
    std::vector<double> dz;
    losses[static_cast<std::size_t>(s)] = cross_entropy(fc.logits, labels[idx], dz);
    hits[static_cast<std::size_t>(s)] = argmax(fc.logits) == static_cast<std::size_t>(labels[idx]) ? 1 : 0;
    per_sample[static_cast<std::size_t>(s)] = Parameters::zeros_like(net.spec);
    run_backward(net, images[idx], fc, dz, per_sample[static_cast<std::size_t>(s)]);
  }

  LossAndGradients out;
  out.gradients = Parameters::zeros_like(net.spec);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    out.loss += losses[s];
    out.correct += static_cast<std::size_t>(hits[s]);
    add_into(out.gradients, per_sample[s], inv);
  }
  out.loss *= inv;
  return out;
}

}  // namespace

ForwardResult forward(const Network& net, const rp::UnitImage& image) {
  ForwardCache fc;
  run_forward(net, image, fc);
  for (double v : fc.logits)
    if (!std::isfinite(v)) throw TrainingError("forward produced non-finite logits");
  ForwardResult r;
  r.logits = std::move(fc.logits);
  r.activations = std::move(fc.pool2);
  for (double& v : r.activations) v = std::abs(v);
  return r;
}

std::vector<double> extract_activation(const Network& net, const rp::UnitImage& image) {
  return forward(net, image).activations;
}

LossAndGradients loss_and_gradients(const Network& net, std::span<const rp::UnitImage> images,
                                    std::span<const int> labels) {
  if (images.size() != labels.size()) throw InputError("loss_and_gradients: images and labels differ in count");
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return batch_gradients(net, images, labels, order);
}

TrainResult train(Network net, const Dataset& data, const TrainOptions& opts) {
  if (data.images.empty()) throw InputError("train: empty dataset");
  if (data.images.size() != data.labels.size()) throw InputError("train: images and labels differ in count");
  if (!(opts.learning_rate >= 0.0) || !std::isfinite(opts.learning_rate))
    throw ParameterError("train: learning rate must be finite and >= 0");
  if (opts.batch_size < 1) throw ParameterError("train: batch_size must be >= 1");

  TrainResult result;
  const std::size_t n = data.images.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(opts.seed, "cnn/epoch/" + std::to_string(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t len = std::min(opts.batch_size, n - start);
      const auto batch = std::span<const std::size_t>(order).subspan(start, len);
      LossAndGradients lg = batch_gradients(net, data.images, data.labels, batch);
      if (!std::isfinite(lg.loss))
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += lg.loss * static_cast<double>(len);
      correct += lg.correct;
      add_into(net.params, lg.gradients, -opts.learning_rate);
    }
    result.trace.push_back({loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  result.network = std::move(net);
  return result;
}

namespace {

constexpr std::uint32_t kModelMagic = 0x4E4E4349;  // "ICNN"
constexpr std::uint32_t kModelVersion = 1;

void write_layer(std::ostream& out, const ConvLayerSpec& l) {
  binio::write_u32(out, static_cast<std::uint32_t>(l.kernel));
  binio::write_u32(out, static_cast<std::uint32_t>(l.channels));
  binio::write_u32(out, static_cast<std::uint32_t>(l.stride));
  binio::write_u32(out, static_cast<std::uint32_t>(l.pool));
}

ConvLayerSpec read_layer(std::istream& in) {
  ConvLayerSpec l;
  l.kernel = binio::read_u32(in, "conv kernel");
  l.channels = binio::read_u32(in, "conv channels");
  l.stride = binio::read_u32(in, "conv stride");
  l.pool = binio::read_u32(in, "conv pool");
  return l;
}

}  // namespace

void save_network(const Network& net, const std::filesystem::path& path) {
  net.spec.derive();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_u32(out, kModelMagic);
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(net.spec.input_side));
  write_layer(out, net.spec.conv1);
  write_layer(out, net.spec.conv2);
  binio::write_u32(out, static_cast<std::uint32_t>(net.spec.fc1_width));
  binio::write_u32(out, static_cast<std::uint32_t>(net.spec.class_count));
  binio::write_u64(out, net.seed);
  for (const Tensor* t : net.params.all()) {
    binio::write_u32(out, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t e : t->shape) binio::write_u32(out, static_cast<std::uint32_t>(e));
    binio::write_f64s(out, t->values);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (binio::read_u32(in, "magic") != kModelMagic) throw FormatError(path.string() + ": not a network model file");
  const std::uint32_t version = binio::read_u32(in, "version");
  if (version != kModelVersion) throw FormatError(path.string() + ": unsupported model version " + std::to_string(version));
  Network net;
  net.spec.input_side = binio::read_u32(in, "input_side");
  net.spec.conv1 = read_layer(in);
  net.spec.conv2 = read_layer(in);
  net.spec.fc1_width = binio::read_u32(in, "fc1_width");
  net.spec.class_count = binio::read_u32(in, "class_count");
  net.seed = binio::read_u64(in, "seed");
  net.params = Parameters::zeros_like(net.spec);  // validates the spec
  for (Tensor* t : net.params.all()) {
    const std::uint32_t rank = binio::read_u32(in, "tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = binio::read_u32(in, "tensor extent");
    if (shape != t->shape) throw FormatError(path.string() + ": parameter tensor shape does not match the spec");
    binio::read_f64s(in, t->values, "tensor values");
    for (double v : t->values)
      if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite parameter");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return net;
}

}  // namespace itsc::cnn
