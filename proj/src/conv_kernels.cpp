// im2col + GEMM convolution kernels. The direct-loop serial version used
// for cross-checking is in reference/conv_reference.cpp.
#include <Eigen/Core>
#include <vector>

#include "itsc/cnn.hpp"

namespace itsc::cnn::kernels {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

/// Patch matrix for one output row: [(c·k + ky)·k + kx, x].
void im2col_row(const double* in, std::size_t cin, std::size_t side, std::size_t kernel, std::size_t stride,
                std::size_t y, std::size_t oside, RowMatrix& col) {
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      const double* src = in + (c * side + y * stride + ky) * side;
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        double* dst = col.data() + ((c * kernel + ky) * kernel + kx) * oside;
        for (std::size_t x = 0; x < oside; ++x) dst[x] = src[x * stride + kx];
      }
    }
}

}  // namespace

void conv_forward(std::span<const double> in, std::size_t cin, std::size_t side, std::span<const double> weights,
                  std::span<const double> bias, std::size_t cout, std::size_t kernel, std::size_t stride,
                  std::span<double> out) {
  const std::size_t oside = (side - kernel) / stride + 1;
  const std::size_t depth = cin * kernel * kernel;
  const ConstRowMap w(weights.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(depth));
  const auto rows = static_cast<std::ptrdiff_t>(oside);

#pragma omp parallel
  {
    RowMatrix col(depth, oside);
#pragma omp for schedule(static)
    for (std::ptrdiff_t sy = 0; sy < rows; ++sy) {
      const auto y = static_cast<std::size_t>(sy);
      im2col_row(in.data(), cin, side, kernel, stride, y, oside, col);
      StridedMap dst(out.data() + y * oside, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(oside),
                     Eigen::OuterStride<>(static_cast<Eigen::Index>(oside * oside)));
      dst.noalias() = w * col;
      for (std::size_t c = 0; c < cout; ++c) dst.row(static_cast<Eigen::Index>(c)).array() += bias[c];
    }
  }
}

void conv_backward(std::span<const double> in, std::size_t cin, std::size_t side, std::span<const double> weights,
                   std::size_t cout, std::size_t kernel, std::size_t stride, std::span<const double> grad_out,
                   std::span<double> grad_w, std::span<double> grad_b, std::span<double> grad_in) {
  const std::size_t oside = (side - kernel) / stride + 1;
  const std::size_t depth = cin * kernel * kernel;
  const auto eo = static_cast<Eigen::Index>(oside);
  const auto ec = static_cast<Eigen::Index>(cout);
  const auto ed = static_cast<Eigen::Index>(depth);
  const ConstRowMap w(weights.data(), ec, ed);
  Eigen::Map<RowMatrix> gw(grad_w.data(), ec, ed);
  const bool want_input = !grad_in.empty();
  RowMatrix col(depth, oside);
  RowMatrix dcol;
  if (want_input) dcol.resize(ed, eo);

  for (std::size_t y = 0; y < oside; ++y) {
    im2col_row(in.data(), cin, side, kernel, stride, y, oside, col);
    ConstStridedMap g(grad_out.data() + y * oside, ec, eo, Eigen::OuterStride<>(static_cast<Eigen::Index>(oside * oside)));
    gw.noalias() += g * col.transpose();
    for (std::size_t c = 0; c < cout; ++c) grad_b[c] += g.row(static_cast<Eigen::Index>(c)).sum();
    if (want_input) {
      dcol.noalias() = w.transpose() * g;
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          double* dst = grad_in.data() + (c * side + y * stride + ky) * side;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const double* src = dcol.data() + ((c * kernel + ky) * kernel + kx) * oside;
            for (std::size_t x = 0; x < oside; ++x) dst[x * stride + kx] += src[x];
          }
        }
    }
  }
}

}  // namespace itsc::cnn::kernels
