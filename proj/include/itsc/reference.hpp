#pragma once

// Serial reference implementations of the parallel kernels. They favour
// the most direct formulation and are kept for cross-checking and for the
// benchmark target; the pipeline never calls them.

#include <span>

#include "itsc/imaging.hpp"

namespace itsc::reference {

/// Full clipped distance matrix, one pair at a time.
rp::RPImage modified_rp(const rp::Trajectory& traj, double clip_threshold);

/// resize_image(modified_rp(traj, N), target): materialises the full matrix.
rp::RPImage clipped_rp_resized(const rp::Trajectory& traj, double clip_threshold, std::size_t target);

/// Direct six-loop valid convolution with the same layout as
/// cnn::kernels::conv_forward.
void conv_forward(std::span<const double> in, std::size_t cin, std::size_t side, std::span<const double> weights,
                  std::span<const double> bias, std::size_t cout, std::size_t kernel, std::size_t stride,
                  std::span<double> out);

}  // namespace itsc::reference
