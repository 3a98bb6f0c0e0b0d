#include <algorithm>
#include <cmath>

#include "itsc/error.hpp"
#include "itsc/reference.hpp"

namespace itsc::reference {

rp::RPImage modified_rp(const rp::Trajectory& traj, double clip_threshold) {
  if (!(clip_threshold > 0) || !std::isfinite(clip_threshold))
    throw ParameterError("clip threshold N must be finite and > 0");
  const std::size_t n = traj.size();
  rp::RPImage out;
  out.side = n;
  out.clip_threshold = clip_threshold;
  out.values.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = rp::detail::euclidean(traj.points.data() + i * traj.dim, traj.points.data() + j * traj.dim, traj.dim);
      out.values[i * n + j] = d >= clip_threshold ? clip_threshold : d;
    }
  return out;
}

rp::RPImage clipped_rp_resized(const rp::Trajectory& traj, double clip_threshold, std::size_t target) {
  return rp::resize_image(reference::modified_rp(traj, clip_threshold), target);
}

}  // namespace itsc::reference
