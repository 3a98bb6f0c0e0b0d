#include "itsc/reference.hpp"

namespace itsc::reference {

void conv_forward(std::span<const double> in, std::size_t cin, std::size_t side, std::span<const double> weights,
                  std::span<const double> bias, std::size_t cout, std::size_t kernel, std::size_t stride,
                  std::span<double> out) {
  const std::size_t oside = (side - kernel) / stride + 1;
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t y = 0; y < oside; ++y)
      for (std::size_t x = 0; x < oside; ++x) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < kernel; ++ky)
            for (std::size_t kx = 0; kx < kernel; ++kx)
              acc += weights[((co * cin + ci) * kernel + ky) * kernel + kx] *
                     in[(ci * side + y * stride + ky) * side + x * stride + kx];
        out[(co * oside + y) * oside + x] = acc;
      }
}

}  // namespace itsc::reference
