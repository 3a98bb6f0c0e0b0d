#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "itsc/imaging.hpp"

namespace itsc::rp {

/// round(65535 × clamp(pixel, 0, 1)).
std::uint16_t quantize(double pixel);

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const UnitImage& img, const std::filesystem::path& path);

/// Reads a P5 file written by write_pgm16; pixel = sample / 65535.
UnitImage read_pgm16(const std::filesystem::path& path);

/// 16-bit greyscale PNG with the same quantisation as the PGM export.
void write_png16(const UnitImage& img, const std::filesystem::path& path);

}  // namespace itsc::rp
