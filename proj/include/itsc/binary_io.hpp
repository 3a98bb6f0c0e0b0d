#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "itsc/error.hpp"

/// Little-endian primitives shared by the dictionary, model and baseline
/// file formats.
namespace itsc::binio {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void write(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write(out, v); }
inline void write_i32(std::ostream& out, std::int32_t v) { write(out, v); }
inline void write_f64(std::ostream& out, double v) { write(out, std::bit_cast<std::uint64_t>(v)); }

inline void write_f64s(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_f64(out, v);
}

template <typename T>
T read(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated file while reading " + what);
  return to_little(v);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) { return read<std::uint32_t>(in, what); }
inline std::uint64_t read_u64(std::istream& in, const std::string& what) { return read<std::uint64_t>(in, what); }
inline std::int32_t read_i32(std::istream& in, const std::string& what) { return read<std::int32_t>(in, what); }
inline double read_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read<std::uint64_t>(in, what));
}

inline void read_f64s(std::istream& in, std::span<double> values, const std::string& what) {
  for (double& v : values) v = read_f64(in, what);
}

}  // namespace itsc::binio
