#include "itsc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "itsc/error.hpp"

namespace itsc::rp {

std::uint16_t quantize(double pixel) {
  return static_cast<std::uint16_t>(std::lround(65535.0 * std::clamp(pixel, 0.0, 1.0)));
}

void write_pgm16(const UnitImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.side << ' ' << img.side << "\n65535\n";
  std::vector<unsigned char> buf(img.values.size() * 2);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const std::uint16_t q = quantize(img.values[i]);
    buf[2 * i] = static_cast<unsigned char>(q >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

UnitImage read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 65535 || w != h || w == 0)
    throw FormatError(path.string() + ": expected a square 16-bit P5 image");
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> buf(w * h * 2);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw FormatError(path.string() + ": truncated raster");
  UnitImage img;
  img.side = w;
  img.values.resize(w * h);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    img.values[i] = static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1]) / 65535.0;
  return img;
}

void write_png16(const UnitImage& img, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<unsigned char> row(img.side * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  const auto side = static_cast<png_uint_32>(img.side);
  png_set_IHDR(png, info, side, side, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.side; ++y) {
    for (std::size_t x = 0; x < img.side; ++x) {
      const std::uint16_t q = quantize(img.at(y, x));
      row[2 * x] = static_cast<unsigned char>(q >> 8);
      row[2 * x + 1] = static_cast<unsigned char>(q & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace itsc::rp
