#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "augseg/tensor.hpp"

namespace augseg::io {

// DAUG v1 tensor file:
//   "DAUG" magic, u32 version (=1), u8 dtype code, u8 rank, rank x u64 extents,
//   row-major payload. Every multi-byte field is little-endian.
inline constexpr std::uint32_t kDaugVersion = 1;

void write_daug(std::ostream& os, const Tensor& t);
Tensor read_daug(std::istream& is);
void save_daug(const std::filesystem::path& path, const Tensor& t);
Tensor load_daug(const std::filesystem::path& path);

/// 8-bit grayscale raster.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// 8-bit RGB raster, interleaved.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(std::ostream& os, const GrayImage& img);
GrayImage read_pgm(std::istream& is);
void save_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage load_pgm(const std::filesystem::path& path);

void write_ppm(std::ostream& os, const RgbImage& img);
RgbImage read_ppm(std::istream& is);
void save_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage load_ppm(const std::filesystem::path& path);

/// [1,H,W] or [H,W] tensor with values in [0,1] to 8-bit levels (round to nearest).
GrayImage to_gray(const Tensor& image);
/// 8-bit levels back to a [1,H,W] float32 tensor in [0,1].
Tensor from_gray(const GrayImage& img);

}  // namespace augseg::io
