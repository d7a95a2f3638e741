#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpx/tensor.hpp"

namespace dpx::io {

// DPTF layout (all integers little-endian):
//   bytes 0..3  magic "DPTF"
//   byte  4     format version (1)
//   byte  5     precision: 0 = float32, 1 = float64, 2 = int32
//   byte  6     rank r
//   then r x uint64 extents, then the row-major IEEE-754 / two's-complement payload.

inline constexpr std::uint8_t kFormatVersion = 1;

enum class Precision : std::uint8_t { kSingle = 0, kDouble = 1, kInt32 = 2 };

template <class T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() {
  return Precision::kSingle;
}
template <>
constexpr Precision precision_of<double>() {
  return Precision::kDouble;
}
template <>
constexpr Precision precision_of<std::int32_t>() {
  return Precision::kInt32;
}

struct Header {
  Precision precision;
  Shape shape;
};

template <class T>
std::vector<std::uint8_t> encode(const Tensor<T>& t);

/// Decodes a payload. float32 and float64 payloads convert to the requested
/// floating type; int32 payloads only decode as int32.
template <class T>
Tensor<T> decode(const std::vector<std::uint8_t>& bytes);

Header decode_header(const std::vector<std::uint8_t>& bytes);

template <class T>
void write_file(const std::filesystem::path& path, const Tensor<T>& t);
template <class T>
Tensor<T> read_file(const std::filesystem::path& path);

Header read_header(const std::filesystem::path& path);

}  // namespace dpx::io
