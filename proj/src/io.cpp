#include "dpx/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dpx::io {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', 'F'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}
std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::size_t element_bytes(Precision p) {
  switch (p) {
    case Precision::kSingle:
    case Precision::kInt32:
      return 4;
    case Precision::kDouble:
      return 8;
  }
  throw DomainError("DPTF: unknown precision");
}

struct Parsed {
  Header header;
  std::size_t payload_offset;
};

Parsed parse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 7 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DomainError("DPTF: bad magic");
  }
  if (bytes[4] != kFormatVersion) {
    throw DomainError("DPTF: unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > 2) throw DomainError("DPTF: unknown precision byte " + std::to_string(bytes[5]));
  Parsed p;
  p.header.precision = static_cast<Precision>(bytes[5]);
  const std::size_t rank = bytes[6];
  if (bytes.size() < 7 + 8 * rank) throw DomainError("DPTF: truncated header");
  for (std::size_t i = 0; i < rank; ++i) p.header.shape.push_back(get_u64(bytes.data() + 7 + 8 * i));
  p.payload_offset = 7 + 8 * rank;
  const std::size_t need = shape_numel(p.header.shape) * element_bytes(p.header.precision);
  if (bytes.size() != p.payload_offset + need) throw DomainError("DPTF: payload size mismatch");
  return p;
}

template <class Dst>
Tensor<Dst> decode_as(const Parsed& p, const std::vector<std::uint8_t>& bytes) {
  const std::size_t n = shape_numel(p.header.shape);
  std::vector<Dst> data(n);
  const std::uint8_t* src = bytes.data() + p.payload_offset;
  for (std::size_t i = 0; i < n; ++i) {
    switch (p.header.precision) {
      case Precision::kSingle:
        data[i] = static_cast<Dst>(std::bit_cast<float>(get_u32(src + 4 * i)));
        break;
      case Precision::kDouble:
        data[i] = static_cast<Dst>(std::bit_cast<double>(get_u64(src + 8 * i)));
        break;
      case Precision::kInt32:
        data[i] = static_cast<Dst>(std::bit_cast<std::int32_t>(get_u32(src + 4 * i)));
        break;
    }
  }
  return Tensor<Dst>(p.header.shape, std::move(data));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <class T>
std::vector<std::uint8_t> encode(const Tensor<T>& t) {
  if (t.rank() > 255) throw DimensionError("DPTF: rank exceeds 255");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kFormatVersion);
  out.push_back(static_cast<std::uint8_t>(precision_of<T>()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) put_u64(out, e);
  for (auto v : t.data()) {
    if constexpr (sizeof(T) == 8) {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

Header decode_header(const std::vector<std::uint8_t>& bytes) { return parse(bytes).header; }

template <class T>
Tensor<T> decode(const std::vector<std::uint8_t>& bytes) {
  const Parsed p = parse(bytes);
  const bool want_int = precision_of<T>() == Precision::kInt32;
  const bool have_int = p.header.precision == Precision::kInt32;
  if (want_int != have_int) throw DomainError("DPTF: integer/floating payload mismatch");
  return decode_as<T>(p, bytes);
}

template <class T>
void write_file(const std::filesystem::path& path, const Tensor<T>& t) {
  const auto bytes = encode(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DomainError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <class T>
Tensor<T> read_file(const std::filesystem::path& path) {
  return decode<T>(slurp(path));
}

Header read_header(const std::filesystem::path& path) { return decode_header(slurp(path)); }

template std::vector<std::uint8_t> encode(const Tensor<float>&);
template std::vector<std::uint8_t> encode(const Tensor<double>&);
template std::vector<std::uint8_t> encode(const Tensor<std::int32_t>&);
template Tensor<float> decode(const std::vector<std::uint8_t>&);
template Tensor<double> decode(const std::vector<std::uint8_t>&);
template Tensor<std::int32_t> decode(const std::vector<std::uint8_t>&);
template void write_file(const std::filesystem::path&, const Tensor<float>&);
template void write_file(const std::filesystem::path&, const Tensor<double>&);
template void write_file(const std::filesystem::path&, const Tensor<std::int32_t>&);
template Tensor<float> read_file(const std::filesystem::path&);
template Tensor<double> read_file(const std::filesystem::path&);
template Tensor<std::int32_t> read_file(const std::filesystem::path&);

}  // namespace dpx::io
