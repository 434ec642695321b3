#pragma once

// TSR v1: "TSR1" | u8 dtype | u8 ndim | ndim x u32 LE extents | LE payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sgrs/error.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs::tsr {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, i64 = 3 };

template <class T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::f32;
};
template <>
struct dtype_of<double> {
  static constexpr DType value = DType::f64;
};
template <>
struct dtype_of<std::uint8_t> {
  static constexpr DType value = DType::u8;
};
template <>
struct dtype_of<std::int64_t> {
  static constexpr DType value = DType::i64;
};

namespace detail {

template <class U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
               std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>;
  auto bits = std::bit_cast<Bits>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
  using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
               std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<Bits>(Bits{p[i]} << (8 * i));
  return std::bit_cast<U>(bits);
}

}  // namespace detail

template <class T>
std::vector<std::uint8_t> encode(const Tensor<T>& t) {
  std::vector<std::uint8_t> out{'T', 'S', 'R', '1'};
  out.push_back(static_cast<std::uint8_t>(dtype_of<T>::value));
  if (t.rank() > 255) throw ShapeError("TSR supports at most 255 dimensions");
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) {
    if (d > 0xffffffffu) throw ShapeError("TSR extent exceeds u32");
    detail::put_le(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.size() * sizeof(T));
  for (T v : t.data()) detail::put_le(out, v);
  return out;
}

inline DType peek_dtype(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), "TSR1", 4) != 0) throw IoError("not a TSR1 buffer");
  if (bytes[4] > 3) throw IoError("unknown TSR dtype code " + std::to_string(bytes[4]));
  return static_cast<DType>(bytes[4]);
}

template <class T>
Tensor<T> decode(const std::vector<std::uint8_t>& bytes) {
  if (peek_dtype(bytes) != dtype_of<T>::value) throw IoError("TSR dtype does not match requested type");
  const std::size_t ndim = bytes[5];
  std::size_t pos = 6;
  if (bytes.size() < pos + 4 * ndim) throw IoError("truncated TSR header");
  Dims dims(ndim);
  for (auto& d : dims) {
    d = detail::get_le<std::uint32_t>(bytes.data() + pos);
    pos += 4;
  }
  const std::size_t n = product(dims);
  if (bytes.size() != pos + n * sizeof(T)) throw IoError("TSR payload length mismatch");
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = detail::get_le<T>(bytes.data() + pos + i * sizeof(T));
  try {
    return Tensor<T>(std::move(dims), std::move(data));
  } catch (const ShapeError& e) {
    throw IoError(std::string("invalid TSR extents: ") + e.what());
  }
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

template <class T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
  write_bytes(path, encode(t));
}

template <class T>
Tensor<T> load(const std::filesystem::path& path) {
  return decode<T>(read_bytes(path));
}

}  // namespace sgrs::tsr
