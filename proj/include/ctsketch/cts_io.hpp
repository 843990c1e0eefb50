#pragma once

// CTS1 tensor files: "CTS1", u32 axis count, u64 axis sizes, f64 data.
// Everything little-endian, data row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ctsketch/errors.hpp"
#include "ctsketch/tensor.hpp"

namespace ctsketch {

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_cts(const DenseTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * t.rank() + 8 * t.size());
  for (char c : {'C', 'T', 'S', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  detail::put_le(out, t.rank(), 4);
  for (std::size_t d : t.dims()) detail::put_le(out, d, 8);
  for (double v : t.data()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

inline DenseTensor decode_cts(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "CTS1", 4) != 0) {
    throw IoError("CTS1: bad magic");
  }
  const std::uint64_t rank = detail::get_le(bytes.data() + 4, 4);
  if (rank == 0) throw IoError("CTS1: zero axis count");
  if (bytes.size() < 8 + 8 * rank) throw IoError("CTS1: truncated header");
  Shape dims(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = detail::get_le(bytes.data() + 8 + 8 * i, 8);
    if (dims[i] == 0) throw IoError("CTS1: zero-sized axis");
  }
  const std::size_t n = checked_product(dims);
  const std::size_t header = 8 + 8 * rank;
  if (n > (bytes.size() - header) / 8 || bytes.size() - header != 8 * n) {
    throw IoError("CTS1: payload size does not match shape " + shape_string(dims));
  }
  std::vector<double> data(n);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(detail::get_le(p + 8 * i, 8));
  return DenseTensor(std::move(dims), std::move(data));
}

inline void write_cts(const std::filesystem::path& path, const DenseTensor& t) {
  const auto bytes = encode_cts(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline DenseTensor read_cts(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_cts(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace ctsketch
