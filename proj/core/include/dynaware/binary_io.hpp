#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace dynaware::binio {

// Fixed little-endian encoding regardless of host order.
template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw std::runtime_error("unexpected end of file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_le<std::uint8_t>(out, v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint8_t get_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
inline std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t max_len = 1u << 24) {
  const std::uint32_t n = get_u32(in);
  if (n > max_len) throw std::runtime_error("string length out of range");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw std::runtime_error("unexpected end of file");
  return s;
}

}  // namespace dynaware::binio
