// SPDX-License-Identifier: Apache-2.0
// Little-endian primitives for the binary file formats, independent of host
// byte order.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "cds/common/error.hpp"

namespace cds::io {

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void put_u16(std::ostream& os, std::uint16_t v) {
  put_u8(os, static_cast<std::uint8_t>(v & 0xff));
  put_u8(os, static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) put_u8(os, static_cast<std::uint8_t>((v >> s) & 0xff));
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

// Readers throw FormatError naming `what` when the stream ends early.
inline std::uint8_t get_u8(std::istream& is, const std::string& what) {
  const int c = is.get();
  if (c == std::char_traits<char>::eof()) throw FormatError(what + ": truncated");
  return static_cast<std::uint8_t>(c);
}

inline std::uint16_t get_u16(std::istream& is, const std::string& what) {
  const std::uint16_t lo = get_u8(is, what);
  const std::uint16_t hi = get_u8(is, what);
  return static_cast<std::uint16_t>(lo | (hi << 8));
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(get_u8(is, what)) << s;
  return v;
}

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}

}  // namespace cds::io
