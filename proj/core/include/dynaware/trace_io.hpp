#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "dynaware/physics.hpp"

namespace dynaware {

// Rollout trace file, all integers and floats little-endian:
//
//   offset  size  field
//   0       4     magic "DWTR"
//   4       4     u32 format version (kTraceVersion)
//   8       4     u32 object count O
//   12      4     u32 frame count F
//   16      8     f64 dt (seconds per physics step)
//   24      4     u32 frame stride (physics steps per recorded frame)
//   28      8*O*F f32 positions, frame-major: frame 0 object 0 (x, y), frame 0 object 1, ...
//   28+8OF  1     u8 solved flag (0 or 1)
inline constexpr std::uint32_t kTraceVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_trace(std::ostream& out, const Rollout& rollout);
Rollout read_trace(std::istream& in);

void save_trace(const std::string& path, const Rollout& rollout);
Rollout load_trace(const std::string& path);

}  // namespace dynaware
