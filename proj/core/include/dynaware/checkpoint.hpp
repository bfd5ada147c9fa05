#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynaware/autodiff.hpp"
#include "dynaware/trace_io.hpp"

namespace dynaware {

// Errors are reported as FormatError.
//
// Checkpoint byte layout (little-endian):
//   "DWCK"                     4 bytes
//   u32 version                kCheckpointVersion
//   u32 length + bytes         metadata (free text, the model config)
//   u32 tensor count
//   per tensor:
//     u32 length + bytes       name
//     u32 rank, u32 dims[rank]
//     f32 values               row-major, product(dims) entries
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor<float> value;
  bool operator==(const NamedTensor& o) const { return name == o.name && value.shape == o.value.shape && value.data == o.value.data; }
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dynaware
