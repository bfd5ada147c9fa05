#include "dynaware/checkpoint.hpp"

#include <fstream>

#include "dynaware/binary_io.hpp"

namespace dynaware {

namespace {
constexpr char kMagic[4] = {'D', 'W', 'C', 'K'};
constexpr std::uint32_t kMaxRank = 8;
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, 4);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_string(out, ckpt.metadata);
  binio::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.value.data.size() != ad::numel(t.value.shape)) throw FormatError("checkpoint: tensor '" + t.name + "' is inconsistent");
    binio::put_string(out, t.name);
    binio::put_u32(out, static_cast<std::uint32_t>(t.value.shape.size()));
    for (std::size_t d : t.value.shape) binio::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.value.data) binio::put_f32(out, v);
  }
  if (!out) throw FormatError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  try {
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
      throw FormatError("not a checkpoint (bad magic)");
    }
    const std::uint32_t version = binio::get_u32(in);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.metadata = binio::get_string(in);
    const std::uint32_t count = binio::get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      t.name = binio::get_string(in, 4096);
      const std::uint32_t rank = binio::get_u32(in);
      if (rank > kMaxRank) throw FormatError("checkpoint: tensor '" + t.name + "' has rank " + std::to_string(rank));
      ad::Shape shape(rank);
      for (auto& d : shape) d = binio::get_u32(in);
      t.value = ad::Tensor<float>(shape);
      for (float& v : t.value.data) v = binio::get_f32(in);
      ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("truncated or corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace dynaware
