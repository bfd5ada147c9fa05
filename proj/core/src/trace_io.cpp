#include "dynaware/trace_io.hpp"

#include <fstream>

#include "dynaware/binary_io.hpp"

namespace dynaware {

namespace {
constexpr char kMagic[4] = {'D', 'W', 'T', 'R'};
}

void write_trace(std::ostream& out, const Rollout& r) {
  out.write(kMagic, 4);
  binio::put_u32(out, kTraceVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(r.object_count()));
  binio::put_u32(out, static_cast<std::uint32_t>(r.length()));
  binio::put_f64(out, r.dt());
  binio::put_u32(out, static_cast<std::uint32_t>(r.stride()));
  for (float v : r.positions()) binio::put_f32(out, v);
  binio::put_u8(out, r.solved() ? 1 : 0);
  if (!out) throw FormatError("trace write failed");
}

Rollout read_trace(std::istream& in) {
  try {
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
      throw FormatError("not a rollout trace (bad magic)");
    }
    const std::uint32_t version = binio::get_u32(in);
    if (version != kTraceVersion) {
      throw FormatError("unsupported trace version " + std::to_string(version));
    }
    const std::uint32_t objects = binio::get_u32(in);
    const std::uint32_t frames = binio::get_u32(in);
    const double dt = binio::get_f64(in);
    const std::uint32_t stride = binio::get_u32(in);
    if (objects == 0 || frames == 0) throw FormatError("trace has no objects or frames");
    std::vector<float> pos(static_cast<std::size_t>(objects) * frames * 2);
    for (float& v : pos) v = binio::get_f32(in);
    const std::uint8_t solved = binio::get_u8(in);
    if (solved > 1) throw FormatError("bad solved flag");
    return Rollout(objects, std::move(pos), solved == 1, dt, static_cast<int>(stride));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("truncated or corrupt trace: ") + e.what());
  }
}

void save_trace(const std::string& path, const Rollout& rollout) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_trace(out, rollout);
}

Rollout load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_trace(in);
}

}  // namespace dynaware
