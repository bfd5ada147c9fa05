#include "dynaware/raster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dynaware {

namespace {

std::size_t channel_of(const Body& b) {
  switch (b.role) {
    case Role::kGoalSubject: return kChannelSubject;
    case Role::kGoalTarget: return kChannelTarget;
    case Role::kAgentPlaced: return kChannelAction;
    case Role::kScenery: return kChannelScenery;
  }
  return kChannelScenery;
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double s = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + ab * s));
}

template <typename T>
void draw(const Body& b, std::span<T> out, std::size_t size) {
  const double px = 1.0 / static_cast<double>(size);
  const T value = (b.role == Role::kScenery && b.dynamic) ? T(0.5) : T(1);
  T* plane = out.data() + channel_of(b) * size * size;
  double x0, x1, y0, y1;
  if (const auto* seg = std::get_if<Segment>(&b.shape)) {
    const double reach = seg->thickness + 0.5 * px;
    x0 = std::min(seg->p0.x, seg->p1.x) - reach;
    x1 = std::max(seg->p0.x, seg->p1.x) + reach;
    y0 = std::min(seg->p0.y, seg->p1.y) - reach;
    y1 = std::max(seg->p0.y, seg->p1.y) + reach;
  } else {
    const double r = b.radius();
    x0 = b.position.x - r;
    x1 = b.position.x + r;
    y0 = b.position.y - r;
    y1 = b.position.y + r;
  }
  const auto lo = [&](double v) { return static_cast<long>(std::floor(v * static_cast<double>(size))); };
  const long c0 = std::max(0L, lo(x0)), c1 = std::min(static_cast<long>(size) - 1, lo(x1));
  const long r0 = std::max(0L, static_cast<long>(size) - 1 - lo(y1));
  const long r1 = std::min(static_cast<long>(size) - 1, static_cast<long>(size) - 1 - lo(y0));
  for (long row = r0; row <= r1; ++row) {
    const double y = 1.0 - (static_cast<double>(row) + 0.5) * px;
    for (long col = c0; col <= c1; ++col) {
      const Vec2 p{(static_cast<double>(col) + 0.5) * px, y};
      bool inside;
      if (const auto* seg = std::get_if<Segment>(&b.shape)) {
        inside = segment_distance(p, seg->p0, seg->p1) <= seg->thickness + 0.5 * px;
      } else {
        inside = norm(p - b.position) <= b.radius();
      }
      if (inside) {
        T& dst = plane[static_cast<std::size_t>(row) * size + static_cast<std::size_t>(col)];
        dst = std::max(dst, value);
      }
    }
  }
}

}  // namespace

template <typename T>
void rasterize_into(const Scene& scene, std::span<T> out, std::size_t size) {
  if (size == 0 || out.size() != raster_numel(size)) throw std::invalid_argument("rasterize: output buffer has the wrong size");
  std::fill(out.begin(), out.end(), T(0));
  for (const Body& b : scene.bodies) draw(b, out, size);
}

template <typename T>
void rasterize_into(const Scene& scene, const Action& action, std::span<T> out, std::size_t size) {
  rasterize_into(scene, out, size);
  for (const Body& b : action_bodies(action)) draw(b, out, size);
}

template void rasterize_into<float>(const Scene&, std::span<float>, std::size_t);
template void rasterize_into<double>(const Scene&, std::span<double>, std::size_t);
template void rasterize_into<float>(const Scene&, const Action&, std::span<float>, std::size_t);
template void rasterize_into<double>(const Scene&, const Action&, std::span<double>, std::size_t);

}  // namespace dynaware
