#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "dynaware/action.hpp"
#include "dynaware/physics.hpp"

namespace dynaware {

// Channel layout of a scene raster.
enum RasterChannel : std::size_t {
  kChannelScenery = 0,  // static bodies 1.0, dynamic scenery 0.5
  kChannelSubject = 1,
  kChannelTarget = 2,
  kChannelAction = 3,   // agent-placed balls
};
inline constexpr std::size_t kRasterChannels = 4;

// Pixel (row, col) covers world [col/R, (col+1)/R] x [1 - (row+1)/R, 1 - row/R];
// row 0 is the top of the scene. A pixel is set when its center lies inside a
// circle, or within thickness + half a pixel of a segment (so thin walls
// always show up).
template <typename T>
void rasterize_into(const Scene& scene, std::span<T> out, std::size_t size);

// Scene plus the action's balls drawn into the action channel.
template <typename T>
void rasterize_into(const Scene& scene, const Action& action, std::span<T> out, std::size_t size);

inline std::size_t raster_numel(std::size_t size) { return kRasterChannels * size * size; }

}  // namespace dynaware
