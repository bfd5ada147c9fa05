#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynaware/physics.hpp"

namespace dynaware {

// Which frames of the common prefix T = min(t1, t2) enter the average.
// first-n uses frames 1..n, last-n uses T-n+1..T (1-based); n is clamped to T.
struct FrameWindow {
  enum class Kind { kEntire, kFirst, kLast };
  Kind kind = Kind::kEntire;
  std::size_t n = 0;

  static FrameWindow entire() { return {}; }
  static FrameWindow first(std::size_t n) { return {Kind::kFirst, n}; }
  static FrameWindow last(std::size_t n) { return {Kind::kLast, n}; }

  bool operator==(const FrameWindow&) const = default;
};

std::string to_string(const FrameWindow& w);
// "entire", "first:<n>", "last:<n>"
FrameWindow frame_window_from_string(const std::string& text);

struct SimilarityConfig {
  double alpha = std::sqrt(2.0);  // distance clip, world units
  int bins = 20;
  FrameWindow window;

  bool operator==(const SimilarityConfig&) const = default;
};

void validate(const SimilarityConfig& config);

struct SimilarityTarget {
  double v = 0.0;
  int bin = 0;
};

class SimilarityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Nearest bin of v * (bins - 1), ties rounded away from zero.
int similarity_bin(double v, int bins);

// Euclidean distance of one object between the two rollouts at a frame.
double object_distance(const Rollout& a, const Rollout& b, std::size_t object, std::size_t frame);

// Mean clipped-distance similarity 1 - min(d, alpha) / alpha over all moving
// objects and the configured frames of the common prefix.
SimilarityTarget similarity(const Rollout& a, const Rollout& b, const SimilarityConfig& config = {});

// All pairwise targets, row-major (n x n). Computed on the upper triangle and
// mirrored, so the result is exactly symmetric with v = 1 on the diagonal.
std::vector<SimilarityTarget> pair_matrix(std::span<const Rollout> rollouts, const SimilarityConfig& config = {});

}  // namespace dynaware
