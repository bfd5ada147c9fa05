#include "dynaware/similarity.hpp"

#include <algorithm>

namespace dynaware {

std::string to_string(const FrameWindow& w) {
  switch (w.kind) {
    case FrameWindow::Kind::kEntire: return "entire";
    case FrameWindow::Kind::kFirst: return "first:" + std::to_string(w.n);
    case FrameWindow::Kind::kLast: return "last:" + std::to_string(w.n);
  }
  return "entire";
}

FrameWindow frame_window_from_string(const std::string& text) {
  if (text == "entire") return FrameWindow::entire();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      const long long parsed = std::stoll(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1 || parsed < 1) throw std::invalid_argument("n");
      n = static_cast<std::size_t>(parsed);
    } catch (const std::exception&) {
      throw SimilarityError("frame window '" + text + "': n must be a positive integer");
    }
    if (kind == "first") return FrameWindow::first(n);
    if (kind == "last") return FrameWindow::last(n);
  }
  throw SimilarityError("unknown frame window '" + text + "' (expected entire, first:<n> or last:<n>)");
}

void validate(const SimilarityConfig& c) {
  if (!(c.alpha > 0.0)) throw SimilarityError("similarity: alpha must be positive");
  if (c.bins < 2) throw SimilarityError("similarity: bins must be >= 2");
  if (c.window.kind != FrameWindow::Kind::kEntire && c.window.n < 1) {
    throw SimilarityError("similarity: window length must be >= 1");
  }
}

int similarity_bin(double v, int bins) {
  if (bins < 2) throw SimilarityError("similarity: bins must be >= 2");
  if (!(v >= 0.0 && v <= 1.0)) throw SimilarityError("similarity value outside [0, 1]");
  // std::round rounds halfway cases away from zero.
  return static_cast<int>(std::round(v * (bins - 1)));
}

namespace {

void check_compatible(const Rollout& a, const Rollout& b) {
  if (a.object_count() == 0 || b.object_count() == 0) throw SimilarityError("similarity: empty object set");
  if (a.object_count() != b.object_count()) {
    throw SimilarityError("similarity: rollouts track different object sets (" + std::to_string(a.object_count()) +
                          " vs " + std::to_string(b.object_count()) + ")");
  }
  if (a.length() == 0 || b.length() == 0) throw SimilarityError("similarity: empty rollout");
}

}  // namespace

double object_distance(const Rollout& a, const Rollout& b, std::size_t object, std::size_t frame) {
  check_compatible(a, b);
  if (frame >= a.length() || frame >= b.length()) throw SimilarityError("object_distance: frame not covered by both rollouts");
  if (object >= a.object_count()) throw SimilarityError("object_distance: object index out of range");
  const Vec2 pa = a.at(frame, object);
  const Vec2 pb = b.at(frame, object);
  return std::hypot(pa.x - pb.x, pa.y - pb.y);
}

SimilarityTarget similarity(const Rollout& a, const Rollout& b, const SimilarityConfig& config) {
  validate(config);
  check_compatible(a, b);
  const std::size_t T = std::min(a.length(), b.length());
  std::size_t begin = 0;
  std::size_t end = T;
  switch (config.window.kind) {
    case FrameWindow::Kind::kEntire: break;
    case FrameWindow::Kind::kFirst: end = std::min(config.window.n, T); break;
    case FrameWindow::Kind::kLast: begin = T - std::min(config.window.n, T); break;
  }
  const std::size_t objects = a.object_count();
  double total = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t o = 0; o < objects; ++o) {
      const Vec2 pa = a.at(t, o);
      const Vec2 pb = b.at(t, o);
      const double d = std::hypot(pa.x - pb.x, pa.y - pb.y);
      total += 1.0 - std::min(d, config.alpha) / config.alpha;
    }
  }
  const double v = std::clamp(total / static_cast<double>((end - begin) * objects), 0.0, 1.0);
  return {v, similarity_bin(v, config.bins)};
}

std::vector<SimilarityTarget> pair_matrix(std::span<const Rollout> rollouts, const SimilarityConfig& config) {
  validate(config);
  const std::size_t n = rollouts.size();
  std::vector<SimilarityTarget> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i * n + i] = {1.0, config.bins - 1};
    for (std::size_t j = i + 1; j < n; ++j) {
      m[i * n + j] = similarity(rollouts[i], rollouts[j], config);
      m[j * n + i] = m[i * n + j];
    }
  }
  return m;
}

}  // namespace dynaware
