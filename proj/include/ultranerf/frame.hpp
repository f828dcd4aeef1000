#pragma once

#include <cstddef>
#include <vector>

namespace unerf {

/// One W x D grid of values for a B-mode frame, stored scanline-major:
/// element (s, k) of scanline s at depth sample k lives at s * depth + k.
struct Frame {
  std::size_t width = 0;
  std::size_t depth = 0;
  std::vector<float> values;

  Frame() = default;
  Frame(std::size_t w, std::size_t d, float fill = 0.0f) : width(w), depth(d), values(w * d, fill) {}

  float& at(std::size_t s, std::size_t k) { return values[s * depth + k]; }
  float at(std::size_t s, std::size_t k) const { return values[s * depth + k]; }
  std::size_t size() const { return values.size(); }
  bool same_shape(const Frame& o) const { return width == o.width && depth == o.depth; }
};

}  // namespace unerf
