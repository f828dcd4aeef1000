#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ultranerf/frame.hpp"

namespace unerf::io {

/// Binary 8-bit PGM (P5): `width` columns are scanlines, `depth` rows are
/// depth samples. Values are clamped to [0, 1] and rounded to 1/255 steps.
void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);

std::uint8_t quantize(float v);
/// Frame after one save/load cycle.
Frame quantized(const Frame& f);

/// Linearly maps [lo, hi] to [0, 1] (constant frames map to 0).
Frame normalized(const Frame& f, float& lo, float& hi);

}  // namespace unerf::io
