#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ultranerf/dataset.hpp"
#include "ultranerf/frame.hpp"
#include "ultranerf/geometry.hpp"

namespace unerf::compound {

enum class Mode { max, mean };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Voxel grid of compounded intensities. Voxel (i, j, k) sits at
/// origin + spacing * (i, j, k); values are stored x-fastest.
struct IntensityVolume {
  std::array<std::size_t, 3> dims{0, 0, 0};
  double spacing = 0.5;
  Vec3 origin = Vec3::Zero();
  std::vector<float> values;
  std::vector<std::uint32_t> hits;  // not stored on disk; empty after load

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * dims[1] + j) * dims[0] + i; }
  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }

  /// Trilinear sample; zero beyond half a voxel outside the grid.
  float sample(const Vec3& p) const;

  void save(const std::filesystem::path& path) const;
  static IntensityVolume load(const std::filesystem::path& path);
};

/// Splats every pixel of every sweep into its nearest voxel. The grid spans
/// the bounding box of all frame corners. Throws ConfigError on an empty list.
IntensityVolume compound(std::span<const data::Sweep* const> sweeps, const FrameSpec& frame, double spacing,
                         Mode mode = Mode::mean);

/// Trilinear reslice over the view grid of `pose`.
Frame slice(const IntensityVolume& vol, const Pose& pose, const FrameSpec& frame);

}  // namespace unerf::compound
