#pragma once

// Tracked sweep datasets: forward simulation and the on-disk layout
//
//   <dir>/manifest.json
//   <dir>/sweep_<k>/poses.txt
//   <dir>/sweep_<k>/frame_<i>.pgm
//   <dir>/sweep_<k>/gt/frame_<i>_<channel>.pgm   (optional)

#include <filesystem>
#include <optional>
#include <vector>

#include "ultranerf/geometry.hpp"
#include "ultranerf/phantom.hpp"
#include "ultranerf/renderer.hpp"

namespace unerf::data {

struct Sweep {
  int id = 0;
  phantom::ViewKind view = phantom::ViewKind::perpendicular;
  phantom::Split split = phantom::Split::train;
  double tilt_deg = 0.0;
  std::vector<Pose> poses;
  std::vector<Frame> frames;
  std::vector<render::ParamMaps> ground_truth;        // empty when not stored
  std::vector<Frame> transmission;                    // simulation only, never saved
};

struct Dataset {
  FrameSpec frame;
  std::vector<Sweep> sweeps;
  double alpha_scale = 1.0;  // ground-truth alpha is stored as alpha / alpha_scale

  std::vector<const Sweep*> select(phantom::Split split) const;
};

struct SimulationConfig {
  render::RenderConfig render;  // mode, seed and PSF; axial step is taken from the frame spec
  bool keep_ground_truth = true;
};

/// Renders every pose: frame grid -> ground-truth maps -> B-mode. Frame ids
/// are (sweep id * 100000 + frame index) so draws differ per frame.
Sweep simulate_sweep(const phantom::ParamVolume& vol, const phantom::SweepTrajectory& trajectory,
                     const FrameSpec& frame, const SimulationConfig& cfg);

Dataset simulate_dataset(const phantom::ParamVolume& vol, std::span<const phantom::SweepTrajectory> trajectories,
                         const FrameSpec& frame, const SimulationConfig& cfg);

/// Writes the dataset; images are quantized to 8 bits here and only here.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Throws DataError naming the offending file for missing files, count
/// mismatches, and malformed pose lines.
Dataset load_dataset(const std::filesystem::path& dir);

/// Dataset as it reads back from disk (8-bit quantized images and maps).
Dataset quantized(const Dataset& ds);

}  // namespace unerf::data
