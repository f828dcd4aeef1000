#pragma once

// Procedural tissue phantoms and probe trajectories.
//
// World axes: x lateral (along the transducer), y depth, z elevation (the
// sweep direction). Layers stack along y; a tilted probe rotates its image
// plane about x.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ultranerf/geometry.hpp"
#include "ultranerf/renderer.hpp"

namespace unerf::phantom {

struct TissuePreset {
  double alpha = 0.0;      // attenuation
  double beta = 0.0;       // reflectance at an interface entering this tissue
  double density = 0.0;    // scattering density rho_s
  double amplitude = 0.0;  // scattering intensity phi
};

struct LayerSpec {
  double top = 0.0;     // mm, inclusive
  double bottom = 0.0;  // mm, exclusive
  std::string tissue;
};

struct InclusionSpec {
  enum class Kind { box, sphere };
  Kind kind = Kind::box;
  Vec3 a = Vec3::Zero();  // box min corner or sphere center
  Vec3 b = Vec3::Zero();  // box max corner; b.x() is the sphere radius
  std::string tissue;

  bool contains(const Vec3& p) const;
};

struct PhantomSpec {
  Vec3 extent = Vec3(32.0, 48.0, 80.0);  // mm; the volume spans [0, extent]
  std::map<std::string, TissuePreset> presets;
  std::vector<LayerSpec> layers;
  std::vector<InclusionSpec> inclusions;

  /// Throws ConfigError for gaps, overlaps, unknown tissues, or inclusions outside the extent.
  void validate() const;

  /// Fat / liver / soft-tissue layers with one bone-like reflector plate.
  static PhantomSpec layered_reflector();
  static std::map<std::string, TissuePreset> default_presets();

  static PhantomSpec from_json_text(const std::string& text);
  static PhantomSpec load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

/// Five-channel voxel grid. Voxel (i, j, k) is centered at origin + (i, j, k) * spacing.
struct ParamVolume {
  std::array<std::size_t, 3> dims{0, 0, 0};
  double spacing = 0.5;
  Vec3 origin = Vec3::Zero();
  Vec3 extent = Vec3::Zero();  // sampling region [0, extent]; outside is background
  std::array<std::vector<float>, 5> channels;  // alpha, beta, rho_b, rho_s, phi
  std::vector<int> tissue;                     // tissue index per voxel, -1 for background

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * dims[1] + j) * dims[0] + i; }
  float at(int channel, std::size_t i, std::size_t j, std::size_t k) const { return channels[channel][index(i, j, k)]; }
  Vec3 center(std::size_t i, std::size_t j, std::size_t k) const {
    return origin + spacing * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
  }

  /// Trilinear sample; clamps to the edge voxels inside the extent and returns
  /// background (all zero) outside it.
  std::array<float, 5> sample(const Vec3& p) const;
  bool inside(const Vec3& p) const;
};

/// Rasterizes layers then inclusions (later wins). Voxels where the tissue
/// changes along depth get rho_b = 1 and the entered tissue's beta; all
/// other voxels get rho_b = 0 and beta = 0.
ParamVolume build_phantom(const PhantomSpec& spec, double voxel_size);

/// Ground-truth parameter maps along the frame's sample grid.
render::ParamMaps sample_volume(const ParamVolume& vol, std::span<const Vec3> points, std::size_t width,
                                std::size_t depth);

enum class ViewKind { tilted, perpendicular };
enum class Split { train, test };

std::string to_string(ViewKind v);
std::string to_string(Split s);
ViewKind view_kind_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct SweepPlan {
  double tilt_deg = 0.0;  // signed rotation about the lateral axis
  double step_mm = 0.5;   // probe translation between frames along z
  Split split = Split::train;
};

struct TrajectorySpec {
  int frames_per_sweep = 50;
  double lateral_offset = 0.0;  // x of the first scanline
  double center_z = 40.0;       // z at which each sweep's mid-depth plane is centered
  std::vector<SweepPlan> sweeps;

  void validate() const;
  /// Four tilted training sweeps (+-10, +-20 deg), one perpendicular test
  /// sweep and two tilted test sweeps (+-15 deg).
  static TrajectorySpec default_recipe();
};

struct SweepTrajectory {
  int id = 0;
  ViewKind view = ViewKind::perpendicular;
  Split split = Split::train;
  double tilt_deg = 0.0;
  std::vector<Pose> poses;
};

std::vector<SweepTrajectory> make_trajectories(const TrajectorySpec& spec, const FrameSpec& frame);

}  // namespace unerf::phantom
