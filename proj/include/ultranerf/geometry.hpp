#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <span>
#include <vector>

namespace unerf {

using Vec3 = Eigen::Vector3d;

/// Rigid 4x4 transform (mm) from image-plane coordinates to world coordinates.
/// Image plane: x = lateral position along the transducer, y = depth, z = 0.
class Pose {
 public:
  Pose() : m_(Eigen::Matrix4d::Identity()) {}
  /// Throws GeometryError unless the rotation block is orthonormal within 1e-5
  /// and the last row is (0, 0, 0, 1).
  explicit Pose(const Eigen::Matrix4d& m);

  static Pose from_row_major(std::span<const double> v);
  static Pose translation(const Vec3& t);
  /// Rotation about the image lateral (x) axis by `degrees`, then translation.
  static Pose tilt(double degrees, const Vec3& t);

  const Eigen::Matrix4d& matrix() const { return m_; }
  std::array<double, 16> row_major() const;

  Vec3 apply_point(const Vec3& p) const { return m_.topLeftCorner<3, 3>() * p + m_.topRightCorner<3, 1>(); }
  Vec3 apply_direction(const Vec3& d) const { return m_.topLeftCorner<3, 3>() * d; }

 private:
  Eigen::Matrix4d m_;
};

struct FrameSpec {
  int width = 64;               // scanlines
  int depth = 96;               // samples per scanline
  double lateral_spacing = 0.5; // mm between scanlines
  double axial_spacing = 0.5;   // mm between depth samples (dt)

  void validate() const;
  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(depth); }
  bool operator==(const FrameSpec&) const = default;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

/// Axis-aligned region used to map world positions into [-1, 1] for encoding.
struct VolumeBounds {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  void validate() const;
  Vec3 normalize(const Vec3& p) const;
  Vec3 denormalize(const Vec3& q) const;

  /// Bounding box of `points`, grown by `margin` of the extent on each side.
  /// Flat axes are padded by 1 mm so the box never degenerates.
  static VolumeBounds enclosing(std::span<const Vec3> points, double margin = 0.05);
};

/// One ray per scanline; origins evenly spaced along the transducer edge.
std::vector<Ray> rays_for_frame(const Pose& pose, const FrameSpec& spec);

/// Positions origin + k * dt * direction for k = 0..D-1.
std::vector<Vec3> sample_points(const Ray& ray, const FrameSpec& spec);

/// All W x D sample positions of a frame, scanline-major.
std::vector<Vec3> frame_grid(const Pose& pose, const FrameSpec& spec);

/// One line per pose, 16 whitespace-separated decimals, row-major.
std::vector<Pose> read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, std::span<const Pose> poses);

}  // namespace unerf
