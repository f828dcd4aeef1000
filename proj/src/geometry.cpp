#include "ultranerf/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "ultranerf/error.hpp"

namespace unerf {

Pose::Pose(const Eigen::Matrix4d& m) : m_(m) {
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-5)) {
    throw GeometryError("pose rotation block is not orthonormal (deviation " + std::to_string(ortho) + ")");
  }
  if (r.determinant() < 0.0) throw GeometryError("pose rotation block is a reflection");
  const Eigen::RowVector4d last = m.row(3);
  if (last != Eigen::RowVector4d(0, 0, 0, 1)) throw GeometryError("pose last row must be (0, 0, 0, 1)");
}

Pose Pose::from_row_major(std::span<const double> v) {
  if (v.size() != 16) throw GeometryError("pose needs 16 values, got " + std::to_string(v.size()));
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
  return Pose(m);
}

Pose Pose::translation(const Vec3& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topRightCorner<3, 1>() = t;
  return Pose(m);
}

Pose Pose::tilt(double degrees, const Vec3& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  const double rad = degrees * std::numbers::pi / 180.0;
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(rad, Vec3::UnitX()).toRotationMatrix();
  m.topRightCorner<3, 1>() = t;
  return Pose(m);
}

std::array<double, 16> Pose::row_major() const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = m_(r, c);
  return out;
}

void FrameSpec::validate() const {
  if (width <= 0 || depth <= 0) throw ConfigError("frame spec: width and depth must be positive");
  if (!(lateral_spacing > 0.0) || !(axial_spacing > 0.0))
    throw ConfigError("frame spec: spacings must be positive");
}

void VolumeBounds::validate() const {
  for (int a = 0; a < 3; ++a)
    if (!(min[a] < max[a])) throw GeometryError("volume bounds are degenerate on axis " + std::to_string(a));
}

Vec3 VolumeBounds::normalize(const Vec3& p) const {
  return (2.0 * (p - min).array() / (max - min).array() - 1.0).matrix();
}

Vec3 VolumeBounds::denormalize(const Vec3& q) const {
  return (min.array() + (q.array() + 1.0) * 0.5 * (max - min).array()).matrix();
}

VolumeBounds VolumeBounds::enclosing(std::span<const Vec3> points, double margin) {
  if (points.empty()) throw GeometryError("cannot bound an empty point set");
  Vec3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  VolumeBounds b;
  for (int a = 0; a < 3; ++a) {
    const double pad = hi[a] > lo[a] ? margin * (hi[a] - lo[a]) : 1.0;
    b.min[a] = lo[a] - pad;
    b.max[a] = hi[a] + pad;
  }
  return b;
}

std::vector<Ray> rays_for_frame(const Pose& pose, const FrameSpec& spec) {
  spec.validate();
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(spec.width));
  const Vec3 dir = pose.apply_direction(Vec3::UnitY()).normalized();
  for (int s = 0; s < spec.width; ++s) {
    rays.push_back({pose.apply_point(Vec3(s * spec.lateral_spacing, 0.0, 0.0)), dir});
  }
  return rays;
}

std::vector<Vec3> sample_points(const Ray& ray, const FrameSpec& spec) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(spec.depth));
  for (int k = 0; k < spec.depth; ++k) pts.push_back(ray.origin + (k * spec.axial_spacing) * ray.direction);
  return pts;
}

std::vector<Vec3> frame_grid(const Pose& pose, const FrameSpec& spec) {
  std::vector<Vec3> grid;
  grid.reserve(spec.pixels());
  for (const auto& ray : rays_for_frame(pose, spec)) {
    auto pts = sample_points(ray, spec);
    grid.insert(grid.end(), pts.begin(), pts.end());
  }
  return grid;
}

std::vector<Pose> read_pose_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open pose file");
  std::vector<Pose> poses;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number '" + tok + "'");
      }
    }
    if (v.size() != 16) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 16 numbers, found " +
                      std::to_string(v.size()));
    }
    try {
      poses.push_back(Pose::from_row_major(v));
    } catch (const GeometryError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return poses;
}

void write_pose_file(const std::filesystem::path& path, std::span<const Pose> poses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write pose file");
  char buf[32];
  for (const auto& p : poses) {
    const auto v = p.row_major();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      out << buf << (i + 1 < v.size() ? ' ' : '\n');
    }
  }
}

}  // namespace unerf
