#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "ultranerf/error.hpp"
#include "ultranerf/geometry.hpp"

using namespace unerf;

namespace {

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = q.toRotationMatrix();
  m.topRightCorner<3, 1>() = Vec3(n(rng), n(rng), n(rng)) * 10.0;
  return Pose(m);
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ultranerf_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("identity pose rays") {
  FrameSpec spec{3, 4, 1.0, 0.5};
  const auto rays = rays_for_frame(Pose(), spec);
  REQUIRE(rays.size() == 3);
  for (int s = 0; s < 3; ++s) {
    CHECK(rays[static_cast<std::size_t>(s)].origin.isApprox(Vec3(s, 0, 0)));
    CHECK(rays[static_cast<std::size_t>(s)].direction == Vec3(0, 1, 0));
  }
}

TEST_CASE("translated pose shifts origins only") {
  FrameSpec spec{3, 4, 1.0, 0.5};
  const Vec3 t(2, -1, 5);
  const auto base = rays_for_frame(Pose(), spec);
  const auto moved = rays_for_frame(Pose::translation(t), spec);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK((moved[s].origin - (base[s].origin + t)).norm() < 1e-12);
    CHECK(moved[s].direction == base[s].direction);
  }
}

TEST_CASE("rotation about the depth axis rotates origins, keeps directions") {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  // +90 degrees about y: x -> -z, z -> x.
  m(0, 0) = 0;
  m(0, 2) = 1;
  m(2, 0) = -1;
  m(2, 2) = 0;
  FrameSpec spec{3, 4, 1.0, 0.5};
  const auto rays = rays_for_frame(Pose(m), spec);
  for (int s = 0; s < 3; ++s) {
    CHECK((rays[static_cast<std::size_t>(s)].origin - Vec3(0, 0, -s)).norm() < 1e-12);
    CHECK((rays[static_cast<std::size_t>(s)].direction - Vec3(0, 1, 0)).norm() < 1e-12);
  }
}

TEST_CASE("invalid poses are rejected") {
  Eigen::Matrix4d skew = Eigen::Matrix4d::Identity();
  skew(0, 1) = 0.1;
  CHECK_THROWS_AS(Pose{skew}, GeometryError);
  Eigen::Matrix4d row = Eigen::Matrix4d::Identity();
  row(3, 0) = 1.0;
  CHECK_THROWS_AS(Pose{row}, GeometryError);
  std::vector<double> fifteen(15, 0.0);
  CHECK_THROWS_AS(Pose::from_row_major(fifteen), GeometryError);
}

TEST_CASE("sample points") {
  FrameSpec spec{1, 8, 1.0, 0.5};
  Ray r{Vec3(0, 0, 0), Vec3(0, 1, 0)};
  const auto pts = sample_points(r, spec);
  CHECK(pts[0] == r.origin);
  CHECK((pts[4] - Vec3(0, 2, 0)).norm() < 1e-12);

  std::mt19937_64 rng(1);
  const auto rays = rays_for_frame(random_pose(rng), FrameSpec{4, 10, 0.7, 0.3});
  for (const auto& ray : rays) {
    CHECK(std::abs(ray.direction.norm() - 1.0) < 1e-6);
    const auto p = sample_points(ray, FrameSpec{4, 10, 0.7, 0.3});
    for (std::size_t k = 1; k < p.size(); ++k) CHECK((p[k] - p[k - 1]).norm() == doctest::Approx(0.3).epsilon(1e-9));
  }
}

TEST_CASE("identity grid is the pixel lattice scaled by spacings") {
  FrameSpec spec{5, 7, 0.4, 0.25};
  const auto grid = frame_grid(Pose(), spec);
  REQUIRE(grid.size() == 35);
  for (int s = 0; s < 5; ++s)
    for (int k = 0; k < 7; ++k)
      CHECK((grid[static_cast<std::size_t>(s * 7 + k)] - Vec3(s * 0.4, k * 0.25, 0)).norm() < 1e-12);
}

TEST_CASE("rigid transforms preserve inter-sample distances") {
  std::mt19937_64 rng(7);
  FrameSpec spec{6, 9, 0.5, 0.5};
  const auto base = frame_grid(Pose(), spec);
  for (int trial = 0; trial < 5; ++trial) {
    const auto moved = frame_grid(random_pose(rng), spec);
    for (std::size_t i = 0; i < base.size(); i += 3)
      for (std::size_t j = i + 1; j < base.size(); j += 5)
        CHECK(std::abs((moved[i] - moved[j]).norm() - (base[i] - base[j]).norm()) < 1e-5);
  }
}

TEST_CASE("normalize and denormalize") {
  VolumeBounds b{Vec3(-2, 0, 10), Vec3(4, 8, 30)};
  CHECK(b.normalize(Vec3(1, 4, 20)).norm() < 1e-12);
  CHECK((b.normalize(b.min) - Vec3(-1, -1, -1)).norm() < 1e-12);
  CHECK((b.normalize(b.max) - Vec3(1, 1, 1)).norm() < 1e-12);
  CHECK(b.normalize(Vec3(10, 4, 20)).x() > 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 q(u(rng), u(rng), u(rng));
    CHECK((b.normalize(b.denormalize(q)) - q).norm() < 1e-6);
  }
  CHECK_THROWS_AS((VolumeBounds{Vec3(0, 0, 0), Vec3(1, 0, 1)}.validate()), GeometryError);
}

TEST_CASE("enclosing bounds grow by the margin") {
  std::vector<Vec3> pts{{0, 0, 0}, {10, 20, 0}};
  const auto b = VolumeBounds::enclosing(pts, 0.05);
  CHECK((b.min - Vec3(-0.5, -1.0, -1.0)).norm() < 1e-12);
  CHECK((b.max - Vec3(10.5, 21.0, 1.0)).norm() < 1e-12);
}

TEST_CASE("pose files round-trip at full precision") {
  std::mt19937_64 rng(4);
  std::vector<Pose> poses;
  for (int i = 0; i < 4; ++i) poses.push_back(random_pose(rng));
  const auto path = temp_file("poses.txt");
  write_pose_file(path, poses);
  const auto back = read_pose_file(path);
  REQUIRE(back.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) CHECK(back[i].matrix() == poses[i].matrix());
}

TEST_CASE("malformed pose lines report the line number") {
  const auto path = temp_file("bad_poses.txt");
  {
    std::ofstream out(path);
    out << "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n";
    out << "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0\n";
  }
  try {
    read_pose_file(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}
