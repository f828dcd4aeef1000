#include "ultranerf/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "ultranerf/error.hpp"

namespace unerf::phantom {

using nlohmann::json;

bool InclusionSpec::contains(const Vec3& p) const {
  if (kind == Kind::sphere) return (p - a).squaredNorm() <= b.x() * b.x();
  return (p.array() >= a.array()).all() && (p.array() < b.array()).all();
}

std::map<std::string, TissuePreset> PhantomSpec::default_presets() {
  // Absolute values are free; only the ordering (bone attenuates and scatters
  // most) is meaningful.
  return {
      {"fat", {0.02, 0.10, 0.30, 0.35}},
      {"liver", {0.05, 0.15, 0.60, 0.55}},
      {"soft_tissue", {0.03, 0.12, 0.45, 0.45}},
      {"bone", {0.80, 0.85, 0.80, 0.90}},
  };
}

PhantomSpec PhantomSpec::layered_reflector() {
  PhantomSpec s;
  s.extent = Vec3(32.0, 48.0, 80.0);
  s.presets = default_presets();
  s.layers = {{0.0, 8.0, "fat"}, {8.0, 30.0, "liver"}, {30.0, 48.0, "soft_tissue"}};
  s.inclusions = {{InclusionSpec::Kind::box, Vec3(6.0, 16.0, 34.0), Vec3(26.0, 19.0, 46.0), "bone"}};
  return s;
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a)
    if (!(extent[a] > 0.0)) throw ConfigError("phantom: extent must be positive on every axis");
  if (layers.empty()) throw ConfigError("phantom: at least one layer is required");
  for (const auto& [name, p] : presets) {
    if (p.alpha < 0.0) throw ConfigError("phantom: preset '" + name + "' has negative alpha");
    for (double v : {p.beta, p.density, p.amplitude})
      if (v < 0.0 || v > 1.0) throw ConfigError("phantom: preset '" + name + "' has a value outside [0, 1]");
  }
  auto known = [&](const std::string& t) {
    if (!presets.count(t)) throw ConfigError("phantom: unknown tissue '" + t + "'");
  };
  constexpr double tol = 1e-9;
  double expected_top = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    known(l.tissue);
    if (!(l.bottom > l.top)) throw ConfigError("phantom: layer " + std::to_string(i) + " is empty or inverted");
    if (l.top < expected_top - tol) throw ConfigError("phantom: layer " + std::to_string(i) + " overlaps its predecessor");
    if (l.top > expected_top + tol) throw ConfigError("phantom: gap above layer " + std::to_string(i));
    expected_top = l.bottom;
  }
  if (std::abs(expected_top - extent.y()) > tol) throw ConfigError("phantom: layers must end at the depth extent");
  for (std::size_t i = 0; i < inclusions.size(); ++i) {
    const auto& inc = inclusions[i];
    known(inc.tissue);
    Vec3 lo, hi;
    if (inc.kind == InclusionSpec::Kind::sphere) {
      if (!(inc.b.x() > 0.0)) throw ConfigError("phantom: sphere radius must be positive");
      lo = inc.a.array() - inc.b.x();
      hi = inc.a.array() + inc.b.x();
    } else {
      lo = inc.a;
      hi = inc.b;
      if (!(hi.array() > lo.array()).all()) throw ConfigError("phantom: box inclusion " + std::to_string(i) + " is empty");
    }
    if ((lo.array() < -tol).any() || (hi.array() > extent.array() + tol).any())
      throw ConfigError("phantom: inclusion " + std::to_string(i) + " leaves the extent");
  }
}

namespace {

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("phantom: expected a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vec_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

PhantomSpec PhantomSpec::from_json_text(const std::string& text) {
  PhantomSpec s;
  try {
    const json j = json::parse(text);
    s.extent = vec_from(j.at("extent_mm"));
    s.presets = j.contains("presets") ? std::map<std::string, TissuePreset>{} : default_presets();
    if (j.contains("presets")) {
      for (const auto& [name, p] : j.at("presets").items()) {
        s.presets[name] = {p.at("alpha").get<double>(), p.at("beta").get<double>(), p.at("rho_s").get<double>(),
                           p.at("phi").get<double>()};
      }
    }
    for (const auto& l : j.at("layers"))
      s.layers.push_back({l.at("top").get<double>(), l.at("bottom").get<double>(), l.at("tissue").get<std::string>()});
    if (j.contains("inclusions")) {
      for (const auto& inc : j.at("inclusions")) {
        InclusionSpec is;
        const auto shape = inc.at("shape").get<std::string>();
        is.tissue = inc.at("tissue").get<std::string>();
        if (shape == "box") {
          is.kind = InclusionSpec::Kind::box;
          is.a = vec_from(inc.at("min"));
          is.b = vec_from(inc.at("max"));
        } else if (shape == "sphere") {
          is.kind = InclusionSpec::Kind::sphere;
          is.a = vec_from(inc.at("center"));
          is.b = Vec3(inc.at("radius").get<double>(), 0.0, 0.0);
        } else {
          throw ConfigError("phantom: unknown inclusion shape '" + shape + "'");
        }
        s.inclusions.push_back(is);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("phantom spec: ") + e.what());
  }
  s.validate();
  return s;
}

PhantomSpec PhantomSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open phantom spec");
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return from_json_text(os.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string PhantomSpec::to_json_text() const {
  json j;
  j["extent_mm"] = vec_to(extent);
  for (const auto& [name, p] : presets)
    j["presets"][name] = {{"alpha", p.alpha}, {"beta", p.beta}, {"rho_s", p.density}, {"phi", p.amplitude}};
  j["layers"] = json::array();
  for (const auto& l : layers) j["layers"].push_back({{"top", l.top}, {"bottom", l.bottom}, {"tissue", l.tissue}});
  j["inclusions"] = json::array();
  for (const auto& inc : inclusions) {
    if (inc.kind == InclusionSpec::Kind::box)
      j["inclusions"].push_back({{"shape", "box"}, {"min", vec_to(inc.a)}, {"max", vec_to(inc.b)}, {"tissue", inc.tissue}});
    else
      j["inclusions"].push_back({{"shape", "sphere"}, {"center", vec_to(inc.a)}, {"radius", inc.b.x()}, {"tissue", inc.tissue}});
  }
  return j.dump(2) + "\n";
}

ParamVolume build_phantom(const PhantomSpec& spec, double voxel_size) {
  spec.validate();
  if (!(voxel_size > 0.0)) throw ConfigError("phantom: voxel size must be positive");
  ParamVolume vol;
  vol.spacing = voxel_size;
  vol.extent = spec.extent;
  for (int a = 0; a < 3; ++a)
    vol.dims[static_cast<std::size_t>(a)] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.extent[a] / voxel_size)));
  vol.origin = Vec3::Constant(0.5 * voxel_size);

  std::vector<std::string> names;
  std::vector<TissuePreset> presets;
  for (const auto& [n, p] : spec.presets) {
    names.push_back(n);
    presets.push_back(p);
  }
  auto tissue_index = [&](const std::string& n) {
    return static_cast<int>(std::find(names.begin(), names.end(), n) - names.begin());
  };

  const auto [nx, ny, nz] = vol.dims;
  const std::size_t total = nx * ny * nz;
  vol.tissue.assign(total, -1);
  for (auto& c : vol.channels) c.assign(total, 0.0f);

  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const Vec3 c = vol.center(i, j, k);
        int t = -1;
        for (const auto& l : spec.layers)
          if (c.y() >= l.top && c.y() < l.bottom) t = tissue_index(l.tissue);
        for (const auto& inc : spec.inclusions)
          if (inc.contains(c)) t = tissue_index(inc.tissue);
        vol.tissue[vol.index(i, j, k)] = t;
      }
    }
  }
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t idx = vol.index(i, j, k);
        const int t = vol.tissue[idx];
        if (t < 0) continue;
        const auto& p = presets[static_cast<std::size_t>(t)];
        const int above = j == 0 ? -1 : vol.tissue[vol.index(i, j - 1, k)];
        const bool interface = above != t;
        vol.channels[0][idx] = static_cast<float>(p.alpha);
        vol.channels[1][idx] = interface ? static_cast<float>(p.beta) : 0.0f;
        vol.channels[2][idx] = interface ? 1.0f : 0.0f;
        vol.channels[3][idx] = static_cast<float>(p.density);
        vol.channels[4][idx] = static_cast<float>(p.amplitude);
      }
    }
  }
  return vol;
}

bool ParamVolume::inside(const Vec3& p) const {
  return (p.array() >= 0.0).all() && (p.array() <= extent.array()).all();
}

std::array<float, 5> ParamVolume::sample(const Vec3& p) const {
  std::array<float, 5> out{0, 0, 0, 0, 0};
  if (!inside(p)) return out;
  std::array<std::size_t, 3> i0{}, i1{};
  std::array<double, 3> f{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double u = std::clamp((p[static_cast<int>(a)] - origin[static_cast<int>(a)]) / spacing, 0.0,
                                static_cast<double>(dims[a] - 1));
    const double fl = std::floor(u);
    i0[a] = static_cast<std::size_t>(fl);
    i1[a] = std::min(i0[a] + 1, dims[a] - 1);
    f[a] = u - fl;
  }
  for (int c = 0; c < 5; ++c) {
    const auto& ch = channels[static_cast<std::size_t>(c)];
    auto v = [&](std::size_t x, std::size_t y, std::size_t z) { return static_cast<double>(ch[index(x, y, z)]); };
    const double c00 = v(i0[0], i0[1], i0[2]) * (1 - f[0]) + v(i1[0], i0[1], i0[2]) * f[0];
    const double c10 = v(i0[0], i1[1], i0[2]) * (1 - f[0]) + v(i1[0], i1[1], i0[2]) * f[0];
    const double c01 = v(i0[0], i0[1], i1[2]) * (1 - f[0]) + v(i1[0], i0[1], i1[2]) * f[0];
    const double c11 = v(i0[0], i1[1], i1[2]) * (1 - f[0]) + v(i1[0], i1[1], i1[2]) * f[0];
    const double c0 = c00 * (1 - f[1]) + c10 * f[1];
    const double c1 = c01 * (1 - f[1]) + c11 * f[1];
    out[static_cast<std::size_t>(c)] = static_cast<float>(c0 * (1 - f[2]) + c1 * f[2]);
  }
  return out;
}

render::ParamMaps sample_volume(const ParamVolume& vol, std::span<const Vec3> points, std::size_t width,
                                std::size_t depth) {
  if (points.size() != width * depth) throw ShapeError("sample_volume: point count does not match the frame");
  render::ParamMaps maps;
  for (int c = 0; c < 5; ++c) maps.channel(c) = Frame(width, depth);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto v = vol.sample(points[i]);
    for (int c = 0; c < 5; ++c) maps.channel(c).values[i] = v[static_cast<std::size_t>(c)];
  }
  return maps;
}

std::string to_string(ViewKind v) { return v == ViewKind::tilted ? "tilted" : "perpendicular"; }
std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

ViewKind view_kind_from_string(const std::string& s) {
  if (s == "tilted") return ViewKind::tilted;
  if (s == "perpendicular") return ViewKind::perpendicular;
  throw ConfigError("unknown view kind '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

void TrajectorySpec::validate() const {
  if (frames_per_sweep < 1) throw ConfigError("trajectory: frames per sweep must be positive");
  if (sweeps.empty()) throw ConfigError("trajectory: at least one sweep is required");
  for (const auto& s : sweeps) {
    if (std::abs(s.tilt_deg) > 45.0) throw ConfigError("trajectory: tilt must lie within +-45 degrees");
    if (!(s.step_mm > 0.0)) throw ConfigError("trajectory: step must be positive");
  }
}

TrajectorySpec TrajectorySpec::default_recipe() {
  TrajectorySpec t;
  t.sweeps = {
      {10.0, 0.7, Split::train}, {-10.0, 0.7, Split::train}, {20.0, 0.9, Split::train}, {-20.0, 0.9, Split::train},
      {0.0, 0.5, Split::test},   {15.0, 0.5, Split::test},   {-15.0, 0.5, Split::test},
  };
  return t;
}

std::vector<SweepTrajectory> make_trajectories(const TrajectorySpec& spec, const FrameSpec& frame) {
  spec.validate();
  frame.validate();
  std::vector<SweepTrajectory> out;
  const double half_depth = 0.5 * (frame.depth - 1) * frame.axial_spacing;
  int id = 0;
  for (const auto& plan : spec.sweeps) {
    SweepTrajectory s;
    s.id = id++;
    s.tilt_deg = plan.tilt_deg;
    s.view = plan.tilt_deg == 0.0 ? ViewKind::perpendicular : ViewKind::tilted;
    s.split = plan.split;
    const double rad = plan.tilt_deg * std::numbers::pi / 180.0;
    const double travel = plan.step_mm * (spec.frames_per_sweep - 1);
    const double z0 = spec.center_z - 0.5 * travel - half_depth * std::sin(rad);
    for (int i = 0; i < spec.frames_per_sweep; ++i)
      s.poses.push_back(Pose::tilt(plan.tilt_deg, Vec3(spec.lateral_offset, 0.0, z0 + i * plan.step_mm)));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace unerf::phantom
