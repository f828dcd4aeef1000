#include "ultranerf/compounding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ultranerf/error.hpp"
#include "ultranerf/parallel.hpp"

namespace unerf::compound {

std::string to_string(Mode m) { return m == Mode::max ? "max" : "mean"; }

Mode mode_from_string(const std::string& s) {
  if (s == "max") return Mode::max;
  if (s == "mean") return Mode::mean;
  throw ConfigError("unknown compounding mode '" + s + "' (max|mean)");
}

float IntensityVolume::sample(const Vec3& p) const {
  if (values.empty()) return 0.0f;
  std::array<double, 3> u{};
  std::array<std::size_t, 3> i0{};
  std::array<double, 3> fr{};
  for (int a = 0; a < 3; ++a) {
    const auto n = static_cast<double>(dims[static_cast<std::size_t>(a)]);
    u[a] = (p[a] - origin[a]) / spacing;
    if (u[a] < -0.5 || u[a] > n - 0.5) return 0.0f;
    u[a] = std::clamp(u[a], 0.0, n - 1.0);
    const double f = std::floor(u[a]);
    i0[a] = static_cast<std::size_t>(f);
    fr[a] = u[a] - f;
  }
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    double w = 1.0;
    std::array<std::size_t, 3> idx{};
    bool skip = false;
    for (int a = 0; a < 3; ++a) {
      const bool hi = (c >> a) & 1;
      w *= hi ? fr[a] : 1.0 - fr[a];
      idx[a] = i0[a] + (hi ? 1 : 0);
      if (idx[a] >= dims[static_cast<std::size_t>(a)]) skip = true;
    }
    if (skip || w == 0.0) continue;
    acc += w * static_cast<double>(values[index(idx[0], idx[1], idx[2])]);
  }
  return static_cast<float>(acc);
}

namespace {

constexpr const char* kMagic = "UNRFVOL1";

}  // namespace

void IntensityVolume::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write volume");
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s\nsize %zu %zu %zu\nspacing %.17g\norigin %.17g %.17g %.17g\nend_header\n", kMagic,
                dims[0], dims[1], dims[2], spacing, origin.x(), origin.y(), origin.z());
  out << buf;
  std::string raw(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) raw[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

IntensityVolume IntensityVolume::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open volume");
  IntensityVolume v;
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw DataError(path.string() + ": not a volume file (missing UNRFVOL1)");
  bool done = false;
  while (!done && std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "size") ls >> v.dims[0] >> v.dims[1] >> v.dims[2];
    else if (key == "spacing") ls >> v.spacing;
    else if (key == "origin") ls >> v.origin.x() >> v.origin.y() >> v.origin.z();
    else if (key == "end_header") done = true;
    else throw DataError(path.string() + ": unknown header key '" + key + "'");
    if (ls.fail()) throw DataError(path.string() + ": malformed header line '" + line + "'");
  }
  if (!done) throw DataError(path.string() + ": truncated header");
  if (!(v.spacing > 0.0)) throw DataError(path.string() + ": spacing must be positive");
  std::string raw(v.size() * 4, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError(path.string() + ": truncated voxel data");
  v.values.resize(v.size());
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + static_cast<std::size_t>(b)])) << (8 * b);
    v.values[i] = std::bit_cast<float>(bits);
  }
  return v;
}

IntensityVolume compound(std::span<const data::Sweep* const> sweeps, const FrameSpec& frame, double spacing,
                         Mode mode) {
  if (sweeps.empty()) throw ConfigError("compounding needs at least one sweep");
  if (!(spacing > 0.0)) throw ConfigError("voxel spacing must be positive");
  frame.validate();
  const double w = (frame.width - 1) * frame.lateral_spacing;
  const double d = (frame.depth - 1) * frame.axial_spacing;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  std::size_t total = 0;
  for (const auto* s : sweeps) {
    if (s->frames.size() != s->poses.size())
      throw DataError("sweep " + std::to_string(s->id) + ": frame and pose counts differ");
    for (const auto& pose : s->poses) {
      for (const Vec3& c : {Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, d, 0), Vec3(w, d, 0)}) {
        const Vec3 p = pose.apply_point(c);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
    total += s->frames.size();
  }
  if (total == 0) throw ConfigError("compounding needs at least one frame");

  IntensityVolume v;
  v.spacing = spacing;
  v.origin = lo;
  for (int a = 0; a < 3; ++a)
    v.dims[static_cast<std::size_t>(a)] = static_cast<std::size_t>(std::floor((hi[a] - lo[a]) / spacing + 0.5)) + 1;
  v.values.assign(v.size(), 0.0f);
  v.hits.assign(v.size(), 0);

  std::vector<std::pair<const data::Sweep*, std::size_t>> refs;
  refs.reserve(total);
  for (const auto* s : sweeps)
    for (std::size_t i = 0; i < s->frames.size(); ++i) refs.emplace_back(s, i);

  // Voxel lookup is parallel; accumulation runs in frame order so sums are reproducible.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> targets(refs.size());
  parallel_for(refs.size(), [&](std::size_t f) {
    const auto grid = frame_grid(refs[f].first->poses[refs[f].second], frame);
    auto& t = targets[f];
    t.resize(grid.size());
    for (std::size_t px = 0; px < grid.size(); ++px) {
      std::array<std::size_t, 3> idx{};
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        const double u = std::floor((grid[px][a] - v.origin[a]) / spacing + 0.5);
        if (u < 0.0 || u >= static_cast<double>(v.dims[static_cast<std::size_t>(a)])) inside = false;
        else idx[static_cast<std::size_t>(a)] = static_cast<std::size_t>(u);
      }
      t[px] = inside ? v.index(idx[0], idx[1], idx[2]) : kNone;
    }
  });

  std::vector<double> sums(mode == Mode::mean ? v.size() : 0, 0.0);
  for (std::size_t f = 0; f < refs.size(); ++f) {
    const auto& img = refs[f].first->frames[refs[f].second].values;
    for (std::size_t px = 0; px < img.size(); ++px) {
      const std::size_t vi = targets[f][px];
      if (vi == kNone) continue;
      ++v.hits[vi];
      if (mode == Mode::max) v.values[vi] = std::max(v.values[vi], img[px]);
      else sums[vi] += static_cast<double>(img[px]);
    }
  }
  if (mode == Mode::mean)
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v.hits[i] > 0) v.values[i] = static_cast<float>(sums[i] / static_cast<double>(v.hits[i]));
  return v;
}

Frame slice(const IntensityVolume& vol, const Pose& pose, const FrameSpec& frame) {
  frame.validate();
  const auto grid = frame_grid(pose, frame);
  Frame out(static_cast<std::size_t>(frame.width), static_cast<std::size_t>(frame.depth));
  for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] = vol.sample(grid[i]);
  return out;
}

}  // namespace unerf::compound
