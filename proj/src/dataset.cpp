#include "ultranerf/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ultranerf/error.hpp"
#include "ultranerf/image_io.hpp"
#include "ultranerf/parallel.hpp"

namespace unerf::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFramePattern = "frame_%04d.pgm";
constexpr const char* kGtPattern = "frame_%04d_%s.pgm";

std::string frame_name(std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, kFramePattern, static_cast<int>(i));
  return buf;
}

std::string gt_name(std::size_t i, const char* channel) {
  char buf[96];
  std::snprintf(buf, sizeof buf, kGtPattern, static_cast<int>(i), channel);
  return buf;
}

std::string sweep_dir(int id) { return "sweep_" + std::to_string(id); }

}  // namespace

std::vector<const Sweep*> Dataset::select(phantom::Split split) const {
  std::vector<const Sweep*> out;
  for (const auto& s : sweeps)
    if (s.split == split) out.push_back(&s);
  return out;
}

Sweep simulate_sweep(const phantom::ParamVolume& vol, const phantom::SweepTrajectory& trajectory,
                     const FrameSpec& frame, const SimulationConfig& cfg) {
  frame.validate();
  render::RenderConfig rc = cfg.render;
  rc.axial_step = frame.axial_spacing;
  rc.validate();
  Sweep s;
  s.id = trajectory.id;
  s.view = trajectory.view;
  s.split = trajectory.split;
  s.tilt_deg = trajectory.tilt_deg;
  s.poses = trajectory.poses;
  const std::size_t n = s.poses.size();
  s.frames.resize(n);
  s.transmission.resize(n);
  if (cfg.keep_ground_truth) s.ground_truth.resize(n);
  const auto w = static_cast<std::size_t>(frame.width), d = static_cast<std::size_t>(frame.depth);
  parallel_for(n, [&](std::size_t i) {
    const auto grid = frame_grid(s.poses[i], frame);
    auto maps = phantom::sample_volume(vol, grid, w, d);
    auto r = render::render_frame(maps, rc, static_cast<std::uint64_t>(s.id) * 100000u + i);
    s.frames[i] = std::move(r.image);
    s.transmission[i] = std::move(r.maps.transmission);
    if (cfg.keep_ground_truth) s.ground_truth[i] = std::move(maps);
  });
  return s;
}

Dataset simulate_dataset(const phantom::ParamVolume& vol, std::span<const phantom::SweepTrajectory> trajectories,
                         const FrameSpec& frame, const SimulationConfig& cfg) {
  Dataset ds;
  ds.frame = frame;
  float amax = 0.0f;
  for (float v : vol.channels[0]) amax = std::max(amax, v);
  ds.alpha_scale = amax > 0.0f ? static_cast<double>(amax) : 1.0;
  for (const auto& t : trajectories) ds.sweeps.push_back(simulate_sweep(vol, t, frame, cfg));
  return ds;
}

namespace {

Frame scaled(const Frame& f, double inv) {
  Frame o = f;
  for (auto& v : o.values) v = static_cast<float>(static_cast<double>(v) * inv);
  return o;
}

}  // namespace

Dataset quantized(const Dataset& ds) {
  Dataset q = ds;
  for (auto& s : q.sweeps) {
    for (auto& f : s.frames) f = io::quantized(f);
    s.transmission.clear();
    for (auto& gt : s.ground_truth) {
      gt.alpha = scaled(io::quantized(scaled(gt.alpha, 1.0 / ds.alpha_scale)), ds.alpha_scale);
      for (int c = 1; c < 5; ++c) gt.channel(c) = io::quantized(gt.channel(c));
    }
  }
  return q;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.frame.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "ultranerf-dataset";
  manifest["version"] = 1;
  manifest["frame"] = {{"width", ds.frame.width},
                       {"depth", ds.frame.depth},
                       {"lateral_spacing_mm", ds.frame.lateral_spacing},
                       {"axial_spacing_mm", ds.frame.axial_spacing}};
  manifest["gt_alpha_scale"] = ds.alpha_scale;
  manifest["sweeps"] = json::array();
  for (const auto& s : ds.sweeps) {
    if (s.frames.size() != s.poses.size())
      throw DataError("sweep " + std::to_string(s.id) + ": frame and pose counts differ");
    const fs::path sd = dir / sweep_dir(s.id);
    fs::create_directories(sd);
    write_pose_file(sd / "poses.txt", s.poses);
    for (std::size_t i = 0; i < s.frames.size(); ++i) io::write_pgm(sd / frame_name(i), s.frames[i]);
    const bool gt = !s.ground_truth.empty();
    if (gt) {
      fs::create_directories(sd / "gt");
      for (std::size_t i = 0; i < s.ground_truth.size(); ++i) {
        const auto& m = s.ground_truth[i];
        io::write_pgm(sd / "gt" / gt_name(i, render::ParamMaps::kNames[0]), scaled(m.alpha, 1.0 / ds.alpha_scale));
        for (int c = 1; c < 5; ++c) io::write_pgm(sd / "gt" / gt_name(i, render::ParamMaps::kNames[c]), m.channel(c));
      }
    }
    manifest["sweeps"].push_back({{"id", s.id},
                                  {"dir", sweep_dir(s.id)},
                                  {"frames", s.frames.size()},
                                  {"view", phantom::to_string(s.view)},
                                  {"split", phantom::to_string(s.split)},
                                  {"tilt_deg", s.tilt_deg},
                                  {"image_pattern", kFramePattern},
                                  {"pose_file", "poses.txt"},
                                  {"ground_truth", gt}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError((dir / "manifest.json").string() + ": cannot write manifest");
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError(mpath.string() + ": cannot open manifest");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(mpath.string() + ": malformed manifest: " + e.what());
  }
  Dataset ds;
  try {
    const auto& f = manifest.at("frame");
    ds.frame = {f.at("width").get<int>(), f.at("depth").get<int>(), f.at("lateral_spacing_mm").get<double>(),
                f.at("axial_spacing_mm").get<double>()};
    ds.alpha_scale = manifest.value("gt_alpha_scale", 1.0);
    for (const auto& sj : manifest.at("sweeps")) {
      Sweep s;
      s.id = sj.at("id").get<int>();
      s.view = phantom::view_kind_from_string(sj.at("view").get<std::string>());
      s.split = phantom::split_from_string(sj.at("split").get<std::string>());
      s.tilt_deg = sj.value("tilt_deg", 0.0);
      const fs::path sd = dir / sj.at("dir").get<std::string>();
      const auto count = sj.at("frames").get<std::size_t>();
      s.poses = read_pose_file(sd / sj.value("pose_file", std::string("poses.txt")));
      if (s.poses.size() != count)
        throw DataError(mpath.string() + ": sweep " + std::to_string(s.id) + " declares " + std::to_string(count) +
                        " frames but " + (sd / "poses.txt").string() + " has " + std::to_string(s.poses.size()) + " poses");
      std::size_t images = 0;
      for (const auto& e : fs::directory_iterator(sd))
        if (e.is_regular_file() && e.path().extension() == ".pgm" && e.path().filename().string().rfind("frame_", 0) == 0)
          ++images;
      if (images != count)
        throw DataError(mpath.string() + ": sweep " + std::to_string(s.id) + " declares " + std::to_string(count) +
                        " frames but " + sd.string() + " holds " + std::to_string(images) + " images");
      for (std::size_t i = 0; i < count; ++i) {
        auto fr = io::read_pgm(sd / frame_name(i));
        if (fr.width != static_cast<std::size_t>(ds.frame.width) || fr.depth != static_cast<std::size_t>(ds.frame.depth))
          throw DataError((sd / frame_name(i)).string() + ": image size does not match the manifest frame spec");
        s.frames.push_back(std::move(fr));
      }
      if (sj.value("ground_truth", false)) {
        for (std::size_t i = 0; i < count; ++i) {
          render::ParamMaps m;
          for (int c = 0; c < 5; ++c) m.channel(c) = io::read_pgm(sd / "gt" / gt_name(i, render::ParamMaps::kNames[c]));
          m.alpha = scaled(m.alpha, ds.alpha_scale);
          s.ground_truth.push_back(std::move(m));
        }
      }
      ds.sweeps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(mpath.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  ds.frame.validate();
  return ds;
}

}  // namespace unerf::data
