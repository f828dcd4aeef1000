#include "ultranerf/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ultranerf/compounding.hpp"
#include "ultranerf/dataset.hpp"
#include "ultranerf/error.hpp"
#include "ultranerf/gradcheck_suite.hpp"
#include "ultranerf/image_io.hpp"
#include "ultranerf/parallel.hpp"
#include "ultranerf/phantom.hpp"
#include "ultranerf/trainer.hpp"

namespace unerf::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + ": '" + s + "' is not a number");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string default_sweeps() {
  std::string out;
  for (const auto& s : phantom::TrajectorySpec::default_recipe().sweeps) {
    if (!out.empty()) out += ",";
    out += fmt(s.tilt_deg) + ":" + fmt(s.step_mm) + ":" + phantom::to_string(s.split);
  }
  return out;
}

std::vector<phantom::SweepPlan> parse_sweeps(const std::string& spec) {
  std::vector<phantom::SweepPlan> out;
  for (const auto& item : split(spec, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError("sweep entry '" + item + "' must be tilt:step:split");
    out.push_back({parse_double(parts[0], "sweep tilt"), parse_double(parts[1], "sweep step"),
                   phantom::split_from_string(parts[2])});
  }
  if (out.empty()) throw ConfigError("at least one sweep is required");
  return out;
}

struct PsfFlags {
  int size = 5;
  double sigma_lateral = 1.0;
  double sigma_axial = 0.75;

  diff::Kernel2D kernel() const {
    if (size < 1 || size % 2 == 0) throw ConfigError("psf size must be a positive odd number");
    return render::gaussian_psf(static_cast<std::size_t>(size), static_cast<std::size_t>(size), sigma_lateral,
                                sigma_axial);
  }
};

void add_psf(CLI::App* sub, PsfFlags& p) {
  sub->add_option("--psf-size", p.size, "Point-spread kernel size (odd, square)");
  sub->add_option("--psf-sigma-lateral", p.sigma_lateral, "Kernel sigma across scanlines, in samples");
  sub->add_option("--psf-sigma-axial", p.sigma_axial, "Kernel sigma along depth, in samples");
}

struct FrameFlags {
  int width = 64;
  int depth = 96;
  double lateral = 0.5;
  double axial = 0.5;

  FrameSpec spec() const {
    FrameSpec f{width, depth, lateral, axial};
    f.validate();
    return f;
  }
};

void add_frame(CLI::App* sub, FrameFlags& f) {
  sub->add_option("--width", f.width, "Scanlines per frame");
  sub->add_option("--depth", f.depth, "Samples per scanline");
  sub->add_option("--lateral-spacing", f.lateral, "Scanline spacing (mm)");
  sub->add_option("--axial-spacing", f.axial, "Depth sample spacing (mm)");
}

/// Writes one frame to `out` when it names a .pgm file, else frame_<i>.pgm files into the directory `out`.
void write_frames(const fs::path& out, const std::vector<Frame>& frames) {
  if (out.extension() == ".pgm") {
    if (frames.size() != 1)
      throw ConfigError("output " + out.string() + " is a single image but the pose file holds " +
                        std::to_string(frames.size()) + " poses");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_pgm(out, frames[0]);
    return;
  }
  fs::create_directories(out);
  char name[64];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof name, "frame_%04d.pgm", static_cast<int>(i));
    io::write_pgm(out / name, frames[i]);
  }
}

std::string option_value(const CLI::Option* opt) {
  if (opt->count() == 0) {
    if (opt->get_expected_min() == 0) return "false";
    return opt->get_default_str();
  }
  const auto res = opt->reduced_results();
  std::string out;
  for (const auto& r : res) out += (out.empty() ? "" : ",") + r;
  if (opt->get_expected_min() == 0 && (out.empty() || out == "1")) return "true";
  return out;
}

/// Resolved configuration in config-file form, so it can be fed back with --config.
std::string resolved_config(const CLI::App* sub) {
  std::string out = "# ultranerf " + sub->get_name() + "\n";
  for (const auto* opt : sub->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names[0] == "help" || names[0] == "config") continue;
    out += names[0] + "=" + option_value(opt) + "\n";
  }
  return out;
}

}  // namespace

std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable ultrasound rendering: simulate, train, render, evaluate"};
  app.name("ultranerf");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(1);

  int threads = 0;
  std::string config_path;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker cap (0 = all cores)");
    sub->add_option("--config", config_path, "key=value file; command-line flags take precedence");
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "Build a phantom and simulate tracked sweeps into a dataset directory");
  std::string phantom_file, sim_out, sim_mode = "hard", sweeps = default_sweeps(), tilts;
  std::uint64_t sim_seed = 0;
  int frames_per_sweep = 50;
  double voxel = 0.5, tilt_step = 0.7, center_z = 40.0;
  bool sim_noise = false, no_gt = false;
  FrameFlags sim_frame;
  PsfFlags sim_psf;
  sim->add_option("--phantom", phantom_file, "Phantom JSON (default: layered phantom with one strong reflector)");
  sim->add_option("--out", sim_out, "Dataset directory")->required();
  sim->add_option("--seed", sim_seed, "Seed for stochastic sampling");
  sim->add_option("--mode", sim_mode, "Sampling mode: hard|relaxed|expected");
  sim->add_option("--sweeps", sweeps, "Comma list of tilt:step_mm:split entries");
  sim->add_option("--tilt", tilts, "Comma list of training tilts (deg); replaces the training entries of --sweeps");
  sim->add_option("--tilt-step", tilt_step, "Probe step (mm) for sweeps given by --tilt");
  sim->add_option("--frames", frames_per_sweep, "Frames per sweep");
  sim->add_option("--center-z", center_z, "Elevational center of every sweep (mm)");
  sim->add_option("--voxel", voxel, "Phantom voxel size (mm)");
  sim->add_flag("--scatter-noise", sim_noise, "Multiply scatter amplitude by unit Gaussian noise");
  sim->add_flag("--no-ground-truth", no_gt, "Do not store ground-truth parameter maps");
  add_frame(sim, sim_frame);
  add_psf(sim, sim_psf);
  common(sim);

  // train
  auto* tr = app.add_subcommand("train", "Fit a field to the training sweeps of a dataset");
  std::string tr_data, tr_out, variant = "ultra", tr_mode = "hard", loss_log;
  train::TrainConfig tc;
  int log_every = 100;
  PsfFlags tr_psf;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--variant", variant, "ultra|baseline");
  tr->add_option("--iters", tc.iterations, "Iterations");
  tr->add_option("--seed", tc.seed, "Seed for initialization, frame order and sampling");
  tr->add_option("--lambda", tc.loss.lambda, "SSIM weight of the loss");
  tr->add_option("--lr", tc.learning_rate, "Initial learning rate");
  tr->add_option("--lr-halving", tc.lr_halving_interval, "Iterations per learning-rate halving");
  tr->add_option("--batch", tc.frames_per_batch, "Frames per iteration");
  tr->add_option("--width", tc.model.width, "Hidden units per layer");
  tr->add_option("--hidden-layers", tc.model.hidden_layers, "Hidden layers");
  tr->add_option("--skip-layer", tc.model.skip_layer, "Layer (1-based) receiving the encoded input again");
  tr->add_option("--frequencies", tc.model.encoding.frequencies, "Positional encoding frequencies L");
  tr->add_flag("--include-input", tc.model.encoding.include_input, "Append raw coordinates to the encoding");
  tr->add_option("--mode", tr_mode, "Sampling mode during training: hard|relaxed|expected");
  tr->add_option("--temperature", tc.render.temperature, "Relaxed sampling temperature");
  tr->add_flag("--scatter-noise", tc.render.scatter_noise, "Multiply scatter amplitude by unit Gaussian noise");
  tr->add_option("--checkpoint-interval", tc.checkpoint_interval, "Write the checkpoint every N iterations (0 = off)");
  tr->add_option("--loss-log", loss_log, "Write the per-iteration loss here");
  tr->add_option("--log-every", log_every, "Progress line interval on stderr (0 = quiet)");
  add_psf(tr, tr_psf);
  common(tr);

  // render
  auto* rd = app.add_subcommand("render", "Render novel views from a checkpoint");
  std::string rd_ckpt, rd_poses, rd_out, rd_mode = "expected", rd_maps;
  std::uint64_t rd_frame_id = 0;
  rd->add_option("--ckpt", rd_ckpt, "Checkpoint")->required();
  rd->add_option("--pose-file", rd_poses, "Poses, one row-major 4x4 per line")->required();
  rd->add_option("--out", rd_out, "Output .pgm (single pose) or directory")->required();
  rd->add_option("--mode", rd_mode, "Sampling mode: hard|relaxed|expected");
  rd->add_option("--frame-id", rd_frame_id, "Draw key of the first pose (hard/relaxed modes)");
  rd->add_option("--maps-dir", rd_maps, "Also export parameter and intermediate maps here");
  common(rd);

  // eval
  auto* ev = app.add_subcommand("eval", "Median and mean SSIM per test sweep");
  std::string ev_ckpt, ev_data, ev_out;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--out", ev_out, "TSV table (stdout when omitted)");
  common(ev);

  // decompose
  auto* dc = app.add_subcommand("decompose", "Export tissue parameter maps for each pose");
  std::string dc_ckpt, dc_poses, dc_out;
  dc->add_option("--ckpt", dc_ckpt, "Checkpoint (ultra variant)")->required();
  dc->add_option("--pose-file", dc_poses, "Poses")->required();
  dc->add_option("--out-dir", dc_out, "Output directory")->required();
  common(dc);

  // compound
  auto* cp = app.add_subcommand("compound", "Compound dataset sweeps into a voxel volume");
  std::string cp_data, cp_exclude, cp_out, cp_mode = "mean";
  double cp_spacing = 0.5;
  cp->add_option("--data", cp_data, "Dataset directory")->required();
  cp->add_option("--exclude-sweeps", cp_exclude, "Comma list of sweep ids to leave out");
  cp->add_option("--out", cp_out, "Volume file")->required();
  cp->add_option("--spacing", cp_spacing, "Voxel size (mm)");
  cp->add_option("--mode", cp_mode, "max|mean");
  common(cp);

  // slice
  auto* sl = app.add_subcommand("slice", "Reslice a compounded volume at given poses");
  std::string sl_vol, sl_poses, sl_out;
  FrameFlags sl_frame;
  sl->add_option("--vol", sl_vol, "Volume file")->required();
  sl->add_option("--pose-file", sl_poses, "Poses")->required();
  sl->add_option("--out", sl_out, "Output .pgm (single pose) or directory")->required();
  add_frame(sl, sl_frame);
  common(sl);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every operation and the render pipeline");
  std::uint64_t gc_seed = 1;
  int gc_points = 5;
  gc->add_option("--seed", gc_seed, "Seed for the random points");
  gc->add_option("--points", gc_points, "Random points per case");
  common(gc);

  if (args.empty()) {
    err << app.help();
    return kValidation;
  }

  try {
    std::vector<std::string> full = args;
    // Config-file values go right after the subcommand so later flags override them.
    for (std::size_t i = 1; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
      if (path.empty()) continue;
      auto* sub = app.get_subcommand_no_throw(args[0]);
      if (!sub) throw ConfigError("--config needs a subcommand first");
      auto tokens = config_tokens(path);
      for (const auto& t : tokens) {
        const auto key = t.substr(2, t.find('=') - 2);
        if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr)
          throw ConfigError(path + ": unknown key '" + key + "' for " + args[0]);
      }
      full.insert(full.begin() + 1, tokens.begin(), tokens.end());
      break;
    }
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  CLI::App* sub = app.get_subcommands().front();
  err << resolved_config(sub);
  set_max_threads(threads);

  try {
    if (sub == sim) {
      auto mode = render::sampling_mode_from_string(sim_mode);
      auto spec = phantom_file.empty() ? phantom::PhantomSpec::layered_reflector() : phantom::PhantomSpec::load(phantom_file);
      phantom::TrajectorySpec ts;
      ts.frames_per_sweep = frames_per_sweep;
      ts.center_z = center_z;
      ts.sweeps = parse_sweeps(sweeps);
      if (!tilts.empty()) {
        std::vector<phantom::SweepPlan> plans;
        for (const auto& t : split(tilts, ',')) plans.push_back({parse_double(t, "tilt"), tilt_step, phantom::Split::train});
        for (const auto& p : ts.sweeps)
          if (p.split != phantom::Split::train) plans.push_back(p);
        ts.sweeps = std::move(plans);
      }
      const FrameSpec frame = sim_frame.spec();
      data::SimulationConfig sc;
      sc.render.mode = mode;
      sc.render.seed = sim_seed;
      sc.render.scatter_noise = sim_noise;
      sc.render.psf = sim_psf.kernel();
      sc.keep_ground_truth = !no_gt;
      sc.render.axial_step = frame.axial_spacing;
      sc.render.validate();
      const auto trajectories = phantom::make_trajectories(ts, frame);
      const auto vol = phantom::build_phantom(spec, voxel);
      const auto ds = data::simulate_dataset(vol, trajectories, frame, sc);
      data::save_dataset(ds, sim_out);
      out << "wrote " << ds.sweeps.size() << " sweeps to " << sim_out << "\n";
    } else if (sub == tr) {
      tc.model.variant = train::variant_from_string(variant);
      tc.render.mode = render::sampling_mode_from_string(tr_mode);
      tc.render.psf = tr_psf.kernel();
      tc.validate();
      const auto ds = data::load_dataset(tr_data);
      auto progress = [&](int it, double loss) {
        if (log_every > 0 && ((it + 1) % log_every == 0 || it == 0)) {
          char buf[96];
          std::snprintf(buf, sizeof buf, "iter %d loss %.6f\n", it + 1, loss);
          err << buf;
        }
      };
      auto result = train::train(ds, tc, progress, tr_out);
      result.checkpoint.save(tr_out);
      if (!loss_log.empty()) {
        std::ofstream lf(loss_log);
        if (!lf) throw DataError(loss_log + ": cannot write loss log");
        char buf[64];
        for (std::size_t i = 0; i < result.loss_log.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", i, result.loss_log[i]);
          lf << buf;
        }
      }
      out << "wrote " << tr_out << " after " << result.checkpoint.iteration << " iterations\n";
    } else if (sub == rd) {
      const auto mode = render::sampling_mode_from_string(rd_mode);
      const auto ckpt = train::Checkpoint::load(rd_ckpt);
      const auto poses = read_pose_file(rd_poses);
      std::vector<Frame> frames(poses.size());
      std::vector<train::NovelView> views(poses.size());
      parallel_for(poses.size(),
                   [&](std::size_t i) { views[i] = train::render_novel_view(ckpt, poses[i], ckpt.frame, mode, rd_frame_id + i); });
      for (std::size_t i = 0; i < views.size(); ++i) frames[i] = views[i].image;
      write_frames(rd_out, frames);
      if (!rd_maps.empty()) {
        if (!views.empty() && !views[0].params) throw ConfigError("baseline checkpoints have no maps to export");
        char prefix[32];
        for (std::size_t i = 0; i < views.size(); ++i) {
          std::snprintf(prefix, sizeof prefix, "frame_%04d", static_cast<int>(i));
          train::export_maps(rd_maps, prefix, *views[i].params, views[i].maps);
        }
      }
      out << "rendered " << frames.size() << " views\n";
    } else if (sub == ev) {
      const auto ckpt = train::Checkpoint::load(ev_ckpt);
      const auto ds = data::load_dataset(ev_data);
      const auto rows = train::evaluate(ckpt, ds);
      if (ev_out.empty()) {
        train::write_eval_tsv(out, rows);
      } else {
        std::ofstream f(ev_out, std::ios::binary);
        if (!f) throw DataError(ev_out + ": cannot write table");
        train::write_eval_tsv(f, rows);
        train::write_eval_tsv(out, rows);
      }
    } else if (sub == dc) {
      const auto ckpt = train::Checkpoint::load(dc_ckpt);
      if (ckpt.variant != train::ModelVariant::ultra)
        throw ConfigError(dc_ckpt + ": decompose needs an ultra checkpoint");
      const auto poses = read_pose_file(dc_poses);
      std::vector<train::NovelView> views(poses.size());
      parallel_for(poses.size(), [&](std::size_t i) { views[i] = train::render_novel_view(ckpt, poses[i], ckpt.frame); });
      char prefix[32];
      for (std::size_t i = 0; i < views.size(); ++i) {
        std::snprintf(prefix, sizeof prefix, "frame_%04d", static_cast<int>(i));
        train::export_maps(dc_out, prefix, *views[i].params, views[i].maps);
      }
      out << "decomposed " << views.size() << " views into " << dc_out << "\n";
    } else if (sub == cp) {
      const auto mode = compound::mode_from_string(cp_mode);
      const auto ds = data::load_dataset(cp_data);
      std::vector<int> excluded;
      for (const auto& s : split(cp_exclude, ',')) excluded.push_back(static_cast<int>(parse_double(s, "sweep id")));
      for (int id : excluded)
        if (std::none_of(ds.sweeps.begin(), ds.sweeps.end(), [id](const auto& s) { return s.id == id; }))
          throw ConfigError("--exclude-sweeps: no sweep with id " + std::to_string(id));
      std::vector<const data::Sweep*> chosen;
      for (const auto& s : ds.sweeps)
        if (std::find(excluded.begin(), excluded.end(), s.id) == excluded.end()) chosen.push_back(&s);
      const auto vol = compound::compound(chosen, ds.frame, cp_spacing, mode);
      vol.save(cp_out);
      out << "compounded " << chosen.size() << " sweeps into " << vol.dims[0] << "x" << vol.dims[1] << "x"
          << vol.dims[2] << " voxels\n";
    } else if (sub == sl) {
      const FrameSpec frame = sl_frame.spec();
      const auto vol = compound::IntensityVolume::load(sl_vol);
      const auto poses = read_pose_file(sl_poses);
      std::vector<Frame> frames(poses.size());
      parallel_for(poses.size(), [&](std::size_t i) { frames[i] = compound::slice(vol, poses[i], frame); });
      write_frames(sl_out, frames);
      out << "sliced " << frames.size() << " views\n";
    } else if (sub == gc) {
      const auto cases = diff::run_gradcheck_suite(gc_seed, gc_points);
      bool all = true;
      char buf[160];
      for (const auto& c : cases) {
        std::snprintf(buf, sizeof buf, "%-22s f64 %.3e  f32 %.3e  %s\n", c.name.c_str(), c.max_error_64, c.max_error_32,
                      c.passed ? "PASS" : "FAIL");
        out << buf;
        all = all && c.passed;
      }
      return all ? kOk : kRuntime;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace unerf::cli
