#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "ultranerf/checkpoint.hpp"
#include "ultranerf/dataset.hpp"

namespace unerf::train {

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_log;  // one entry per iteration
};

/// Called after every iteration with (iteration, loss).
using ProgressFn = std::function<void(int, double)>;

/// Bounding box of every training sample point, grown by 5%.
VolumeBounds training_bounds(const data::Dataset& ds);

/// Checkpoint holding freshly initialized weights (iteration 0).
Checkpoint initial_checkpoint(const data::Dataset& ds, const TrainConfig& cfg);

/// Whole-frame training: each iteration renders one or more training frames
/// over their full sample grid and takes one Adam step on the combined loss.
/// Frames are visited round-robin over a seeded shuffle. Throws
/// TrainingError on a non-finite loss.
TrainResult train(const data::Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress = {},
                  const std::filesystem::path& periodic_checkpoint = {});

/// Raw network output over a frame grid, [W*D x out] row-major.
template <class T>
diff::Tensor<T> query_field(diff::Graph<T>& g, std::span<const inr::LayerParams<T>> layers, const Checkpoint& ckpt,
                            std::span<const Vec3> points);

struct NovelView {
  Frame image;
  std::optional<render::IntermediateMaps> maps;  // absent for the baseline
  std::optional<render::ParamMaps> params;       // absent for the baseline
};

NovelView render_novel_view(const Checkpoint& ckpt, const Pose& pose, const FrameSpec& frame,
                            render::SamplingMode mode = render::SamplingMode::expected, std::uint64_t frame_id = 0);

/// Tissue parameter maps over the view grid. Throws ConfigError for a baseline checkpoint.
render::ParamMaps decompose(const Checkpoint& ckpt, const Pose& pose, const FrameSpec& frame);

struct EvalRow {
  int sweep_id = 0;
  phantom::ViewKind view = phantom::ViewKind::perpendicular;
  metrics::SweepSsimStats stats;
};

/// Renders every test pose in expected mode and compares with the reference frames.
std::vector<EvalRow> evaluate(const Checkpoint& ckpt, const data::Dataset& test);

/// Columns: sweep_id, view_kind, median_ssim, mean_ssim.
void write_eval_tsv(std::ostream& os, std::span<const EvalRow> rows);

/// Writes <prefix>_<map>.pgm for every parameter and intermediate map plus
/// <prefix>_ranges.txt listing "map min max" for the per-map normalization.
void export_maps(const std::filesystem::path& dir, const std::string& prefix, const render::ParamMaps& params,
                 const std::optional<render::IntermediateMaps>& maps);

}  // namespace unerf::train
