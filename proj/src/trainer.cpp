#include "ultranerf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "ultranerf/error.hpp"
#include "ultranerf/image_io.hpp"
#include "ultranerf/parallel.hpp"

namespace unerf::train {

namespace {

struct FrameRef {
  const data::Sweep* sweep;
  std::size_t index;
};

std::vector<FrameRef> training_frames(const data::Dataset& ds) {
  std::vector<FrameRef> out;
  for (const auto* s : ds.select(phantom::Split::train))
    for (std::size_t i = 0; i < s->frames.size(); ++i) out.push_back({s, i});
  return out;
}

diff::Shape frame_shape(const FrameSpec& f) {
  return diff::Shape{static_cast<std::size_t>(f.width), static_cast<std::size_t>(f.depth)};
}

/// Adaptive-moment update on flat arrays.
class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& cfg) : m_(n, 0.0f), v_(n, 0.0f), cfg_(cfg) {}

  void step(std::vector<float>& params, std::span<const float> grad, double lr) {
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const auto step = static_cast<float>(lr * std::sqrt(c2) / c1);
    const auto eps = static_cast<float>(cfg_.adam_epsilon * std::sqrt(c2));
    const auto fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const float g = grad[i];
      m_[i] = fb1 * m_[i] + (1.0f - fb1) * g;
      v_[i] = fb2 * v_[i] + (1.0f - fb2) * g * g;
      params[i] -= step * m_[i] / (std::sqrt(v_[i]) + eps);
    }
  }

 private:
  std::vector<float> m_, v_;
  const TrainConfig& cfg_;
  std::uint64_t t_ = 0;
};

/// Keeps large per-iteration buffers on the heap instead of fresh mmaps,
/// which otherwise page-fault on every training step.
void retain_heap() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

template <class T>
std::vector<T> encode_points(const Checkpoint& ckpt, std::span<const Vec3> points) {
  std::vector<Vec3> normalized(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) normalized[i] = ckpt.bounds.normalize(points[i]);
  return inr::encode_batch<T>(normalized, ckpt.encoding);
}

template <class T>
diff::Tensor<T> field_from_encoding(diff::Graph<T>& g, std::span<const inr::LayerParams<T>> layers,
                                    const Checkpoint& ckpt, std::span<const T> encoded) {
  const auto dim = static_cast<std::size_t>(ckpt.encoding.encoded_dim(3));
  auto x = g.constant(diff::Shape{encoded.size() / dim, dim}, std::vector<T>(encoded.begin(), encoded.end()));
  return inr::mlp_forward(ckpt.weights.config, layers, x);
}

template <class T>
diff::Tensor<T> predict_raw(diff::Tensor<T> raw, const Checkpoint& ckpt, const render::RenderConfig& rc,
                            std::uint64_t frame_id, render::RenderTensors<T>* maps_out) {
  const auto shape = frame_shape(ckpt.frame);
  if (ckpt.variant == ModelVariant::baseline) return diff::reshape(diff::sigmoid(raw), shape);
  auto tissue = inr::tissue_activation(raw);
  render::ParamTensors<T> p{diff::reshape(tissue.alpha, shape), diff::reshape(tissue.beta, shape),
                            diff::reshape(tissue.border, shape), diff::reshape(tissue.density, shape),
                            diff::reshape(tissue.amplitude, shape)};
  auto r = render::render_frame(p, rc, frame_id);
  if (maps_out) *maps_out = r;
  return r.image;
}

template <class T>
diff::Tensor<T> predict(diff::Graph<T>& g, std::span<const inr::LayerParams<T>> layers, const Checkpoint& ckpt,
                        std::span<const Vec3> points, const render::RenderConfig& rc, std::uint64_t frame_id,
                        render::RenderTensors<T>* maps_out) {
  return predict_raw(query_field(g, layers, ckpt, points), ckpt, rc, frame_id, maps_out);
}

}  // namespace

VolumeBounds training_bounds(const data::Dataset& ds) {
  bool any = false;
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  for (const auto* s : ds.select(phantom::Split::train)) {
    for (const auto& pose : s->poses) {
      // Frame grids are parallelograms: their corners bound every sample.
      const double w = (ds.frame.width - 1) * ds.frame.lateral_spacing;
      const double d = (ds.frame.depth - 1) * ds.frame.axial_spacing;
      for (const Vec3& c : {Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, d, 0), Vec3(w, d, 0)}) {
        const Vec3 p = pose.apply_point(c);
        lo = any ? lo.cwiseMin(p) : p;
        hi = any ? hi.cwiseMax(p) : p;
        any = true;
      }
    }
  }
  if (!any) throw ConfigError("dataset has no training frames");
  const std::array<Vec3, 2> corners{lo, hi};
  return VolumeBounds::enclosing(corners, 0.05);
}

Checkpoint initial_checkpoint(const data::Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint c;
  c.variant = cfg.model.variant;
  c.encoding = cfg.model.encoding;
  c.weights = inr::init_weights(cfg.seed, cfg.model.mlp());
  c.bounds = training_bounds(ds);
  c.frame = ds.frame;
  c.train = cfg;
  c.train.render.axial_step = ds.frame.axial_spacing;
  c.train.render.seed = cfg.seed;
  c.iteration = 0;
  return c;
}

template <class T>
diff::Tensor<T> query_field(diff::Graph<T>& g, std::span<const inr::LayerParams<T>> layers, const Checkpoint& ckpt,
                            std::span<const Vec3> points) {
  const auto encoded = encode_points<T>(ckpt, points);
  return field_from_encoding(g, layers, ckpt, std::span<const T>(encoded));
}

TrainResult train(const data::Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress,
                  const std::filesystem::path& periodic_checkpoint) {
  TrainResult result{initial_checkpoint(ds, cfg), {}};
  Checkpoint& ckpt = result.checkpoint;
  const auto frames = training_frames(ds);
  const render::RenderConfig& rc = ckpt.train.render;

  std::vector<float> params = ckpt.weights.flatten();
  Adam adam(params.size(), cfg);
  std::mt19937_64 order_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(frames.size());
  std::size_t cursor = order.size();

  retain_heap();
  std::vector<std::vector<float>> encoding_cache(frames.size());
  auto encoding_of = [&](std::size_t f) -> std::span<const float> {
    if (encoding_cache[f].empty())
      encoding_cache[f] = encode_points<float>(ckpt, frame_grid(frames[f].sweep->poses[frames[f].index], ds.frame));
    return encoding_cache[f];
  };

  const auto shape = frame_shape(ds.frame);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double lr = cfg.learning_rate * std::pow(0.5, static_cast<double>(it / cfg.lr_halving_interval));
    diff::Graph<float> g;
    auto layers = inr::bind_weights(g, ckpt.weights, true);
    std::optional<diff::Tensor<float>> total;
    for (int b = 0; b < cfg.frames_per_batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const std::size_t f = order[cursor++];
      const auto frame_id = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(cfg.frames_per_batch) +
                            static_cast<std::uint64_t>(b);
      auto raw = field_from_encoding(g, std::span<const inr::LayerParams<float>>(layers), ckpt, encoding_of(f));
      auto pred = predict_raw<float>(raw, ckpt, rc, frame_id, nullptr);
      auto target = g.constant(shape, std::span<const float>(frames[f].sweep->frames[frames[f].index].values));
      auto loss = metrics::combined_loss(pred, target, cfg.loss);
      total = total ? *total + loss : loss;
    }
    auto loss = cfg.frames_per_batch == 1 ? *total : diff::affine(*total, 1.0f / static_cast<float>(cfg.frames_per_batch));
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) throw TrainingError("non-finite loss at iteration " + std::to_string(it));
    auto grads = g.backward(loss);
    std::vector<float> flat;
    flat.reserve(params.size());
    for (const auto& l : layers) {
      auto gw = grads.of(l.weight);
      auto gb = grads.of(l.bias);
      flat.insert(flat.end(), gw.begin(), gw.end());
      flat.insert(flat.end(), gb.begin(), gb.end());
    }
    adam.step(params, flat, lr);
    ckpt.weights.assign(params);
    ckpt.iteration = static_cast<std::uint64_t>(it + 1);
    result.loss_log.push_back(value);
    if (progress) progress(it, value);
    if (cfg.checkpoint_interval > 0 && !periodic_checkpoint.empty() && (it + 1) % cfg.checkpoint_interval == 0)
      ckpt.save(periodic_checkpoint);
  }
  return result;
}

NovelView render_novel_view(const Checkpoint& ckpt, const Pose& pose, const FrameSpec& frame,
                            render::SamplingMode mode, std::uint64_t frame_id) {
  if (!(frame == ckpt.frame)) throw ShapeError("frame spec differs from the checkpoint's training frame spec");
  const auto grid = frame_grid(pose, frame);
  diff::Graph<float> g(false);
  auto layers = inr::bind_weights(g, ckpt.weights, false);
  render::RenderConfig rc = ckpt.train.render;
  rc.mode = mode;
  NovelView out;
  if (ckpt.variant == ModelVariant::baseline) {
    out.image = render::to_frame(predict<float>(g, layers, ckpt, grid, rc, frame_id, nullptr));
    return out;
  }
  render::RenderTensors<float> maps;
  auto raw = query_field(g, std::span<const inr::LayerParams<float>>(layers), ckpt, grid);
  auto tissue = inr::tissue_activation(raw);
  const auto shape = frame_shape(frame);
  render::ParamTensors<float> p{diff::reshape(tissue.alpha, shape), diff::reshape(tissue.beta, shape),
                                diff::reshape(tissue.border, shape), diff::reshape(tissue.density, shape),
                                diff::reshape(tissue.amplitude, shape)};
  auto r = render::render_frame(p, rc, frame_id);
  out.image = render::to_frame(r.image);
  out.maps = render::IntermediateMaps{render::to_frame(r.border),       render::to_frame(r.scatterers),
                                      render::to_frame(r.scatter_map),  render::to_frame(r.transmission),
                                      render::to_frame(r.reflection),   render::to_frame(r.backscatter)};
  out.params = render::ParamMaps{render::to_frame(p.alpha), render::to_frame(p.beta), render::to_frame(p.border),
                                 render::to_frame(p.density), render::to_frame(p.amplitude)};
  return out;
}

render::ParamMaps decompose(const Checkpoint& ckpt, const Pose& pose, const FrameSpec& frame) {
  if (ckpt.variant != ModelVariant::ultra)
    throw ConfigError("decompose needs an ultra checkpoint; the baseline has no tissue parameters");
  return *render_novel_view(ckpt, pose, frame, render::SamplingMode::expected).params;
}

std::vector<EvalRow> evaluate(const Checkpoint& ckpt, const data::Dataset& test) {
  if (!(test.frame == ckpt.frame)) throw ShapeError("dataset frame spec differs from the checkpoint frame spec");
  std::vector<EvalRow> rows;
  for (const auto* s : test.select(phantom::Split::test)) {
    if (s->frames.size() != s->poses.size())
      throw DataError("sweep " + std::to_string(s->id) + ": frame and pose counts differ");
    std::vector<Frame> rendered(s->poses.size());
    parallel_for(rendered.size(), [&](std::size_t i) {
      rendered[i] = render_novel_view(ckpt, s->poses[i], test.frame, render::SamplingMode::expected).image;
    });
    rows.push_back({s->id, s->view, metrics::sweep_ssim_stats(rendered, s->frames, ckpt.train.loss.ssim)});
  }
  return rows;
}

void write_eval_tsv(std::ostream& os, std::span<const EvalRow> rows) {
  os << "sweep_id\tview_kind\tmedian_ssim\tmean_ssim\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.sweep_id << '\t' << phantom::to_string(r.view) << '\t';
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f\n", r.stats.median, r.stats.mean);
    os << buf;
  }
}

void export_maps(const std::filesystem::path& dir, const std::string& prefix, const render::ParamMaps& params,
                 const std::optional<render::IntermediateMaps>& maps) {
  std::filesystem::create_directories(dir);
  std::ofstream ranges(dir / (prefix + "_ranges.txt"), std::ios::binary);
  if (!ranges) throw DataError((dir / (prefix + "_ranges.txt")).string() + ": cannot write");
  char buf[128];
  auto emit = [&](const std::string& name, const Frame& f) {
    float lo = 0, hi = 0;
    io::write_pgm(dir / (prefix + "_" + name + ".pgm"), io::normalized(f, lo, hi));
    std::snprintf(buf, sizeof buf, "%s %.9g %.9g\n", name.c_str(), static_cast<double>(lo), static_cast<double>(hi));
    ranges << buf;
  };
  for (int c = 0; c < 5; ++c) emit(render::ParamMaps::kNames[c], params.channel(c));
  if (maps)
    for (int c = 0; c < 6; ++c) emit(render::IntermediateMaps::kNames[c], maps->channel(c));
}

template diff::Tensor<float> query_field<float>(diff::Graph<float>&, std::span<const inr::LayerParams<float>>,
                                                const Checkpoint&, std::span<const Vec3>);
template diff::Tensor<double> query_field<double>(diff::Graph<double>&, std::span<const inr::LayerParams<double>>,
                                                  const Checkpoint&, std::span<const Vec3>);

}  // namespace unerf::train
