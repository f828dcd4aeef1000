#include "ultranerf/renderer.hpp"

#include <cmath>

#include "ultranerf/error.hpp"

namespace unerf::render {

std::string to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::hard: return "hard";
    case SamplingMode::relaxed: return "relaxed";
    case SamplingMode::expected: return "expected";
  }
  return "?";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "hard") return SamplingMode::hard;
  if (s == "relaxed") return SamplingMode::relaxed;
  if (s == "expected") return SamplingMode::expected;
  throw ConfigError("unknown sampling mode '" + s + "' (hard|relaxed|expected)");
}

diff::Kernel2D gaussian_psf(std::size_t rows, std::size_t cols, double sigma_lateral, double sigma_axial) {
  if (rows % 2 == 0 || cols % 2 == 0) throw ConfigError("psf dimensions must be odd");
  diff::Kernel2D k{rows, cols, std::vector<double>(rows * cols)};
  const auto hr = static_cast<double>(rows / 2), hc = static_cast<double>(cols / 2);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - hr, dc = static_cast<double>(c) - hc;
      const double v = std::exp(-0.5 * (dr * dr / (sigma_lateral * sigma_lateral) + dc * dc / (sigma_axial * sigma_axial)));
      k.weights[r * cols + c] = v;
      total += v;
    }
  }
  for (auto& v : k.weights) v /= total;
  return k;
}

void RenderConfig::validate() const {
  if (psf.rows % 2 == 0 || psf.cols % 2 == 0 || psf.weights.size() != psf.rows * psf.cols)
    throw ConfigError("psf must be an odd-sized 2D kernel");
  for (double w : psf.weights)
    if (w < 0.0) throw ConfigError("psf entries must be non-negative");
  if (std::abs(psf.sum() - 1.0) > 1e-6) throw ConfigError("psf must sum to 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(axial_step > 0.0)) throw ConfigError("axial step must be positive");
  if (!(frequency >= 0.0)) throw ConfigError("frequency must be non-negative");
}

template <class T>
diff::Tensor<T> sample_indicator(const diff::Tensor<T>& prob, SamplingMode mode, double temperature,
                                 const rng::CounterKey& key) {
  auto pv = prob.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = static_cast<double>(pv[i]);
    if (!(p >= -1e-6 && p <= 1.0 + 1e-6))
      throw ConfigError("sample_indicator: probability " + std::to_string(p) + " outside [0, 1] at element " +
                        std::to_string(i));
  }
  switch (mode) {
    case SamplingMode::expected:
      return prob;
    case SamplingMode::hard: {
      std::vector<T> draw(pv.size());
      for (std::size_t i = 0; i < pv.size(); ++i) draw[i] = key.uniform(i) < static_cast<double>(pv[i]) ? T(1) : T(0);
      return diff::straight_through(prob, std::move(draw));
    }
    case SamplingMode::relaxed: {
      std::vector<double> noise(pv.size());
      for (std::size_t i = 0; i < pv.size(); ++i) noise[i] = key.logistic(i);
      return diff::relaxed_bernoulli(prob, noise, temperature);
    }
  }
  return prob;
}

template <class T>
diff::Tensor<T> scatter_template(const diff::Tensor<T>& scatterers, const diff::Tensor<T>& amplitude, bool noise,
                                 const rng::CounterKey& key) {
  if (scatterers.shape() != amplitude.shape())
    throw ShapeError("scatter_template: " + scatterers.shape().str() + " vs " + amplitude.shape().str());
  if (!noise) return scatterers * amplitude;
  std::vector<T> eps(amplitude.numel());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(key.normal(i));
  auto& g = amplitude.graph();
  return scatterers * (amplitude + g.constant(amplitude.shape(), std::move(eps)));
}

template <class T>
diff::Tensor<T> transmission(const diff::Tensor<T>& beta, const diff::Tensor<T>& border, const diff::Tensor<T>& alpha,
                             const RenderConfig& cfg) {
  if (beta.shape() != border.shape() || beta.shape() != alpha.shape())
    throw ShapeError("transmission: " + beta.shape().str() + ", " + border.shape().str() + ", " + alpha.shape().str());
  // (1 - beta G) * exp(-alpha f dt) per step, accumulated exclusively so I(0) = I0.
  auto boundary = diff::affine(beta * border, T(-1), T(1));
  auto atten = diff::exp(diff::affine(alpha, static_cast<T>(-cfg.frequency * cfg.axial_step)));
  auto transmitted = diff::cumprod_depth(boundary * atten, true);
  if (cfg.initial_intensity == 1.0) return transmitted;
  return diff::affine(transmitted, static_cast<T>(cfg.initial_intensity));
}

template <class T>
diff::Tensor<T> reflection_term(const diff::Tensor<T>& transmission, const diff::Tensor<T>& beta,
                                const diff::Tensor<T>& border, const diff::Kernel2D& psf) {
  return diff::abs(transmission * beta) * diff::conv2d_same(border, psf);
}

template <class T>
diff::Tensor<T> backscatter_term(const diff::Tensor<T>& transmission, const diff::Tensor<T>& scatter_map,
                                 const diff::Kernel2D& psf) {
  return transmission * diff::conv2d_same(scatter_map, psf);
}

template <class T>
RenderTensors<T> render_frame(const ParamTensors<T>& p, const RenderConfig& cfg, std::uint64_t frame_id) {
  const auto& s = p.alpha.shape();
  for (const auto* t : {&p.beta, &p.border, &p.density, &p.amplitude})
    if (t->shape() != s) throw ShapeError("render_frame: parameter maps differ: " + s.str() + " vs " + t->shape().str());
  if (s.rank() != 2) throw ShapeError("render_frame: parameter maps must be [W x D], got " + s.str());

  const rng::CounterKey border_key{cfg.seed, frame_id, rng::MapKind::border};
  const rng::CounterKey scatter_key{cfg.seed, frame_id, rng::MapKind::scatterer};
  const rng::CounterKey amplitude_key{cfg.seed, frame_id, rng::MapKind::amplitude};

  RenderTensors<T> out;
  out.border = sample_indicator(p.border, cfg.mode, cfg.temperature, border_key);
  out.scatterers = sample_indicator(p.density, cfg.mode, cfg.temperature, scatter_key);
  out.scatter_map = scatter_template(out.scatterers, p.amplitude, cfg.scatter_noise, amplitude_key);
  out.transmission = transmission(p.beta, out.border, p.alpha, cfg);
  out.reflection = reflection_term(out.transmission, p.beta, out.border, cfg.psf);
  out.backscatter = backscatter_term(out.transmission, out.scatter_map, cfg.psf);
  out.image = out.reflection + out.backscatter;
  return out;
}

// ---------------------------------------------------------------------------

const Frame& ParamMaps::channel(int c) const {
  switch (c) {
    case 0: return alpha;
    case 1: return beta;
    case 2: return border;
    case 3: return density;
    default: return amplitude;
  }
}

Frame& ParamMaps::channel(int c) {
  return const_cast<Frame&>(static_cast<const ParamMaps&>(*this).channel(c));
}

void ParamMaps::validate() const {
  for (int c = 1; c < 5; ++c)
    if (!channel(c).same_shape(alpha))
      throw ShapeError(std::string("parameter map ") + kNames[c] + " differs in shape from alpha");
  for (float v : alpha.values)
    if (!(v >= 0.0f)) throw ConfigError("alpha must be non-negative");
  for (int c = 1; c < 5; ++c)
    for (float v : channel(c).values)
      if (!(v >= -1e-6f && v <= 1.0f + 1e-6f)) throw ConfigError(std::string(kNames[c]) + " must lie in [0, 1]");
}

const Frame& IntermediateMaps::channel(int c) const {
  switch (c) {
    case 0: return border;
    case 1: return scatterers;
    case 2: return scatter_map;
    case 3: return transmission;
    case 4: return reflection;
    default: return backscatter;
  }
}

Frame to_frame(std::span<const float> values, std::size_t width, std::size_t depth) {
  Frame f(width, depth);
  std::copy(values.begin(), values.end(), f.values.begin());
  return f;
}

template <class T>
Frame to_frame(const diff::Tensor<T>& t) {
  const auto& s = t.shape();
  if (s.rank() != 2) throw ShapeError("to_frame: expected [W x D], got " + s.str());
  Frame f(s[0], s[1]);
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) f.values[i] = static_cast<float>(v[i]);
  return f;
}

Rendered render_frame(const ParamMaps& params, const RenderConfig& cfg, std::uint64_t frame_id) {
  params.validate();
  cfg.validate();
  diff::Graph<float> g(false);
  const diff::Shape shape{params.alpha.width, params.alpha.depth};
  ParamTensors<float> p{g.constant(shape, std::span<const float>(params.alpha.values)),
                        g.constant(shape, std::span<const float>(params.beta.values)),
                        g.constant(shape, std::span<const float>(params.border.values)),
                        g.constant(shape, std::span<const float>(params.density.values)),
                        g.constant(shape, std::span<const float>(params.amplitude.values))};
  auto r = render_frame(p, cfg, frame_id);
  return {to_frame(r.image),
          {to_frame(r.border), to_frame(r.scatterers), to_frame(r.scatter_map), to_frame(r.transmission),
           to_frame(r.reflection), to_frame(r.backscatter)}};
}

#define UNERF_INSTANTIATE_RENDER(T)                                                                             \
  template diff::Tensor<T> sample_indicator<T>(const diff::Tensor<T>&, SamplingMode, double,                    \
                                               const rng::CounterKey&);                                         \
  template diff::Tensor<T> scatter_template<T>(const diff::Tensor<T>&, const diff::Tensor<T>&, bool,            \
                                               const rng::CounterKey&);                                         \
  template diff::Tensor<T> transmission<T>(const diff::Tensor<T>&, const diff::Tensor<T>&,                      \
                                           const diff::Tensor<T>&, const RenderConfig&);                        \
  template diff::Tensor<T> reflection_term<T>(const diff::Tensor<T>&, const diff::Tensor<T>&,                   \
                                              const diff::Tensor<T>&, const diff::Kernel2D&);                   \
  template diff::Tensor<T> backscatter_term<T>(const diff::Tensor<T>&, const diff::Tensor<T>&,                  \
                                               const diff::Kernel2D&);                                          \
  template RenderTensors<T> render_frame<T>(const ParamTensors<T>&, const RenderConfig&, std::uint64_t);        \
  template Frame to_frame<T>(const diff::Tensor<T>&);

UNERF_INSTANTIATE_RENDER(float)
UNERF_INSTANTIATE_RENDER(double)
UNERF_INSTANTIATE_RENDER(long double)

}  // namespace unerf::render
