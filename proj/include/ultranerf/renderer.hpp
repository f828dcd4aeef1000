#pragma once

// Differentiable ultrasound B-mode rendering along parallel scanlines.
//
// For every scanline r and depth sample t:
//   E = R + B
//   R = |I * beta| * (PSF (x) G)
//   B = I * (PSF (x) T),            T = H * phi
//   I(t) = I0 * prod_{n<t} (1 - beta_n G_n) * exp(-sum_{n<t} alpha_n f dt)
// G and H are border / scatterer indicators drawn from rho_b and rho_s.

#include <cstdint>
#include <optional>
#include <string>

#include "ultranerf/diff.hpp"
#include "ultranerf/frame.hpp"
#include "ultranerf/rng.hpp"

namespace unerf::render {

enum class SamplingMode { hard, relaxed, expected };

std::string to_string(SamplingMode m);
SamplingMode sampling_mode_from_string(const std::string& s);

/// Normalized separable Gaussian; rows run laterally, columns axially.
diff::Kernel2D gaussian_psf(std::size_t rows = 5, std::size_t cols = 5, double sigma_lateral = 1.0,
                            double sigma_axial = 0.75);

struct RenderConfig {
  double frequency = 1.0;
  double axial_step = 0.5;  // dt in mm, taken from the frame spec
  double initial_intensity = 1.0;
  diff::Kernel2D psf = gaussian_psf();
  SamplingMode mode = SamplingMode::hard;
  double temperature = 0.1;
  bool scatter_noise = false;  // T = H * (phi + N(0, 1)) instead of H * phi
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-frame tensors, each shaped [W x D].
template <class T>
struct ParamTensors {
  diff::Tensor<T> alpha;
  diff::Tensor<T> beta;
  diff::Tensor<T> border;
  diff::Tensor<T> density;
  diff::Tensor<T> amplitude;
};

template <class T>
struct RenderTensors {
  diff::Tensor<T> image;         // E
  diff::Tensor<T> border;        // G
  diff::Tensor<T> scatterers;    // H
  diff::Tensor<T> scatter_map;   // T
  diff::Tensor<T> transmission;  // I
  diff::Tensor<T> reflection;    // R
  diff::Tensor<T> backscatter;   // B
};

/// Hard: Bernoulli draw with straight-through gradient. Relaxed: binary
/// concrete at cfg temperature. Expected: the probability map itself.
template <class T>
diff::Tensor<T> sample_indicator(const diff::Tensor<T>& prob, SamplingMode mode, double temperature,
                                 const rng::CounterKey& key);

template <class T>
diff::Tensor<T> scatter_template(const diff::Tensor<T>& scatterers, const diff::Tensor<T>& amplitude, bool noise,
                                 const rng::CounterKey& key);

template <class T>
diff::Tensor<T> transmission(const diff::Tensor<T>& beta, const diff::Tensor<T>& border, const diff::Tensor<T>& alpha,
                             const RenderConfig& cfg);

template <class T>
diff::Tensor<T> reflection_term(const diff::Tensor<T>& transmission, const diff::Tensor<T>& beta,
                                const diff::Tensor<T>& border, const diff::Kernel2D& psf);

template <class T>
diff::Tensor<T> backscatter_term(const diff::Tensor<T>& transmission, const diff::Tensor<T>& scatter_map,
                                 const diff::Kernel2D& psf);

/// Stochastic draws are keyed by (cfg.seed, frame_id, map kind, element).
template <class T>
RenderTensors<T> render_frame(const ParamTensors<T>& params, const RenderConfig& cfg, std::uint64_t frame_id);

// ---------------------------------------------------------------------------
// Plain-data interface

struct ParamMaps {
  Frame alpha, beta, border, density, amplitude;

  static constexpr const char* kNames[5] = {"alpha", "beta", "rho_b", "rho_s", "phi"};
  const Frame& channel(int c) const;
  Frame& channel(int c);
  void validate() const;
};

struct IntermediateMaps {
  Frame border, scatterers, scatter_map, transmission, reflection, backscatter;

  static constexpr const char* kNames[6] = {"G", "H", "T", "I", "R", "B"};
  const Frame& channel(int c) const;
};

struct Rendered {
  Frame image;
  IntermediateMaps maps;
};

/// Forward-only render on a non-recording graph. Same code path as training.
Rendered render_frame(const ParamMaps& params, const RenderConfig& cfg, std::uint64_t frame_id = 0);

Frame to_frame(std::span<const float> values, std::size_t width, std::size_t depth);
template <class T>
Frame to_frame(const diff::Tensor<T>& t);

}  // namespace unerf::render
