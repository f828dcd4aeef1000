#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ultranerf/geometry.hpp"
#include "ultranerf/inr.hpp"
#include "ultranerf/metrics.hpp"
#include "ultranerf/renderer.hpp"

namespace unerf::train {

enum class ModelVariant { ultra, baseline };

std::string to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);

struct ModelConfig {
  ModelVariant variant = ModelVariant::ultra;
  inr::EncodingConfig encoding;
  int hidden_layers = 8;
  int width = 256;
  int skip_layer = 5;

  /// Five tissue channels for ultra, one intensity channel for the baseline.
  inr::MlpConfig mlp() const;
};

struct TrainConfig {
  ModelConfig model;
  int iterations = 2000;
  int frames_per_batch = 1;
  double learning_rate = 5e-4;
  int lr_halving_interval = 2500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  metrics::LossConfig loss;
  std::uint64_t seed = 0;
  render::RenderConfig render;  // sampling mode, PSF, f, temperature; seed is overridden by `seed`
  int checkpoint_interval = 0;  // 0 disables periodic checkpoints

  void validate() const;
};

/// Self-describing model snapshot.
///
/// File layout: "UNRF1\n", the header byte count as a decimal line, a JSON
/// header (format version, configs, bounds, per-layer shapes), then every
/// layer's weights and biases as little-endian float32 in layer order.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  ModelVariant variant = ModelVariant::ultra;
  inr::EncodingConfig encoding;
  inr::MlpWeights weights;
  VolumeBounds bounds;
  FrameSpec frame;
  TrainConfig train;
  std::uint64_t iteration = 0;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>");
};

}  // namespace unerf::train
